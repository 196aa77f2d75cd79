use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed-latency DRAM with `banks` identical servers. Each burst occupies
/// one server for the whole access latency; requests take the server that
/// frees up first.
#[derive(Debug, Clone)]
pub struct Dram {
    latency: u64,
    jitter: u64,
    free_at: Vec<u64>,
    rng: ChaCha8Rng,
}

impl Dram {
    pub fn new(latency: u64, banks: usize, jitter: u64, seed: u64) -> Self {
        Self {
            latency,
            jitter,
            free_at: vec![0; banks],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Books one burst arriving at `arrival`; returns its completion cycle.
    pub fn schedule(&mut self, arrival: u64) -> u64 {
        let (bank, &free) = self
            .free_at
            .iter()
            .enumerate()
            .min_by_key(|&(_, f)| *f)
            .expect("at least one bank");
        let extra = if self.jitter > 0 {
            self.rng.gen_range(0..=self.jitter)
        } else {
            0
        };
        let done = arrival.max(free) + self.latency + extra;
        self.free_at[bank] = done;
        done
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banks_serve_in_parallel_then_queue() {
        let mut d = Dram::new(40, 2, 0, 0);
        assert_eq!(d.schedule(0), 40);
        assert_eq!(d.schedule(0), 40);
        assert_eq!(d.schedule(0), 80);
        assert_eq!(d.schedule(100), 140);
    }

    #[test]
    fn single_bank_is_serial() {
        let mut d = Dram::new(7, 1, 0, 0);
        let done: Vec<u64> = (0..4).map(|_| d.schedule(0)).collect();
        assert_eq!(done, vec![7, 14, 21, 28]);
    }
}

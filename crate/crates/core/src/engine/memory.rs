//! Standalone fragment memories for exercising the engine without the full
//! memory-system model.

use super::{EngineError, FragmentMemory, FragmentResponse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn read_bytes(data: &[u8], byte_addr: u64, bytes: usize) -> Result<[u8; 8], EngineError> {
    let start = usize::try_from(byte_addr).map_err(|_| EngineError::Memory(byte_addr))?;
    let src = start
        .checked_add(bytes)
        .filter(|_| bytes <= 8)
        .and_then(|end| data.get(start..end))
        .ok_or(EngineError::Memory(byte_addr))?;
    let mut out = [0u8; 8];
    out[..bytes].copy_from_slice(src);
    Ok(out)
}

/// Every read completes after the same latency.
#[derive(Debug, Clone)]
pub struct FixedLatencyMemory {
    pub data: Vec<u8>,
    pub latency: u64,
}

impl FixedLatencyMemory {
    pub fn new(data: Vec<u8>, latency: u64) -> Self {
        Self { data, latency }
    }
}

impl FragmentMemory for FixedLatencyMemory {
    fn fragment_read(
        &mut self,
        now: u64,
        byte_addr: u64,
        bytes: usize,
    ) -> Result<FragmentResponse, EngineError> {
        Ok(FragmentResponse {
            ready_cycle: now + self.latency,
            data: read_bytes(&self.data, byte_addr, bytes)?,
        })
    }
}

/// Latency drawn uniformly from `base..=base + jitter` with a seeded RNG, so
/// responses come back out of order but reproducibly.
#[derive(Debug, Clone)]
pub struct JitterMemory {
    pub data: Vec<u8>,
    pub base: u64,
    pub jitter: u64,
    rng: ChaCha8Rng,
}

impl JitterMemory {
    pub fn new(data: Vec<u8>, base: u64, jitter: u64, seed: u64) -> Self {
        Self {
            data,
            base,
            jitter,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl FragmentMemory for JitterMemory {
    fn fragment_read(
        &mut self,
        now: u64,
        byte_addr: u64,
        bytes: usize,
    ) -> Result<FragmentResponse, EngineError> {
        let extra = self.rng.gen_range(0..=self.jitter);
        Ok(FragmentResponse {
            ready_cycle: now + self.base + extra,
            data: read_bytes(&self.data, byte_addr, bytes)?,
        })
    }
}

/// Latencies taken from a list, one per read in issue order; reads past the
/// end of the list use `fallback`.
#[derive(Debug, Clone)]
pub struct ScheduledMemory {
    pub data: Vec<u8>,
    latencies: Vec<u64>,
    next: usize,
    pub fallback: u64,
}

impl ScheduledMemory {
    pub fn new(data: Vec<u8>, latencies: Vec<u64>, fallback: u64) -> Self {
        Self {
            data,
            latencies,
            next: 0,
            fallback,
        }
    }
}

impl FragmentMemory for ScheduledMemory {
    fn fragment_read(
        &mut self,
        now: u64,
        byte_addr: u64,
        bytes: usize,
    ) -> Result<FragmentResponse, EngineError> {
        let latency = self
            .latencies
            .get(self.next)
            .copied()
            .unwrap_or(self.fallback);
        self.next += 1;
        Ok(FragmentResponse {
            ready_cycle: now + latency,
            data: read_bytes(&self.data, byte_addr, bytes)?,
        })
    }
}

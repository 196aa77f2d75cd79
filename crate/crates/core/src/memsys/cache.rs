/// One resident line.
#[derive(Debug, Clone)]
pub struct Way {
    pub line: u64,
    pub dirty: bool,
    /// Bit `i` set once byte `i` of the line has been consumed.
    pub touched: u128,
    /// Cycle at which the fill data is available.
    pub ready: u64,
    /// Brought in by the prefetcher and not yet demanded.
    pub prefetched: bool,
    /// Composed payload for lines of the reorganized space.
    pub data: Option<Box<[u8]>>,
    stamp: u64,
}

impl Way {
    pub fn new(line: u64, ready: u64) -> Self {
        Self {
            line,
            dirty: false,
            touched: 0,
            ready,
            prefetched: false,
            data: None,
            stamp: 0,
        }
    }

    pub fn touched_bytes(&self) -> u64 {
        u64::from(self.touched.count_ones())
    }
}

/// Set-associative cache with true LRU replacement, indexed by line number.
#[derive(Debug, Clone)]
pub struct Llc {
    sets: usize,
    assoc: usize,
    ways: Vec<Option<Way>>,
    clock: u64,
}

impl Llc {
    pub fn new(capacity_lines: usize, assoc: usize) -> Self {
        let sets = (capacity_lines / assoc).max(1);
        Self {
            sets,
            assoc,
            ways: vec![None; sets * assoc],
            clock: 0,
        }
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    fn set_range(&self, line: u64) -> std::ops::Range<usize> {
        let s = (line % self.sets as u64) as usize;
        s * self.assoc..(s + 1) * self.assoc
    }

    fn find(&self, line: u64) -> Option<usize> {
        self.set_range(line)
            .find(|&i| self.ways[i].as_ref().is_some_and(|w| w.line == line))
    }

    pub fn contains(&self, line: u64) -> bool {
        self.find(line).is_some()
    }

    /// Looks a line up and, if present, marks it most recently used.
    pub fn lookup(&mut self, line: u64) -> Option<&mut Way> {
        let i = self.find(line)?;
        self.clock += 1;
        let w = self.ways[i].as_mut().unwrap();
        w.stamp = self.clock;
        Some(w)
    }

    /// Like [`lookup`](Self::lookup) without touching LRU state.
    pub fn peek(&self, line: u64) -> Option<&Way> {
        self.find(line).and_then(|i| self.ways[i].as_ref())
    }

    /// Installs a line as most recently used; returns the evicted victim.
    pub fn insert(&mut self, mut way: Way) -> Option<Way> {
        debug_assert!(!self.contains(way.line));
        let range = self.set_range(way.line);
        let slot = range
            .clone()
            .find(|&i| self.ways[i].is_none())
            .unwrap_or_else(|| {
                range
                    .min_by_key(|&i| self.ways[i].as_ref().unwrap().stamp)
                    .unwrap()
            });
        self.clock += 1;
        way.stamp = self.clock;
        self.ways[slot].replace(way)
    }

    pub fn remove(&mut self, line: u64) -> Option<Way> {
        let i = self.find(line)?;
        self.ways[i].take()
    }

    pub fn resident(&self) -> impl Iterator<Item = &Way> + '_ {
        self.ways.iter().flatten()
    }
}

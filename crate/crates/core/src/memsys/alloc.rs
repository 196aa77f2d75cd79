use super::MemError;
use std::collections::{BTreeMap, HashMap};

pub const PAGE_BYTES: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub addr: u64,
    pub bytes: u64,
}

impl Allocation {
    pub fn end(&self) -> u64 {
        self.addr + self.bytes
    }
}

/// Page-aligned bump allocator that tracks the live working set. Freed
/// space is not reused, which keeps addresses unique within a run.
#[derive(Debug, Clone)]
pub struct Allocator {
    next: u64,
    live: HashMap<String, Allocation>,
    by_addr: BTreeMap<u64, Allocation>,
    live_bytes: u64,
    peak: u64,
}

impl Allocator {
    pub fn new(base: u64) -> Self {
        Self {
            next: base,
            live: HashMap::new(),
            by_addr: BTreeMap::new(),
            live_bytes: 0,
            peak: 0,
        }
    }

    pub fn alloc(&mut self, bytes: u64, tag: &str) -> Result<Allocation, MemError> {
        if self.live.contains_key(tag) {
            return Err(MemError::DuplicateTag(tag.to_string()));
        }
        let a = Allocation {
            addr: self.next,
            bytes,
        };
        self.next += bytes.max(1).div_ceil(PAGE_BYTES) * PAGE_BYTES;
        self.live.insert(tag.to_string(), a);
        self.by_addr.insert(a.addr, a);
        self.live_bytes += bytes;
        self.peak = self.peak.max(self.live_bytes);
        Ok(a)
    }

    pub fn free(&mut self, tag: &str) -> Result<Allocation, MemError> {
        let a = self
            .live
            .remove(tag)
            .ok_or_else(|| MemError::UnknownTag(tag.to_string()))?;
        self.by_addr.remove(&a.addr);
        self.live_bytes -= a.bytes;
        Ok(a)
    }

    /// Live allocation containing `addr`.
    pub fn containing(&self, addr: u64) -> Option<Allocation> {
        self.by_addr
            .range(..=addr)
            .next_back()
            .map(|(_, a)| *a)
            .filter(|a| addr < a.end())
    }

    pub fn get(&self, tag: &str) -> Option<Allocation> {
        self.live.get(tag).copied()
    }

    pub fn live_bytes(&self) -> u64 {
        self.live_bytes
    }

    pub fn peak(&self) -> u64 {
        self.peak
    }

    /// One past the highest address ever handed out.
    pub fn high_water(&self) -> u64 {
        self.next
    }
}

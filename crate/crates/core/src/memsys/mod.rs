//! Cacheline-granular memory system: DRAM that only moves whole bursts, a
//! set-associative LLC with a stream prefetcher on the conventional path,
//! an allocator that tracks the working set, and the engine on the
//! reorganized path.
//!
//! Addresses at or above [`VIEW_SPACE_BASE`] belong to the reorganized data
//! space. A miss there is served by the engine, whose fragment reads go to
//! DRAM uncached, one full burst each.
//!
//! Cacheline utilization is measured at the cache: every line filled into
//! the LLC delivers `line_bytes`, and the bytes the program actually touches
//! during that residency are the useful part.

mod alloc;
mod cache;
mod dram;
mod log;

pub use alloc::{Allocation, Allocator, PAGE_BYTES};
pub use cache::{Llc, Way};
pub use dram::Dram;
pub use log::{parse_log, write_log, MemEvent, MemOp};

use crate::engine::{
    Engine, EngineConfig, EngineError, FragmentMemory, FragmentResponse, RequestMeta, RetiredLine,
    Trap, ViewRange,
};
use crate::pattern::{AccessPatternSpec, TensorDescriptor};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// First byte address of the reorganized data space.
pub const VIEW_SPACE_BASE: u64 = 1 << 40;
/// Streams tracked by the prefetcher.
pub const STREAM_TABLE_ENTRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModelConfig {
    pub line_bytes: u64,
    /// Cycles a burst occupies its bank.
    pub dram_latency: u64,
    pub dram_banks: usize,
    pub llc_bytes: u64,
    pub llc_assoc: usize,
    pub llc_hit_latency: u64,
    pub prefetch_degree: u64,
    /// Extra uniformly drawn DRAM latency, `0..=latency_jitter`.
    pub latency_jitter: u64,
    pub seed: u64,
}

impl Default for MemoryModelConfig {
    fn default() -> Self {
        Self {
            line_bytes: 64,
            dram_latency: 40,
            dram_banks: 4,
            llc_bytes: 128 * 1024,
            llc_assoc: 16,
            llc_hit_latency: 1,
            prefetch_degree: 2,
            latency_jitter: 0,
            seed: 0,
        }
    }
}

impl MemoryModelConfig {
    pub fn validate(&self) -> Result<(), MemError> {
        let bad = |m: &str| Err(MemError::Config(m.to_string()));
        if !matches!(self.line_bytes, 32 | 64 | 128) {
            return bad("line size must be 32, 64 or 128 bytes");
        }
        if self.dram_latency == 0 || self.dram_banks == 0 || self.llc_assoc == 0 {
            return bad("latency, banks and associativity must be at least 1");
        }
        if self.llc_bytes < self.line_bytes * self.llc_assoc as u64 {
            return bad("LLC smaller than one set");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("invalid memory configuration: {0}")]
    Config(String),
    #[error("tag {0:?} is already live")]
    DuplicateTag(String),
    #[error("no live allocation tagged {0:?}")]
    UnknownTag(String),
    #[error("address {0:#x} is outside simulated memory")]
    OutOfRange(u64),
    #[error("no engine attached")]
    NoEngine,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rw {
    Read,
    Write,
}

/// Snapshot of every counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Bursts of any kind: demand, prefetch, fragment, writeback.
    pub dram_transactions: u64,
    pub dram_bytes_bursted: u64,
    pub useful_bytes: u64,
    /// Bytes filled into the LLC plus standalone reads.
    pub delivered_bytes: u64,
    pub cacheline_utilization: f64,
    /// Set when nothing was delivered; utilization then reads 1.0.
    pub utilization_undefined: bool,
    pub tme_fragments: u64,
    pub tme_lines: u64,
    pub prefetches_issued: u64,
    pub wss_peak: u64,
    pub simulated_cycles: u64,
    pub llc_hits: u64,
    pub llc_misses: u64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes reports as CSV rows under a header of the field names.
    pub fn write_csv<W: std::io::Write>(rows: &[MetricsReport], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counters {
    dram_transactions: u64,
    useful_evicted: u64,
    delivered: u64,
    tme_fragments: u64,
    tme_lines: u64,
    prefetches: u64,
    llc_hits: u64,
    llc_misses: u64,
}

/// DRAM, backing store and counters: everything the engine's fetch unit
/// can reach.
#[derive(Debug, Clone)]
pub struct Backend {
    line_bytes: u64,
    mem: Vec<u8>,
    dram: Dram,
    counters: Counters,
    log: Option<Vec<MemEvent>>,
}

impl Backend {
    fn log(&mut self, cycle: u64, op: MemOp, addr: u64, bytes: u64) {
        if let Some(l) = self.log.as_mut() {
            l.push(MemEvent {
                cycle,
                op,
                addr,
                bytes,
            });
        }
    }

    fn burst(&mut self, now: u64, op: MemOp, addr: u64) -> u64 {
        self.counters.dram_transactions += 1;
        self.log(now, op, addr, self.line_bytes);
        self.dram.schedule(now)
    }

    fn bytes(&self, addr: u64, len: usize) -> Result<&[u8], MemError> {
        usize::try_from(addr)
            .ok()
            .and_then(|a| self.mem.get(a..a.checked_add(len)?))
            .ok_or(MemError::OutOfRange(addr))
    }

    fn bytes_mut(&mut self, addr: u64, len: usize) -> Result<&mut [u8], MemError> {
        usize::try_from(addr)
            .ok()
            .and_then(|a| self.mem.get_mut(a..a.checked_add(len)?))
            .ok_or(MemError::OutOfRange(addr))
    }
}

impl FragmentMemory for Backend {
    fn fragment_read(
        &mut self,
        now: u64,
        byte_addr: u64,
        bytes: usize,
    ) -> Result<FragmentResponse, EngineError> {
        let mut data = [0u8; 8];
        data[..bytes].copy_from_slice(
            self.bytes(byte_addr, bytes)
                .map_err(|_| EngineError::Memory(byte_addr))?,
        );
        self.counters.tme_fragments += 1;
        let ready_cycle = self.burst(now, MemOp::Frag, byte_addr);
        Ok(FragmentResponse { ready_cycle, data })
    }
}

/// A view mapped into the reorganized data space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappedView {
    pub view_id: usize,
    pub range: ViewRange,
}

#[derive(Debug, Clone)]
pub struct MemSystem {
    cfg: MemoryModelConfig,
    llc: Llc,
    backend: Backend,
    allocator: Allocator,
    engine: Option<Engine>,
    streams: VecDeque<u64>,
    next_view: u64,
    now: u64,
}

impl MemSystem {
    pub fn new(cfg: MemoryModelConfig) -> Result<Self, MemError> {
        cfg.validate()?;
        Ok(Self {
            llc: Llc::new((cfg.llc_bytes / cfg.line_bytes) as usize, cfg.llc_assoc),
            backend: Backend {
                line_bytes: cfg.line_bytes,
                mem: Vec::new(),
                dram: Dram::new(
                    cfg.dram_latency,
                    cfg.dram_banks,
                    cfg.latency_jitter,
                    cfg.seed,
                ),
                counters: Counters::default(),
                log: None,
            },
            allocator: Allocator::new(PAGE_BYTES),
            engine: None,
            streams: VecDeque::with_capacity(STREAM_TABLE_ENTRIES),
            next_view: VIEW_SPACE_BASE,
            now: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &MemoryModelConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Charges compute time.
    pub fn tick(&mut self, cycles: u64) {
        self.now += cycles;
    }

    pub fn enable_log(&mut self) {
        self.backend.log.get_or_insert_with(Vec::new);
    }

    pub fn take_log(&mut self) -> Vec<MemEvent> {
        self.backend
            .log
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }

    pub fn allocator(&self) -> &Allocator {
        &self.allocator
    }

    pub fn llc(&self) -> &Llc {
        &self.llc
    }

    pub fn alloc(&mut self, bytes: u64, tag: &str) -> Result<u64, MemError> {
        let a = self.allocator.alloc(bytes, tag)?;
        let top = self.allocator.high_water() as usize;
        if self.backend.mem.len() < top {
            self.backend.mem.resize(top, 0);
        }
        Ok(a.addr)
    }

    pub fn free(&mut self, tag: &str) -> Result<(), MemError> {
        self.allocator.free(tag).map(|_| ())
    }

    /// Direct access to backing memory, bypassing timing and metrics. For
    /// initializing inputs and checking outputs.
    pub fn host_bytes(&self, addr: u64, len: usize) -> Result<&[u8], MemError> {
        self.backend.bytes(addr, len)
    }

    pub fn host_bytes_mut(&mut self, addr: u64, len: usize) -> Result<&mut [u8], MemError> {
        self.backend.bytes_mut(addr, len)
    }

    pub fn attach_engine(&mut self, cfg: EngineConfig) -> Result<(), MemError> {
        if cfg.line_bytes != self.cfg.line_bytes {
            return Err(MemError::Config(format!(
                "engine line size {} differs from memory line size {}",
                cfg.line_bytes, self.cfg.line_bytes
            )));
        }
        self.engine = Some(Engine::new(cfg)?);
        Ok(())
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.as_ref()
    }

    pub fn engine_mut(&mut self) -> Option<&mut Engine> {
        self.engine.as_mut()
    }

    /// Registers `spec` over `tensor` at the next free reorganized address.
    pub fn map_view(
        &mut self,
        spec: &AccessPatternSpec,
        tensor: TensorDescriptor,
    ) -> Result<MappedView, MemError> {
        let lb = self.cfg.line_bytes;
        let engine = self.engine.as_mut().ok_or(MemError::NoEngine)?;
        let range = ViewRange::for_spec(self.next_view, spec, tensor.elem_bytes, lb);
        let view_id = engine.register_view(spec, tensor, range)?;
        self.next_view = (range.end()).div_ceil(PAGE_BYTES) * PAGE_BYTES;
        Ok(MappedView { view_id, range })
    }

    /// Drops a view and any of its lines still cached.
    pub fn unmap_view(&mut self, view: MappedView) -> Result<(), MemError> {
        let engine = self.engine.as_mut().ok_or(MemError::NoEngine)?;
        engine.deregister_view(view.view_id)?;
        let lb = self.cfg.line_bytes;
        for line in view.range.base / lb..view.range.end() / lb {
            if let Some(w) = self.llc.remove(line) {
                self.retire_way(w);
            }
        }
        Ok(())
    }

    fn retire_way(&mut self, w: Way) {
        let lb = self.cfg.line_bytes;
        self.backend.counters.useful_evicted += w.touched_bytes();
        self.backend.log(self.now, MemOp::Evict, w.line * lb, lb);
        if w.dirty {
            self.backend.burst(self.now, MemOp::Wb, w.line * lb);
        }
    }

    fn install(&mut self, way: Way, op: MemOp) {
        let lb = self.cfg.line_bytes;
        let addr = way.line * lb;
        if let Some(victim) = self.llc.insert(way) {
            self.retire_way(victim);
        }
        self.backend.counters.delivered += lb;
        self.backend.log(self.now, op, addr, lb);
    }

    /// Lines `[lo, hi)` of the region the prefetcher may run ahead in.
    fn region(&self, line: u64) -> Option<(u64, u64)> {
        let lb = self.cfg.line_bytes;
        let addr = line * lb;
        if addr >= VIEW_SPACE_BASE {
            let engine = self.engine.as_ref()?;
            let Ok(Trap::Accept { view_id, .. }) = engine.trap(addr) else {
                return None;
            };
            let r = engine.port().range(view_id)?;
            Some((r.base / lb, r.end() / lb))
        } else {
            let a = self.allocator.containing(addr)?;
            Some((a.addr / lb, a.end().div_ceil(lb)))
        }
    }

    /// Trains the stream table on a demand event at `line`; returns the
    /// lines to prefetch.
    fn train(&mut self, line: u64) -> Vec<u64> {
        let hit = self.streams.iter().position(|&l| l + 1 == line);
        match hit {
            Some(i) => {
                self.streams.remove(i);
            }
            None if self.streams.len() == STREAM_TABLE_ENTRIES => {
                self.streams.pop_front();
            }
            None => {}
        }
        self.streams.push_back(line);
        if hit.is_none() || self.cfg.prefetch_degree == 0 {
            return Vec::new();
        }
        let Some((_, hi)) = self.region(line) else {
            return Vec::new();
        };
        (line + 1..=line + self.cfg.prefetch_degree)
            .filter(|&l| l < hi && !self.llc.contains(l))
            .collect()
    }

    fn prefetch_plain(&mut self, lines: Vec<u64>) {
        let lb = self.cfg.line_bytes;
        for l in lines {
            let ready = self.backend.burst(self.now, MemOp::Dram, l * lb);
            self.backend.counters.prefetches += 1;
            let mut w = Way::new(l, ready);
            w.prefetched = true;
            self.install(w, MemOp::Prefetch);
        }
    }

    /// Runs the engine for `lines` and installs them. With `demand` the
    /// first line is a demand fill and the rest are prefetches. Returns the
    /// first line's arrival cycle.
    fn fill_view(&mut self, lines: &[u64], demand: bool) -> Result<u64, MemError> {
        let lb = self.cfg.line_bytes;
        let engine = self.engine.as_mut().ok_or(MemError::NoEngine)?;
        engine.advance_to(self.now);
        for &l in lines {
            if engine.submit(RequestMeta {
                addr: l * lb,
                ..Default::default()
            })? == Trap::Miss
            {
                return Err(MemError::OutOfRange(l * lb));
            }
        }
        engine.run_until_idle(&mut self.backend)?;
        let retired: Vec<RetiredLine> = engine.drain_retired().collect();
        let mut demand_ready = self.now;
        for (i, r) in retired.into_iter().enumerate() {
            let mut w = Way::new(r.meta.addr / lb, r.cycle);
            w.data = Some(r.payload.into_boxed_slice());
            if i == 0 {
                demand_ready = r.cycle;
            }
            if i == 0 && demand {
                self.install(w, MemOp::Fill);
            } else {
                w.prefetched = true;
                self.backend.counters.prefetches += 1;
                self.install(w, MemOp::Prefetch);
            }
            self.backend.counters.tme_lines += 1;
        }
        Ok(demand_ready)
    }

    /// One access confined to a single line.
    fn line_access(&mut self, addr: u64, len: u64, rw: Rw) -> Result<(), MemError> {
        let lb = self.cfg.line_bytes;
        let line = addr / lb;
        let view = addr >= VIEW_SPACE_BASE;
        if view && rw == Rw::Write {
            let engine = self.engine.as_mut().ok_or(MemError::NoEngine)?;
            engine.submit_write(addr)?;
            return Err(MemError::OutOfRange(addr));
        }
        if !view {
            self.backend.bytes(addr, len as usize)?;
        }
        let first_demand = match self.llc.lookup(line) {
            Some(w) => {
                self.backend.counters.llc_hits += 1;
                let ready = w.ready;
                let first = std::mem::take(&mut w.prefetched);
                self.now = self.now.max(ready);
                first
            }
            None => {
                self.backend.counters.llc_misses += 1;
                let ahead = self.train(line);
                if view {
                    let mut group = vec![line];
                    group.extend(ahead);
                    self.now = self.fill_view(&group, true)?;
                } else {
                    let ready = self.backend.burst(self.now, MemOp::Dram, line * lb);
                    self.install(Way::new(line, ready), MemOp::Fill);
                    self.prefetch_plain(ahead);
                    self.now = ready;
                }
                false
            }
        };
        let off = addr % lb;
        let mask = if len as u32 >= u128::BITS {
            u128::MAX
        } else {
            ((1u128 << len) - 1) << off
        };
        let w = self.llc.lookup(line).expect("line just filled or hit");
        w.touched |= mask;
        w.dirty |= rw == Rw::Write;
        self.now += self.cfg.llc_hit_latency;
        self.backend.log(self.now, MemOp::Access, addr, len);
        if first_demand {
            let ahead = self.train(line);
            if view {
                if !ahead.is_empty() {
                    self.fill_view(&ahead, false)?;
                }
            } else {
                self.prefetch_plain(ahead);
            }
        }
        Ok(())
    }

    /// Conventional-path access of `len` bytes at `addr`, through the LLC.
    /// Returns the cycles it took.
    pub fn access(&mut self, addr: u64, len: u64, rw: Rw) -> Result<u64, MemError> {
        let start = self.now;
        let lb = self.cfg.line_bytes;
        let mut a = addr;
        let end = addr + len;
        while a < end {
            let n = (lb - a % lb).min(end - a);
            self.line_access(a, n, rw)?;
            a += n;
        }
        Ok(self.now - start)
    }

    pub fn read(&mut self, addr: u64, out: &mut [u8]) -> Result<(), MemError> {
        self.access(addr, out.len() as u64, Rw::Read)?;
        if addr >= VIEW_SPACE_BASE {
            let lb = self.cfg.line_bytes;
            let mut done = 0;
            while done < out.len() {
                let a = addr + done as u64;
                let off = (a % lb) as usize;
                let n = (lb as usize - off).min(out.len() - done);
                let w = self.llc.peek(a / lb).ok_or(MemError::OutOfRange(a))?;
                let data = w.data.as_ref().ok_or(MemError::OutOfRange(a))?;
                out[done..done + n].copy_from_slice(&data[off..off + n]);
                done += n;
            }
        } else {
            out.copy_from_slice(self.backend.bytes(addr, out.len())?);
        }
        Ok(())
    }

    pub fn write(&mut self, addr: u64, bytes: &[u8]) -> Result<(), MemError> {
        self.access(addr, bytes.len() as u64, Rw::Write)?;
        self.backend
            .bytes_mut(addr, bytes.len())?
            .copy_from_slice(bytes);
        Ok(())
    }

    /// Reads an unsigned little-endian element of 1, 2, 4 or 8 bytes.
    pub fn read_elem(&mut self, addr: u64, elem_bytes: u64) -> Result<u64, MemError> {
        let mut buf = [0u8; 8];
        self.read(addr, &mut buf[..elem_bytes as usize])?;
        Ok(u64::from_le_bytes(buf))
    }

    pub fn write_elem(&mut self, addr: u64, elem_bytes: u64, value: u64) -> Result<(), MemError> {
        self.write(addr, &value.to_le_bytes()[..elem_bytes as usize])
    }

    /// Uncached read of `want` bytes: one full burst, `want` useful bytes.
    pub fn dram_read(&mut self, addr: u64, want: u64) -> Result<(Vec<u8>, u64), MemError> {
        let lb = self.cfg.line_bytes;
        if want > lb {
            return Err(MemError::Config(format!(
                "{want} bytes exceed one {lb}-byte burst"
            )));
        }
        let data = self.backend.bytes(addr, want as usize)?.to_vec();
        self.backend.log(self.now, MemOp::Read, addr, want);
        let c = &mut self.backend.counters;
        c.dram_transactions += 1;
        c.delivered += lb;
        c.useful_evicted += want;
        let done = self.backend.dram.schedule(self.now);
        Ok((data, done - self.now))
    }

    /// Sends line reads straight to the engine, bypassing the LLC, and
    /// returns the composed lines in retirement order. Time advances to the
    /// last retirement.
    pub fn engine_fetch(&mut self, line_addrs: &[u64]) -> Result<Vec<RetiredLine>, MemError> {
        let engine = self.engine.as_mut().ok_or(MemError::NoEngine)?;
        engine.advance_to(self.now);
        for &a in line_addrs {
            if engine.submit(RequestMeta {
                addr: a,
                ..Default::default()
            })? == Trap::Miss
            {
                return Err(MemError::OutOfRange(a));
            }
        }
        let end = engine.run_until_idle(&mut self.backend)?;
        let lines: Vec<RetiredLine> = engine.drain_retired().collect();
        self.backend.counters.tme_lines += lines.len() as u64;
        self.now = self.now.max(end);
        Ok(lines)
    }

    pub fn report(&self) -> MetricsReport {
        let c = &self.backend.counters;
        let resident: u64 = self.llc.resident().map(Way::touched_bytes).sum();
        let useful = c.useful_evicted + resident;
        let (util, undefined) = if c.delivered == 0 {
            (1.0, true)
        } else {
            (useful as f64 / c.delivered as f64, false)
        };
        MetricsReport {
            dram_transactions: c.dram_transactions,
            dram_bytes_bursted: c.dram_transactions * self.cfg.line_bytes,
            useful_bytes: useful,
            delivered_bytes: c.delivered,
            cacheline_utilization: util,
            utilization_undefined: undefined,
            tme_fragments: c.tme_fragments,
            tme_lines: c.tme_lines,
            prefetches_issued: c.prefetches,
            wss_peak: self.allocator.peak(),
            simulated_cycles: self.now,
            llc_hits: c.llc_hits,
            llc_misses: c.llc_misses,
        }
    }
}

//! Transaction-level model of the engine datapath.
//!
//! A line request moves through the stages below; every stage is a plain
//! method so tests can drive them one at a time, and [`Engine::step`]
//! sequences them with cycle accounting.
//!
//! ```text
//! submit -> trapper (1 cycle) -> monitor/ROB admit (1 cycle)
//!        -> preparator (n_max cycles) -> RDG (1 descriptor/cycle, FIFO)
//!        -> fetch unit (<= l_max in flight) -> memory
//!        -> complete (out of order) -> retire (oldest first, 1/cycle)
//! ```
//!
//! For a single request with a fixed memory latency `M` and no capacity
//! stalls, the line retires `n_max + line_elems + M + 1` cycles after it was
//! submitted.

mod fetch;
mod memory;
mod port;
mod rob;
mod trace;

pub use fetch::{FetchTable, FetchTableEntry};
pub use memory::{FixedLatencyMemory, JitterMemory, ScheduledMemory};
pub use port::{ConfigPort, Deregistered, Trap, ViewRange};
pub use rob::{RequestMeta, Rob, RobEntry};
pub use trace::{parse_trace, write_trace, TraceError, TraceEvent, TraceKind};

use crate::pattern::{
    AccessPatternSpec, FragmentDescriptor, LineRequest, OffsetCursor, TensorDescriptor,
};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

/// Cycles spent in the trapper before a request reaches the monitor.
pub const TRAPPER_CYCLES: u64 = 1;
/// Cycles of monitor bookkeeping between ROB allocation and the preparator.
pub const MONITOR_CYCLES: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EngineConfig {
    /// Dimensions per specification.
    pub n_max: usize,
    /// Reorder-buffer depth.
    pub m_max: usize,
    /// Fetch-unit transaction IDs.
    pub l_max: usize,
    /// Configuration-port slots.
    pub d_slots: usize,
    pub line_bytes: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_max: 4,
            m_max: 8,
            l_max: 16,
            d_slots: 4,
            line_bytes: 64,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n_max == 0 || self.m_max == 0 || self.l_max == 0 || self.d_slots == 0 {
            return Err(EngineError::Config(
                "all capacities must be at least 1".into(),
            ));
        }
        if self.d_slots > 32 {
            return Err(EngineError::Config(
                "at most 32 slots fit the validity mask".into(),
            ));
        }
        if !matches!(self.line_bytes, 32 | 64 | 128) {
            return Err(EngineError::Config(format!(
                "line size {} is not 32, 64 or 128",
                self.line_bytes
            )));
        }
        Ok(())
    }

    /// Preparator depth: one division/modulo stage per dimension.
    pub fn preparator_cycles(&self) -> u64 {
        self.n_max as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("all {0} configuration slots are in use")]
    PortFull(usize),
    #[error("view {0} still has requests in flight")]
    Busy(usize),
    #[error("address {0:#x} is not line-aligned")]
    Unaligned(u64),
    #[error("write to registered range at {0:#x}")]
    ReadOnly(u64),
    #[error("reorder buffer full")]
    RobFull,
    #[error("fetch table full")]
    FetchFull,
    #[error("no live ROB entry {0}")]
    NoSuchEntry(usize),
    #[error("ROB entry {0} has not been prepared")]
    NotPrepared(usize),
    #[error("view {0} is not registered")]
    UnknownView(usize),
    #[error("protocol fault: unknown transaction id {0}")]
    UnknownTxn(usize),
    #[error("protocol fault: payload of {got} bytes for {want}-byte fragment")]
    PayloadSize { got: usize, want: usize },
    #[error("memory fault at {0:#x}")]
    Memory(u64),
    #[error(transparent)]
    Pattern(#[from] crate::pattern::PatternError),
}

/// A posted fragment read, as seen by the memory side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentResponse {
    /// Cycle at which the response reaches the fetch unit.
    pub ready_cycle: u64,
    /// First `bytes` entries are the payload.
    pub data: [u8; 8],
}

/// Memory reachable from the fetch unit.
pub trait FragmentMemory {
    fn fragment_read(
        &mut self,
        now: u64,
        byte_addr: u64,
        bytes: usize,
    ) -> Result<FragmentResponse, EngineError>;
}

/// Prepared counters and when the preparator hands them on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prepared {
    pub counters: Vec<u64>,
    pub ready_cycle: u64,
}

/// What the fetch unit must post to memory for one descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchTicket {
    pub txn_id: usize,
    pub byte_addr: u64,
    pub bytes: usize,
}

/// A fully composed line leaving the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetiredLine {
    pub request: LineRequest,
    pub meta: RequestMeta,
    pub payload: Vec<u8>,
    pub arrival_index: u64,
    pub cycle: u64,
}

/// Descriptor generator state for one ROB entry: emits `line_elems`
/// descriptors, padding slots past the logical length.
#[derive(Debug, Clone)]
pub struct DescriptorStream {
    rob_index: usize,
    tensor_base: u64,
    cursor: OffsetCursor,
    next_slot: u64,
    line_elems: u64,
}

impl DescriptorStream {
    pub fn rob_index(&self) -> usize {
        self.rob_index
    }

    fn peek_is_padding(&self) -> bool {
        self.cursor.len() == 0
    }
}

impl Iterator for DescriptorStream {
    type Item = FragmentDescriptor;

    fn next(&mut self) -> Option<FragmentDescriptor> {
        if self.next_slot == self.line_elems {
            return None;
        }
        let d = FragmentDescriptor {
            tensor_base: self.tensor_base,
            elem_offset: self.cursor.next(),
            slot: self.next_slot as u32,
        };
        self.next_slot += 1;
        Some(d)
    }
}

/// Per-cycle summary returned by [`Engine::step`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub cycle: u64,
    pub completed: usize,
    pub retired: Option<u64>,
    pub issued: Option<usize>,
    pub admitted: bool,
    pub rob_stall: bool,
    pub fetch_stall: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct EngineStats {
    pub requests: u64,
    pub lines_retired: u64,
    pub fragments_issued: u64,
    pub fragments_completed: u64,
    pub padded_slots: u64,
    pub rob_stall_cycles: u64,
    pub fetch_stall_cycles: u64,
    pub peak_rob: usize,
    pub peak_fetch: usize,
}

#[derive(Debug, Clone)]
struct Trapped {
    request: LineRequest,
    meta: RequestMeta,
    ready: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    ready: u64,
    seq: u64,
    txn_id: usize,
    data: [u8; 8],
}

#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    port: ConfigPort,
    cycle: u64,
    trapped: VecDeque<Trapped>,
    rob: Rob,
    prep: VecDeque<(u64, usize)>,
    rdg_queue: VecDeque<usize>,
    active: Option<DescriptorStream>,
    fetch: FetchTable,
    responses: BinaryHeap<Reverse<Pending>>,
    retired: VecDeque<RetiredLine>,
    seq: u64,
    stats: EngineStats,
    trace: Option<Vec<TraceEvent>>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        Ok(Self {
            port: ConfigPort::new(cfg.d_slots, cfg.n_max, cfg.line_bytes),
            cycle: 0,
            trapped: VecDeque::new(),
            rob: Rob::new(cfg.m_max),
            prep: VecDeque::new(),
            rdg_queue: VecDeque::new(),
            active: None,
            fetch: FetchTable::new(cfg.l_max),
            responses: BinaryHeap::new(),
            retired: VecDeque::new(),
            seq: 0,
            stats: EngineStats::default(),
            trace: None,
            cfg,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn port(&self) -> &ConfigPort {
        &self.port
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn rob(&self) -> &Rob {
        &self.rob
    }

    pub fn fetch_table(&self) -> &FetchTable {
        &self.fetch
    }

    /// Starts recording trace events.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn record(&mut self, kind: TraceKind, addr: u64, view: Option<usize>, txn: Option<usize>) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent {
                cycle: self.cycle,
                kind,
                addr,
                view,
                txn,
            });
        }
    }

    /// Moves an idle engine forward in time. Never moves backwards.
    pub fn advance_to(&mut self, cycle: u64) {
        self.cycle = self.cycle.max(cycle);
    }

    pub fn register_view(
        &mut self,
        spec: &AccessPatternSpec,
        tensor: TensorDescriptor,
        range: ViewRange,
    ) -> Result<usize, EngineError> {
        self.port.register_view(spec, tensor, range)
    }

    fn references_view(&self, view_id: usize) -> bool {
        self.trapped.iter().any(|t| t.request.view_id == view_id)
            || self.rob.iter().any(|e| e.request.view_id == view_id)
    }

    pub fn deregister_view(&mut self, view_id: usize) -> Result<Deregistered, EngineError> {
        if self.port.is_valid(view_id) && self.references_view(view_id) {
            return Err(EngineError::Busy(view_id));
        }
        Ok(self.port.clear(view_id))
    }

    pub fn trap(&self, byte_addr: u64) -> Result<Trap, EngineError> {
        self.port.trap(byte_addr)
    }

    /// Presents a line read to the trapper. Accepted requests queue for the
    /// monitor; they are never dropped.
    pub fn submit(&mut self, meta: RequestMeta) -> Result<Trap, EngineError> {
        let trap = self.port.trap(meta.addr)?;
        match trap {
            Trap::Accept {
                view_id,
                element_offset,
            } => {
                let elem_bytes = self.port.tensor(view_id).expect("accepted view").elem_bytes;
                self.trapped.push_back(Trapped {
                    request: LineRequest {
                        view_id,
                        offset: element_offset,
                        line_elems: self.cfg.line_bytes / elem_bytes,
                    },
                    meta,
                    ready: self.cycle + TRAPPER_CYCLES,
                });
                self.stats.requests += 1;
                self.record(TraceKind::Trap, meta.addr, Some(view_id), None);
            }
            Trap::Miss => self.record(TraceKind::Miss, meta.addr, None, None),
        }
        Ok(trap)
    }

    /// Writes into a registered range fault; elsewhere they are not ours.
    pub fn submit_write(&mut self, byte_addr: u64) -> Result<Trap, EngineError> {
        let line = byte_addr - byte_addr % self.cfg.line_bytes;
        match self.port.trap(line)? {
            Trap::Accept { .. } => Err(EngineError::ReadOnly(byte_addr)),
            Trap::Miss => Ok(Trap::Miss),
        }
    }

    /// Allocates a ROB entry for a trapped request.
    pub fn enqueue_request(
        &mut self,
        request: LineRequest,
        meta: RequestMeta,
    ) -> Result<usize, EngineError> {
        if !self.port.is_valid(request.view_id) {
            return Err(EngineError::UnknownView(request.view_id));
        }
        let index = self
            .rob
            .allocate(request, meta, self.cfg.line_bytes as usize)
            .ok_or(EngineError::RobFull)?;
        self.stats.peak_rob = self.stats.peak_rob.max(self.rob.live());
        Ok(index)
    }

    /// Runs the preparator for a ROB entry: per-dimension counters of its
    /// offset, available `n_max` cycles later.
    pub fn prepare(&mut self, rob_index: usize) -> Result<Prepared, EngineError> {
        let entry = self
            .rob
            .get(rob_index)
            .ok_or(EngineError::NoSuchEntry(rob_index))?;
        let spec = self
            .port
            .spec(entry.request.view_id)
            .ok_or(EngineError::UnknownView(entry.request.view_id))?;
        let counters = spec.dim_counters(entry.request.offset)?;
        self.rob.get_mut(rob_index).unwrap().counters = Some(counters.clone());
        Ok(Prepared {
            counters,
            ready_cycle: self.cycle + self.cfg.preparator_cycles(),
        })
    }

    /// Descriptor stream for a prepared entry, resuming from its counters.
    pub fn generate_descriptors(&self, rob_index: usize) -> Result<DescriptorStream, EngineError> {
        let entry = self
            .rob
            .get(rob_index)
            .ok_or(EngineError::NoSuchEntry(rob_index))?;
        let counters = entry
            .counters
            .clone()
            .ok_or(EngineError::NotPrepared(rob_index))?;
        let view = entry.request.view_id;
        let spec = self.port.spec(view).ok_or(EngineError::UnknownView(view))?;
        let tensor = self.port.tensor(view).expect("valid view has a tensor");
        Ok(DescriptorStream {
            rob_index,
            tensor_base: tensor.base,
            cursor: spec.cursor_at(counters, entry.request.offset)?,
            next_slot: 0,
            line_elems: entry.request.line_elems,
        })
    }

    /// Hands a descriptor to the fetch unit. Padding slots complete at once
    /// and return `None`; real fragments get a transaction ID.
    pub fn issue_fetch(
        &mut self,
        rob_index: usize,
        descriptor: FragmentDescriptor,
    ) -> Result<Option<FetchTicket>, EngineError> {
        let entry = self
            .rob
            .get_mut(rob_index)
            .ok_or(EngineError::NoSuchEntry(rob_index))?;
        let view = entry.request.view_id;
        let elem_bytes = self
            .port
            .tensor(view)
            .ok_or(EngineError::UnknownView(view))?
            .elem_bytes;
        let Some(byte_addr) = descriptor.byte_addr(elem_bytes) else {
            entry.completed += 1;
            self.stats.padded_slots += 1;
            return Ok(None);
        };
        let txn_id = self
            .fetch
            .allocate(descriptor, rob_index, self.cycle, byte_addr)
            .ok_or(EngineError::FetchFull)?;
        self.stats.fragments_issued += 1;
        self.stats.peak_fetch = self.stats.peak_fetch.max(self.fetch.live());
        self.record(TraceKind::Issue, byte_addr, Some(view), Some(txn_id));
        Ok(Some(FetchTicket {
            txn_id,
            byte_addr,
            bytes: elem_bytes as usize,
        }))
    }

    fn fragment_bytes(&self, txn_id: usize) -> Result<usize, EngineError> {
        let e = self
            .fetch
            .get(txn_id)
            .ok_or(EngineError::UnknownTxn(txn_id))?;
        let entry = self
            .rob
            .get(e.rob_index)
            .ok_or(EngineError::NoSuchEntry(e.rob_index))?;
        Ok(entry.payload.len() / entry.request.line_elems as usize)
    }

    /// Places a fragment response in its slot of the owning line.
    pub fn complete_fetch(&mut self, txn_id: usize, payload: &[u8]) -> Result<(), EngineError> {
        let e = *self
            .fetch
            .get(txn_id)
            .ok_or(EngineError::UnknownTxn(txn_id))?;
        let elem_bytes = self.fragment_bytes(txn_id)?;
        let entry = self.rob.get_mut(e.rob_index).expect("checked above");
        if payload.len() != elem_bytes {
            return Err(EngineError::PayloadSize {
                got: payload.len(),
                want: elem_bytes,
            });
        }
        let at = e.descriptor.slot as usize * elem_bytes;
        entry.payload[at..at + elem_bytes].copy_from_slice(payload);
        entry.completed += 1;
        debug_assert!(entry.completed <= entry.request.line_elems);
        let view = entry.request.view_id;
        self.fetch.release(txn_id);
        self.stats.fragments_completed += 1;
        self.record(TraceKind::Complete, e.byte_addr, Some(view), Some(txn_id));
        Ok(())
    }

    /// Pops the oldest line iff it is complete.
    pub fn retire(&mut self) -> Option<RetiredLine> {
        let entry = self.rob.retire()?;
        self.stats.lines_retired += 1;
        self.record(
            TraceKind::Retire,
            entry.meta.addr,
            Some(entry.request.view_id),
            None,
        );
        Some(RetiredLine {
            request: entry.request,
            meta: entry.meta,
            payload: entry.payload,
            arrival_index: entry.arrival_index,
            cycle: self.cycle,
        })
    }

    /// Lines retired by [`step`](Self::step) and not yet collected.
    pub fn pop_retired(&mut self) -> Option<RetiredLine> {
        self.retired.pop_front()
    }

    pub fn drain_retired(&mut self) -> impl Iterator<Item = RetiredLine> + '_ {
        self.retired.drain(..)
    }

    /// True when no request is anywhere in the pipeline.
    pub fn is_idle(&self) -> bool {
        self.trapped.is_empty()
            && self.rob.live() == 0
            && self.prep.is_empty()
            && self.rdg_queue.is_empty()
            && self.active.is_none()
            && self.responses.is_empty()
    }

    /// Advances one cycle.
    pub fn step(&mut self, mem: &mut dyn FragmentMemory) -> Result<CycleReport, EngineError> {
        let now = self.cycle;
        let mut report = CycleReport {
            cycle: now,
            ..Default::default()
        };

        while let Some(Reverse(p)) = self.responses.peek() {
            if p.ready > now {
                break;
            }
            let p = self.responses.pop().unwrap().0;
            let bytes = self.fragment_bytes(p.txn_id)?;
            self.complete_fetch(p.txn_id, &p.data[..bytes])?;
            report.completed += 1;
        }

        if let Some(line) = self.retire() {
            report.retired = Some(line.arrival_index);
            self.retired.push_back(line);
        }

        while let Some(&(ready, idx)) = self.prep.front() {
            if ready > now {
                break;
            }
            self.prep.pop_front();
            self.rdg_queue.push_back(idx);
        }

        if self.active.is_none() {
            if let Some(idx) = self.rdg_queue.pop_front() {
                self.active = Some(self.generate_descriptors(idx)?);
            }
        }
        if let Some(stream) = self.active.as_mut() {
            if !stream.peek_is_padding() && self.fetch.is_full() {
                report.fetch_stall = true;
                self.stats.fetch_stall_cycles += 1;
            } else {
                let rob_index = stream.rob_index;
                let d = stream.next().expect("active stream has a descriptor");
                if stream.next_slot == stream.line_elems {
                    self.active = None;
                }
                if let Some(ticket) = self.issue_fetch(rob_index, d)? {
                    let resp = mem.fragment_read(now, ticket.byte_addr, ticket.bytes)?;
                    self.seq += 1;
                    self.responses.push(Reverse(Pending {
                        ready: resp.ready_cycle.max(now + 1),
                        seq: self.seq,
                        txn_id: ticket.txn_id,
                        data: resp.data,
                    }));
                    report.issued = Some(ticket.txn_id);
                }
            }
        }

        let rob_full = self.rob.is_full();
        if rob_full && self.trapped.front().is_some_and(|t| t.ready <= now) {
            report.rob_stall = true;
            self.stats.rob_stall_cycles += 1;
        } else if !rob_full {
            if let Some(t) = self.trapped.pop_front_if(|t| t.ready <= now) {
                let idx = self.enqueue_request(t.request, t.meta)?;
                let prepared = self.prepare(idx)?;
                self.prep
                    .push_back((prepared.ready_cycle + MONITOR_CYCLES, idx));
                self.record(TraceKind::Admit, t.meta.addr, Some(t.request.view_id), None);
                report.admitted = true;
            }
        }

        self.cycle += 1;
        Ok(report)
    }

    /// Earliest cycle at which a step can change anything, if any.
    fn next_event(&self) -> Option<u64> {
        let now = self.cycle;
        let mut next: Option<u64> = None;
        let mut consider =
            |c: u64| next = Some(next.map_or(c.max(now), |n: u64| n.min(c.max(now))));
        if self.rob.oldest().is_some_and(RobEntry::is_complete) {
            consider(now);
        }
        match &self.active {
            Some(s) if s.peek_is_padding() || !self.fetch.is_full() => consider(now),
            None if !self.rdg_queue.is_empty() => consider(now),
            _ => {}
        }
        if let Some(&(ready, _)) = self.prep.front() {
            consider(ready);
        }
        if let Some(t) = self.trapped.front() {
            if !self.rob.is_full() {
                consider(t.ready);
            }
        }
        if let Some(Reverse(p)) = self.responses.peek() {
            consider(p.ready);
        }
        next
    }

    /// Steps until the pipeline drains, skipping cycles in which nothing can
    /// happen. Returns the cycle after the last productive step.
    pub fn run_until_idle(&mut self, mem: &mut dyn FragmentMemory) -> Result<u64, EngineError> {
        while !self.is_idle() {
            let Some(next) = self.next_event() else {
                unreachable!("busy engine with no pending event");
            };
            self.cycle = next;
            self.step(mem)?;
        }
        Ok(self.cycle)
    }
}

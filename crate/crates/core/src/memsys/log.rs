//! Optional memory event log, CSV with header `cycle,op,addr,bytes`.

use std::io::{Read, Write};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemOp {
    /// Demand line fill into the LLC.
    Fill,
    /// Prefetched line fill into the LLC.
    Prefetch,
    /// Consumption of `bytes` at `addr` (within one line).
    Access,
    Evict,
    /// Line burst on behalf of the cache.
    Dram,
    /// Fragment burst issued by the engine.
    Frag,
    /// Dirty-line writeback burst.
    Wb,
    /// Standalone uncached read of `bytes`.
    Read,
}

impl MemOp {
    pub fn as_str(self) -> &'static str {
        match self {
            MemOp::Fill => "fill",
            MemOp::Prefetch => "prefetch",
            MemOp::Access => "access",
            MemOp::Evict => "evict",
            MemOp::Dram => "dram",
            MemOp::Frag => "frag",
            MemOp::Wb => "wb",
            MemOp::Read => "read",
        }
    }

    /// Whether the op is one DRAM burst.
    pub fn is_burst(self) -> bool {
        matches!(self, MemOp::Dram | MemOp::Frag | MemOp::Wb | MemOp::Read)
    }
}

impl FromStr for MemOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "fill" => MemOp::Fill,
            "prefetch" => MemOp::Prefetch,
            "access" => MemOp::Access,
            "evict" => MemOp::Evict,
            "dram" => MemOp::Dram,
            "frag" => MemOp::Frag,
            "wb" => MemOp::Wb,
            "read" => MemOp::Read,
            other => return Err(format!("unknown memory op {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemEvent {
    pub cycle: u64,
    pub op: MemOp,
    pub addr: u64,
    pub bytes: u64,
}

const HEADER: [&str; 4] = ["cycle", "op", "addr", "bytes"];

pub fn write_log<W: Write>(events: &[MemEvent], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for e in events {
        w.write_record([
            e.cycle.to_string(),
            e.op.as_str().to_string(),
            e.addr.to_string(),
            e.bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_log<R: Read>(input: R) -> Result<Vec<MemEvent>, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(HEADER) {
        return Err("unexpected header".into());
    }
    let num = |s: Option<&str>| -> Result<u64, String> {
        s.unwrap_or("").parse().map_err(|e| format!("{e}"))
    };
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(MemEvent {
                cycle: num(rec.get(0))?,
                op: rec.get(1).unwrap_or("").parse()?,
                addr: num(rec.get(2))?,
                bytes: num(rec.get(3))?,
            })
        })
        .collect()
}

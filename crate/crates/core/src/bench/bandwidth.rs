use super::oracle::oracle_gather;
use super::BenchError;
use crate::engine::EngineConfig;
use crate::memsys::{MemSystem, MemoryModelConfig};
use crate::pattern::{compile_view, TensorDescriptor, ViewOp};
use serde::Serialize;

pub const ELEM_SIZES: [u64; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthRow {
    pub elem_bytes: u64,
    pub elements: u64,
    pub lines: u64,
    pub dram_transactions: u64,
    pub transactions_per_line: f64,
    pub cycles: u64,
    /// Composed bytes delivered per cycle.
    pub bytes_per_cycle: f64,
}

/// Square side of the swept matrix: 4096 at scale 1.
pub fn sweep_side(scale: u64) -> Result<u64, BenchError> {
    if scale == 0 || 4096 % scale != 0 {
        return Err(BenchError::Scale(format!(
            "scale {scale} does not divide 4096"
        )));
    }
    Ok(4096 / scale)
}

/// Streams every line of a transposed `side x side` matrix through the
/// engine, bypassing the cache, once per element size.
pub fn sweep_bandwidth(
    engine: EngineConfig,
    memory: MemoryModelConfig,
    scale: u64,
) -> Result<Vec<BandwidthRow>, BenchError> {
    let side = sweep_side(scale)?;
    ELEM_SIZES
        .iter()
        .map(|&eb| sweep_one(engine, memory, side, eb))
        .collect()
}

fn sweep_one(
    engine: EngineConfig,
    memory: MemoryModelConfig,
    side: u64,
    eb: u64,
) -> Result<BandwidthRow, BenchError> {
    let mut ms = MemSystem::new(memory)?;
    ms.attach_engine(engine)?;
    let elements = side * side;
    let addr = ms.alloc(elements * eb, "array")?;
    // element i holds i in its low bytes
    let host: Vec<u8> = (0..elements)
        .flat_map(|i| i.to_le_bytes().into_iter().take(eb as usize))
        .collect();
    ms.host_bytes_mut(addr, host.len())?.copy_from_slice(&host);
    let spec = compile_view(&ViewOp::Transpose2D, &[side, side], engine.n_max)?;
    let tensor = TensorDescriptor::at_byte_addr(addr, vec![side, side], eb)?;
    let view = ms.map_view(&spec, tensor)?;
    let lb = memory.line_bytes;
    let lines: Vec<u64> = (0..view.range.len / lb)
        .map(|i| view.range.base + i * lb)
        .collect();
    let before = ms.report();
    let start = ms.now();
    let retired = ms.engine_fetch(&lines)?;
    let cycles = ms.now() - start;
    let after = ms.report();

    let words: Vec<u64> = host
        .chunks(eb as usize)
        .map(|c| {
            let mut w = [0u8; 8];
            w[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(w)
        })
        .collect();
    let expected = oracle_gather(&spec, 0, &words)?;
    let got: Vec<u8> = retired.into_iter().flat_map(|l| l.payload).collect();
    let expected_bytes: Vec<u8> = expected
        .iter()
        .flat_map(|v| v.to_le_bytes().into_iter().take(eb as usize))
        .collect();
    if got[..expected_bytes.len()] != expected_bytes[..] {
        return Err(BenchError::Mismatch(format!(
            "bandwidth sweep payload differs at {eb}-byte elements"
        )));
    }

    let tx = after.dram_transactions - before.dram_transactions;
    let n_lines = lines.len() as u64;
    Ok(BandwidthRow {
        elem_bytes: eb,
        elements,
        lines: n_lines,
        dram_transactions: tx,
        transactions_per_line: tx as f64 / n_lines as f64,
        cycles,
        bytes_per_cycle: (n_lines * lb) as f64 / cycles as f64,
    })
}

pub fn write_bandwidth_csv<W: std::io::Write>(rows: &[BandwidthRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

//! Workloads in a baseline variant, which materializes reorganized
//! intermediates (or, for slicing, reads in place), and an engine variant,
//! which reads the same data through registered views. Every run is checked
//! against a host-side computation of the expected output.

mod bandwidth;
mod oracle;
mod workloads;

pub use bandwidth::{sweep_bandwidth, sweep_side, write_bandwidth_csv, BandwidthRow, ELEM_SIZES};
pub use oracle::{oracle_gather, oracle_gather_bounded, OracleError, ORACLE_BOUND};
pub use workloads::{fill, slicing_shapes, MATMUL_BASE, SLICE_STRIDES};

use crate::engine::EngineConfig;
use crate::memsys::{MemError, MemSystem, MemoryModelConfig, MetricsReport};
use crate::pattern::{CompileError, PatternError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// Default divisor applied to spatial dimensions.
pub const DEFAULT_SCALE: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workload {
    Im2col,
    Conv2d,
    Permutation,
    Unfold,
    Batch2space,
    Matmul,
    Slicing,
}

impl Workload {
    pub const ALL: [Workload; 7] = [
        Workload::Im2col,
        Workload::Conv2d,
        Workload::Permutation,
        Workload::Unfold,
        Workload::Batch2space,
        Workload::Matmul,
        Workload::Slicing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Workload::Im2col => "im2col",
            Workload::Conv2d => "conv2d",
            Workload::Permutation => "permutation",
            Workload::Unfold => "unfold",
            Workload::Batch2space => "batch2space",
            Workload::Matmul => "matmul",
            Workload::Slicing => "slicing",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Workload::Im2col => {
                "patch-matrix expansion of a 1024x1024 image, 2x2 kernel, then GEMM"
            }
            Workload::Conv2d => "direct 2x2 convolution vs. convolution over a patch-matrix view",
            Workload::Permutation => "NHWC (8,512,512,3) to NCHW, then 2x2 convolution per plane",
            Workload::Unfold => "mode-3 unfolding of (8,64,64,128), Hadamard with a second matrix",
            Workload::Batch2space => "eight 64x64x3 images tiled into 128x256x3, 2x2 convolution",
            Workload::Matmul => "2048x2048 recursive matrix product with transposed right operand",
            Workload::Slicing => {
                "strided slice (2,4,2,64) of a byte tensor, Hadamard with a second tensor"
            }
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Workload {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        Workload::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| BenchError::UnknownWorkload(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Tme,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Baseline, Variant::Tme];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Tme => "tme",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "tme" => Ok(Variant::Tme),
            other => Err(BenchError::UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: Workload,
    pub variant: Variant,
    pub scale: u64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(name: Workload, variant: Variant) -> Self {
        Self {
            name,
            variant,
            scale: DEFAULT_SCALE,
            seed: 0,
        }
    }

    /// `<name>-<variant>-<scale>`, the stem of the result file.
    pub fn stem(&self) -> String {
        format!("{}-{}-{}", self.name, self.variant, self.scale)
    }
}

/// Engine and memory parameters shared by every run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub engine: EngineConfig,
    pub memory: MemoryModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadResult {
    pub workload: Workload,
    pub variant: Variant,
    pub scale: u64,
    pub seed: u64,
    /// Digest of the output bytes in order.
    pub checksum: String,
    pub correct: bool,
    pub metrics: MetricsReport,
}

impl WorkloadResult {
    pub fn spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            name: self.workload,
            variant: self.variant,
            scale: self.scale,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown workload {0:?}")]
    UnknownWorkload(String),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("invalid scale: {0}")]
    Scale(String),
    #[error(transparent)]
    Memory(#[from] MemError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("output mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Order-sensitive 64-bit FNV-1a digest.
pub fn checksum(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn output_bytes(values: &[u64], eb: u64) -> Vec<u8> {
    values
        .iter()
        .flat_map(|v| v.to_le_bytes().into_iter().take(eb as usize))
        .collect()
}

/// Runs one workload on a fresh memory system (plus engine for the engine
/// variant). An output that differs from the host computation yields a
/// result with `correct == false`.
pub fn run_workload(spec: &WorkloadSpec, cfg: &BenchConfig) -> Result<WorkloadResult, BenchError> {
    let mut ms = MemSystem::new(cfg.memory)?;
    if spec.variant == Variant::Tme {
        ms.attach_engine(cfg.engine)?;
    }
    let out = workloads::run(spec.name, spec.variant, spec.scale, spec.seed, &mut ms)?;
    let expected = workloads::masked(out.expected, out.elem_bytes);
    let correct = out.output == expected;
    if !correct {
        let at = out.output.iter().zip(&expected).position(|(a, b)| a != b);
        log::error!(
            "{}: output differs from expectation at element {at:?}",
            spec.stem()
        );
    }
    Ok(WorkloadResult {
        workload: spec.name,
        variant: spec.variant,
        scale: spec.scale,
        seed: spec.seed,
        checksum: format!(
            "{:016x}",
            checksum(&output_bytes(&out.output, out.elem_bytes))
        ),
        correct,
        metrics: ms.report(),
    })
}

/// Every workload in both variants.
pub fn full_matrix(scale: u64, seed: u64) -> Vec<WorkloadSpec> {
    Workload::ALL
        .into_iter()
        .flat_map(|name| {
            Variant::BOTH.into_iter().map(move |variant| WorkloadSpec {
                name,
                variant,
                scale,
                seed,
            })
        })
        .collect()
}

/// Runs independent workloads, in parallel when the `parallel` feature is
/// on. Results come back in input order.
pub fn run_matrix(
    specs: &[WorkloadSpec],
    cfg: &BenchConfig,
) -> Vec<Result<WorkloadResult, BenchError>> {
    crate::par::map(specs, |s| run_workload(s, cfg))
}

pub fn run_matrix_sequential(
    specs: &[WorkloadSpec],
    cfg: &BenchConfig,
) -> Vec<Result<WorkloadResult, BenchError>> {
    crate::par::map_sequential(specs, |s| run_workload(s, cfg))
}

#[derive(Debug, Serialize)]
struct ResultFile<'a> {
    workload: Workload,
    variant: Variant,
    scale: u64,
    seed: u64,
    checksum: &'a str,
    correct: bool,
    #[serde(flatten)]
    metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    workload: Workload,
    variant: Variant,
    scale: u64,
    seed: u64,
    checksum: &'a str,
    correct: bool,
    dram_transactions: u64,
    dram_bytes_bursted: u64,
    useful_bytes: u64,
    delivered_bytes: u64,
    cacheline_utilization: f64,
    utilization_undefined: bool,
    tme_fragments: u64,
    tme_lines: u64,
    prefetches_issued: u64,
    wss_peak: u64,
    simulated_cycles: u64,
    llc_hits: u64,
    llc_misses: u64,
}

impl<'a> From<&'a WorkloadResult> for SummaryRow<'a> {
    fn from(r: &'a WorkloadResult) -> Self {
        let m = &r.metrics;
        Self {
            workload: r.workload,
            variant: r.variant,
            scale: r.scale,
            seed: r.seed,
            checksum: &r.checksum,
            correct: r.correct,
            dram_transactions: m.dram_transactions,
            dram_bytes_bursted: m.dram_bytes_bursted,
            useful_bytes: m.useful_bytes,
            delivered_bytes: m.delivered_bytes,
            cacheline_utilization: m.cacheline_utilization,
            utilization_undefined: m.utilization_undefined,
            tme_fragments: m.tme_fragments,
            tme_lines: m.tme_lines,
            prefetches_issued: m.prefetches_issued,
            wss_peak: m.wss_peak,
            simulated_cycles: m.simulated_cycles,
            llc_hits: m.llc_hits,
            llc_misses: m.llc_misses,
        }
    }
}

/// JSON document for one result: run identity, checksum and the flattened
/// metrics.
pub fn result_json(r: &WorkloadResult) -> String {
    let doc = ResultFile {
        workload: r.workload,
        variant: r.variant,
        scale: r.scale,
        seed: r.seed,
        checksum: &r.checksum,
        correct: r.correct,
        metrics: r.metrics,
    };
    serde_json::to_string_pretty(&doc).expect("result serializes") + "\n"
}

pub fn write_summary_csv<W: std::io::Write>(results: &[WorkloadResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(SummaryRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<dir>/<name>-<variant>-<scale>.json` per result and
/// `<dir>/summary.csv`. Returns the paths written.
pub fn write_results(dir: &Path, results: &[WorkloadResult]) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(results.len() + 1);
    for r in results {
        let p = dir.join(format!("{}.json", r.spec().stem()));
        std::fs::write(&p, result_json(r))?;
        paths.push(p);
    }
    let p = dir.join("summary.csv");
    write_summary_csv(results, std::fs::File::create(&p)?)?;
    paths.push(p);
    Ok(paths)
}

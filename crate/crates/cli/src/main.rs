mod config;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use config::{Format, RunConfig};
use std::process::ExitCode;
use tme_core::bench::{
    run_matrix, run_matrix_sequential, sweep_bandwidth, write_bandwidth_csv, write_results,
    write_summary_csv, Workload, WorkloadResult,
};
use tme_core::pattern::{compile_view, encode_slot, AccessPatternSpec, ViewOp};

#[derive(Debug, Parser)]
#[command(name = "tme", version, about = "Tensor memory engine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ViewKind {
    Identity,
    Transpose,
    Permute,
    Unfold,
    Im2col,
    Batch2space,
    Slice,
    Submatrix,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a named view over a shape into a specification
    Compile {
        #[arg(value_enum)]
        view: ViewKind,
        /// Tensor shape, e.g. 4x5
        shape: String,
        /// Axis order for permute, e.g. 0,3,1,2
        #[arg(long)]
        axes: Option<String>,
        /// 1-based unfolding mode
        #[arg(long)]
        mode: Option<usize>,
        /// Kernel for im2col, e.g. 2x2
        #[arg(long)]
        kernel: Option<String>,
        /// Tile grid for batch2space, e.g. 2x4
        #[arg(long)]
        block: Option<String>,
        #[arg(long)]
        strides: Option<String>,
        #[arg(long)]
        offsets: Option<String>,
        #[arg(long)]
        origin: Option<String>,
        #[arg(long)]
        extent: Option<String>,
        #[arg(long, default_value_t = 4)]
        n_max: usize,
    },
    /// Print the element offsets a specification produces
    Trace {
        /// Specification text, e.g. "[(0,1,4),(0,5,4)]"
        spec: String,
        #[arg(long, default_value_t = 0)]
        offset: u64,
        #[arg(long, default_value_t = 16)]
        count: u64,
    },
    /// Run workloads and write result files
    Bench {
        #[command(flatten)]
        run: RunConfig,
        /// Run workloads one after another
        #[arg(long)]
        sequential: bool,
    },
    /// Sweep engine bandwidth over element sizes
    Bandwidth {
        #[command(flatten)]
        run: RunConfig,
    },
    /// List workloads and views
    List,
}

fn list_of(text: &str) -> Result<Vec<u64>> {
    text.split([',', 'x'])
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .with_context(|| format!("bad number {t:?} in {text:?}"))
        })
        .collect()
}

fn pair(text: &Option<String>, flag: &str) -> Result<(u64, u64)> {
    let text = text
        .as_deref()
        .with_context(|| format!("--{flag} is required"))?;
    match list_of(text)?[..] {
        [a, b] => Ok((a, b)),
        _ => bail!("--{flag} takes two numbers, e.g. 2x2"),
    }
}

fn required(text: &Option<String>, flag: &str) -> Result<Vec<u64>> {
    list_of(
        text.as_deref()
            .with_context(|| format!("--{flag} is required"))?,
    )
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_compile(
    view: ViewKind,
    shape: &str,
    axes: Option<String>,
    mode: Option<usize>,
    kernel: Option<String>,
    block: Option<String>,
    strides: Option<String>,
    offsets: Option<String>,
    origin: Option<String>,
    extent: Option<String>,
    n_max: usize,
) -> Result<()> {
    let shape = list_of(shape)?;
    let op = match view {
        ViewKind::Identity => ViewOp::Identity,
        ViewKind::Transpose => ViewOp::Transpose2D,
        ViewKind::Permute => ViewOp::Permute(
            required(&axes, "axes")?
                .into_iter()
                .map(|a| a as usize)
                .collect(),
        ),
        ViewKind::Unfold => ViewOp::UnfoldMode(mode.context("--mode is required")?),
        ViewKind::Im2col => {
            let (kh, kw) = pair(&kernel, "kernel")?;
            ViewOp::Im2col { kh, kw }
        }
        ViewKind::Batch2space => {
            let (block_h, block_w) = pair(&block, "block")?;
            ViewOp::Batch2Space { block_h, block_w }
        }
        ViewKind::Slice => ViewOp::Slice {
            strides: required(&strides, "strides")?,
            offsets: offsets
                .as_deref()
                .map(list_of)
                .transpose()?
                .unwrap_or_default(),
        },
        ViewKind::Submatrix => ViewOp::Submatrix {
            origin: required(&origin, "origin")?,
            extent: required(&extent, "extent")?,
        },
    };
    let spec = compile_view(&op, &shape, n_max)?;
    println!("{spec}");
    println!("register: {}", hex(&encode_slot(&spec, n_max)?));
    Ok(())
}

fn cmd_trace(spec: &str, offset: u64, count: u64) -> Result<()> {
    let spec: AccessPatternSpec = spec.parse()?;
    let offsets = spec.fragment_offsets(offset, count)?;
    let words: Vec<String> = offsets
        .iter()
        .map(|o| o.map_or_else(|| "-".to_string(), |v| v.to_string()))
        .collect();
    println!("{}", words.join(" "));
    Ok(())
}

fn print_results(results: &[WorkloadResult]) {
    println!(
        "{:<12} {:<8} {:<16} {:>7} {:>12} {:>10} {:>8} {:>12}",
        "workload", "variant", "checksum", "correct", "wss_peak", "dram_tx", "util", "cycles"
    );
    for r in results {
        let m = &r.metrics;
        println!(
            "{:<12} {:<8} {:<16} {:>7} {:>12} {:>10} {:>8.4} {:>12}",
            r.workload.name(),
            r.variant.name(),
            r.checksum,
            r.correct,
            m.wss_peak,
            m.dram_transactions,
            m.cacheline_utilization,
            m.simulated_cycles
        );
    }
}

fn cmd_bench(run: RunConfig, sequential: bool) -> Result<bool> {
    let run = run.load()?;
    let specs = run.specs()?;
    let cfg = run.bench_config();
    let outcomes = if sequential {
        run_matrix_sequential(&specs, &cfg)
    } else {
        run_matrix(&specs, &cfg)
    };
    let results = outcomes
        .into_iter()
        .zip(&specs)
        .map(|(r, s)| r.with_context(|| format!("running {}", s.stem())))
        .collect::<Result<Vec<_>>>()?;
    print_results(&results);
    let dir = run.out_dir();
    match run.format() {
        Format::Json => {
            write_results(&dir, &results)?;
        }
        Format::Csv => {
            std::fs::create_dir_all(&dir)?;
            write_summary_csv(&results, std::fs::File::create(dir.join("summary.csv"))?)?;
        }
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.correct)
        .map(|r| r.spec().stem())
        .collect();
    if !failed.is_empty() {
        eprintln!("correctness check failed: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

fn cmd_bandwidth(run: RunConfig) -> Result<()> {
    let run = run.load()?;
    let cfg = run.bench_config();
    let rows = sweep_bandwidth(cfg.engine, cfg.memory, run.scale())?;
    println!(
        "{:>10} {:>10} {:>12} {:>10} {:>12} {:>10}",
        "elem_bytes", "lines", "dram_tx", "tx/line", "cycles", "B/cycle"
    );
    for r in &rows {
        println!(
            "{:>10} {:>10} {:>12} {:>10} {:>12} {:>10.4}",
            r.elem_bytes,
            r.lines,
            r.dram_transactions,
            r.transactions_per_line,
            r.cycles,
            r.bytes_per_cycle
        );
    }
    let dir = run.out_dir();
    std::fs::create_dir_all(&dir)?;
    write_bandwidth_csv(&rows, std::fs::File::create(dir.join("bandwidth.csv"))?)?;
    Ok(())
}

fn cmd_list() {
    println!("workloads:");
    for w in Workload::ALL {
        println!("  {:<12} {}", w.name(), w.describe());
    }
    println!("variants: baseline, tme, both");
    println!("views: identity, transpose, permute --axes, unfold --mode, im2col --kernel,");
    println!(
        "       batch2space --block, slice --strides [--offsets], submatrix --origin --extent"
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Compile {
            view,
            shape,
            axes,
            mode,
            kernel,
            block,
            strides,
            offsets,
            origin,
            extent,
            n_max,
        } => cmd_compile(
            view, &shape, axes, mode, kernel, block, strides, offsets, origin, extent, n_max,
        )
        .map(|_| true),
        Command::Trace {
            spec,
            offset,
            count,
        } => cmd_trace(&spec, offset, count).map(|_| true),
        Command::Bench { run, sequential } => cmd_bench(run, sequential),
        Command::Bandwidth { run } => cmd_bandwidth(run).map(|_| true),
        Command::List => {
            cmd_list();
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

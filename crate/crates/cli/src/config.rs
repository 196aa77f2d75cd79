//! Run configuration: flags and an optional JSON file, merged field by
//! field with flags winning.

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use tme_core::bench::{BenchConfig, Variant, Workload, WorkloadSpec, DEFAULT_SCALE};
use tme_core::engine::EngineConfig;
use tme_core::memsys::MemoryModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantSel {
    Baseline,
    Tme,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Every knob of a run. Unset flags fall back to the config file, then to
/// the defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Workload to run; repeatable
    #[arg(long = "workload")]
    pub workload: Vec<String>,
    /// Run every workload
    #[arg(long)]
    #[serde(rename = "all")]
    pub all: bool,
    #[arg(long, value_enum)]
    pub variant: Option<VariantSel>,
    /// Divisor applied to the spatial dimensions (1 = full size)
    #[arg(long)]
    pub scale: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub l_max: Option<usize>,
    #[arg(long)]
    pub d_slots: Option<usize>,
    #[arg(long)]
    pub line_bytes: Option<u64>,
    #[arg(long)]
    pub dram_latency: Option<u64>,
    #[arg(long)]
    pub dram_banks: Option<usize>,
    #[arg(long)]
    pub llc_bytes: Option<u64>,
    #[arg(long)]
    pub llc_assoc: Option<usize>,
    #[arg(long)]
    pub prefetch_degree: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with any of the fields above
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl RunConfig {
    /// Fills unset fields from `file`.
    pub fn merge(mut self, file: RunConfig) -> RunConfig {
        if self.workload.is_empty() {
            self.workload = file.workload;
        }
        self.all |= file.all;
        macro_rules! take {
            ($($f:ident),*) => { $( self.$f = self.$f.or(file.$f); )* };
        }
        take!(
            variant,
            scale,
            seed,
            n_max,
            m_max,
            l_max,
            d_slots,
            line_bytes,
            dram_latency,
            dram_banks,
            llc_bytes,
            llc_assoc,
            prefetch_degree,
            format
        );
        if self.out.is_none() {
            self.out = file.out;
        }
        self
    }

    /// Applies the `--config` file, if any.
    pub fn load(self) -> Result<RunConfig> {
        match self.config.clone() {
            Some(path) => {
                let file = read_file(&path)?;
                Ok(self.merge(file))
            }
            None => Ok(self),
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        let e = EngineConfig::default();
        let m = MemoryModelConfig::default();
        let line_bytes = self.line_bytes.unwrap_or(e.line_bytes);
        BenchConfig {
            engine: EngineConfig {
                n_max: self.n_max.unwrap_or(e.n_max),
                m_max: self.m_max.unwrap_or(e.m_max),
                l_max: self.l_max.unwrap_or(e.l_max),
                d_slots: self.d_slots.unwrap_or(e.d_slots),
                line_bytes,
            },
            memory: MemoryModelConfig {
                line_bytes,
                dram_latency: self.dram_latency.unwrap_or(m.dram_latency),
                dram_banks: self.dram_banks.unwrap_or(m.dram_banks),
                llc_bytes: self.llc_bytes.unwrap_or(m.llc_bytes),
                llc_assoc: self.llc_assoc.unwrap_or(m.llc_assoc),
                prefetch_degree: self.prefetch_degree.unwrap_or(m.prefetch_degree),
                ..m
            },
        }
    }

    pub fn scale(&self) -> u64 {
        self.scale.unwrap_or(DEFAULT_SCALE)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }

    /// The selected runs, workloads in canonical order.
    pub fn specs(&self) -> Result<Vec<WorkloadSpec>> {
        let mut names: Vec<Workload> = if self.all {
            Workload::ALL.to_vec()
        } else {
            self.workload
                .iter()
                .map(|w| w.parse().map_err(anyhow::Error::from))
                .collect::<Result<_>>()?
        };
        if names.is_empty() {
            bail!("select workloads with --workload <name> or --all");
        }
        names.sort();
        names.dedup();
        let variants: &[Variant] = match self.variant.unwrap_or(VariantSel::Both) {
            VariantSel::Baseline => &[Variant::Baseline],
            VariantSel::Tme => &[Variant::Tme],
            VariantSel::Both => &Variant::BOTH,
        };
        let (scale, seed) = (self.scale(), self.seed.unwrap_or(0));
        Ok(names
            .into_iter()
            .flat_map(|name| {
                variants.iter().map(move |&variant| WorkloadSpec {
                    name,
                    variant,
                    scale,
                    seed,
                })
            })
            .collect())
    }
}

fn read_file(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

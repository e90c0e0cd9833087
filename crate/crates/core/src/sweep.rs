//! Hyperparameter sweeps.
//!
//! A grid is the cross product of draft lengths, temperatures, k-sets and
//! candidate counts. Each cell generates one library, analyses it and checks
//! that its acceptance totals agree with the per-token trace flags. Cells run
//! on a bounded worker pool; the report is assembled in cell order and then
//! ranked by mean NLL.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{library_stats, LibraryStats};
use crate::decode::{
    generate_library, k_value_grid, DecodeConfig, GenerationResult, LibraryInputs, LibraryKind, CANDIDATE_GRID,
    GAMMA_GRID, TEMPERATURE_GRID,
};
use crate::kmer::KmerIndex;
use crate::lm::{LanguageModel, SamplerConfig};

pub const WORKERS_ENV: &str = "SPECMER_WORKERS";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("invalid {WORKERS_ENV} value {0:?}")]
    Workers(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub gamma: Vec<usize>,
    pub temperature: Vec<f64>,
    pub k_values: Vec<Vec<usize>>,
    pub candidates: Vec<usize>,
}

impl SweepGrid {
    /// The full grid: 3 draft lengths, 3 temperatures, 4 k-sets, 4 candidate counts.
    pub fn standard() -> Self {
        Self {
            gamma: GAMMA_GRID.to_vec(),
            temperature: TEMPERATURE_GRID.to_vec(),
            k_values: k_value_grid(),
            candidates: CANDIDATE_GRID.to_vec(),
        }
    }

    /// Cell configurations in grid order, dropping exact duplicates.
    pub fn cells(&self, base: &DecodeConfig) -> Vec<SweepCell> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &gamma in &self.gamma {
            for &t in &self.temperature {
                for ks in &self.k_values {
                    for &c in &self.candidates {
                        let mut k_values = ks.clone();
                        k_values.sort_unstable();
                        k_values.dedup();
                        let config = DecodeConfig {
                            draft_len: gamma,
                            candidates: c,
                            sampler: SamplerConfig { temperature: t, top_p: base.sampler.top_p },
                            k_values,
                            ..base.clone()
                        };
                        let hash = config_hash(&config);
                        if seen.insert(hash.clone()) {
                            out.push(SweepCell { id: out.len(), config, hash });
                        }
                    }
                }
            }
        }
        out
    }

    /// Union of all k values, for building one index that serves every cell.
    pub fn all_k_values(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.k_values.iter().flatten().copied().collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

/// Hex sha256 of the canonical JSON form of a configuration.
pub fn config_hash(cfg: &DecodeConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("configuration serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub id: usize,
    pub config: DecodeConfig,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub reported: (u64, u64),
    pub recounted: (u64, u64),
}

impl Accounting {
    pub fn consistent(&self) -> bool {
        self.reported == self.recounted
    }

    pub fn of(results: &[GenerationResult]) -> Self {
        let mut reported = (0, 0);
        let mut recounted = (0, 0);
        for r in results {
            reported.0 += r.trace.accepted;
            reported.1 += r.trace.rejected;
            let (a, j) = r.trace.recount();
            recounted.0 += a;
            recounted.1 += j;
        }
        Self { reported, recounted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: SweepCell,
    pub stats: Option<LibraryStats>,
    pub accounting: Option<Accounting>,
    pub failures: Vec<(usize, String)>,
    pub error: Option<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Ranked by mean NLL ascending; failed cells last, ties by cell id.
    pub cells: Vec<CellReport>,
}

fn rank_key(c: &CellReport) -> (bool, f64, usize) {
    match &c.stats {
        Some(s) => (false, s.mean_nll, c.cell.id),
        None => (true, 0.0, c.cell.id),
    }
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String, SweepError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "cell",
            "gamma",
            "temperature",
            "top_p",
            "k_values",
            "candidates",
            "mean_nll",
            "top20_nll",
            "top5_nll",
            "acceptance_ratio",
            "accepted",
            "rejected",
            "mean_kmer_score",
            "tokens_per_sec",
            "failures",
            "error",
            "config_hash",
        ])?;
        for c in &self.cells {
            let cfg = &c.cell.config;
            let ks = cfg.k_values.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let s = c.stats.as_ref();
            w.write_record([
                c.cell.id.to_string(),
                cfg.draft_len.to_string(),
                cfg.sampler.temperature.to_string(),
                cfg.sampler.top_p.to_string(),
                ks,
                cfg.candidates.to_string(),
                opt(s.map(|s| s.mean_nll)),
                opt(s.map(|s| s.top20_nll)),
                opt(s.map(|s| s.top5_nll)),
                opt(s.and_then(|s| s.acceptance_ratio)),
                s.map(|s| s.accepted.to_string()).unwrap_or_default(),
                s.map(|s| s.rejected.to_string()).unwrap_or_default(),
                opt(s.and_then(|s| s.mean_kmer_score)),
                opt(s.map(|s| s.throughput.tokens_per_sec)),
                c.failures.len().to_string(),
                c.error.clone().unwrap_or_default(),
                c.cell.hash.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| SweepError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Worker count from [`WORKERS_ENV`], defaulting to the number of logical cores.
pub fn workers_from_env() -> Result<usize, SweepError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(SweepError::Workers(v)),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn run_cell(
    cell: &SweepCell,
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    index: &KmerIndex,
    n: usize,
) -> CellReport {
    let start = Instant::now();
    let mut report =
        CellReport { cell: cell.clone(), stats: None, accounting: None, failures: Vec::new(), error: None, elapsed_ms: 0 };
    let restricted = match index.restrict(&cell.config.k_values) {
        Ok(ix) => ix,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let inputs = LibraryInputs { draft, target, index: Some(&restricted) };
    let outcome = generate_library(LibraryKind::Specmer, n, inputs, &cell.config);
    report.failures = outcome.failures.iter().map(|(i, e)| (*i, e.to_string())).collect();
    let results: Vec<GenerationResult> = outcome.results.into_iter().map(|(_, r)| r).collect();
    report.accounting = Some(Accounting::of(&results));
    match library_stats(&results, target, Some(&restricted)) {
        Ok(s) => report.stats = Some(s),
        Err(e) => report.error = Some(e.to_string()),
    }
    report.elapsed_ms = start.elapsed().as_millis() as u64;
    report
}

/// Runs every cell of `grid` with `n` generations each. `index` must hold
/// every k value the grid uses.
pub fn run_sweep(
    grid: &SweepGrid,
    base: &DecodeConfig,
    n: usize,
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    index: &KmerIndex,
    workers: usize,
) -> Result<SweepReport, SweepError> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(SweepError::EmptyGrid);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let mut reports: Vec<CellReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let r = run_cell(cell, draft, target, index, n);
                if let Some(e) = &r.error {
                    log::warn!("cell {} failed: {e}", cell.id);
                }
                r
            })
            .collect()
    });
    reports.sort_by(|a, b| {
        let (ka, kb) = (rank_key(a), rank_key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2))
    });
    Ok(SweepReport { cells: reports })
}

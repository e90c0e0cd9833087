use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use specmer::decode::{DecodeConfig, GAMMA_GRID, TEMPERATURE_GRID};
use specmer::kmer::parse_k_values;
use specmer::lm::SamplerConfig;
use specmer::manifest::RunManifest;
use specmer::sweep::{run_sweep, workers_from_env, SweepGrid, SweepReport};
use specmer::vocab::{TokenSequence, Vocabulary};

use crate::error::CliError;
use crate::io::{create, emit, encode, parse_list, read_sequence_arg, write_json};
use crate::setup::{self, Models};

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    msa: Option<PathBuf>,
    #[arg(long)]
    draft: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Index holding every k value of the grid (default: built from --msa).
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    context: Option<String>,
    #[arg(long)]
    wild_type: Option<String>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Generations per cell.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long)]
    temps: Option<String>,
    /// K-sets separated by ';', values within a set by ','.
    #[arg(long, default_value = "1;3;1,3;1,3,5")]
    k_sets: String,
    #[arg(long, default_value = "1,2,3,5")]
    candidates: String,
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads (default: SPECMER_WORKERS, else the core count).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Serialize)]
struct Summary {
    cells: usize,
    failed_cells: usize,
    inconsistent_accounting: Vec<usize>,
    best: Option<usize>,
    csv: PathBuf,
    json: PathBuf,
}

fn grid(a: &SweepArgs) -> Result<SweepGrid, CliError> {
    let gamma = match &a.gammas {
        Some(s) => parse_list(s, "gamma")?,
        None => GAMMA_GRID.to_vec(),
    };
    let temperature = match &a.temps {
        Some(s) => parse_list(s, "temperature")?,
        None => TEMPERATURE_GRID.to_vec(),
    };
    let k_values = a
        .k_sets
        .split(';')
        .map(|s| parse_k_values(s).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let candidates = parse_list(&a.candidates, "candidates")?;
    Ok(SweepGrid { gamma, temperature, k_values, candidates })
}

pub fn run(a: SweepArgs, json: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let vocab = Vocabulary::protein();
    let grid = grid(&a)?;
    let mut inputs = Vec::new();
    let mut seq = |arg: &Option<String>, what: &str| -> Result<Option<TokenSequence>, CliError> {
        match arg {
            Some(s) => {
                let s = read_sequence_arg(s)?;
                inputs.extend(s.file);
                Ok(Some(encode(&vocab, &s.text, what)?))
            }
            None => Ok(None),
        }
    };
    let context = seq(&a.context, "context")?.unwrap_or_else(TokenSequence::empty);
    let wild_type = seq(&a.wild_type, "wild type")?;
    let max_len = match (a.max_len, &wild_type) {
        (Some(m), _) => m,
        (None, Some(w)) => w.len(),
        (None, None) => return Err(CliError::Usage("--max-len or --wild-type is required".into())),
    };
    if a.n == 0 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    let base = DecodeConfig {
        sampler: SamplerConfig::new(1.0, a.top_p.unwrap_or(SamplerConfig::default().top_p))?,
        max_len,
        context,
        seed: a.seed,
        ..Default::default()
    };
    base.validate()?;
    let models = Models::load(a.draft.as_deref(), a.target.as_deref(), a.msa.as_deref(), &vocab)?;
    let index = setup::index(a.index.as_deref(), a.msa.as_deref(), &grid.all_k_values(), false, &vocab)?;
    let workers = match a.workers {
        Some(w) => w,
        None => workers_from_env()?,
    };
    let report: SweepReport =
        run_sweep(&grid, &base, a.n, models.draft.as_ref(), models.target.as_ref(), &index, workers)?;

    let csv_path = a.out_dir.join("sweep.csv");
    let json_path = a.out_dir.join("sweep.json");
    {
        use std::io::Write;
        let mut f = create(&csv_path)?;
        f.write_all(report.to_csv()?.as_bytes())?;
        f.flush()?;
    }
    write_json(&json_path, &report)?;

    let mut m = RunManifest::new(
        "sweep",
        serde_json::json!({
            "grid": grid, "base": base, "n": a.n, "workers": workers,
            "draft": models.descriptors.0.to_string(), "target": models.descriptors.1.to_string(),
        }),
        a.seed,
    );
    inputs.extend(models.input_files());
    inputs.extend(a.index.clone());
    if a.index.is_none() {
        inputs.extend(a.msa.clone());
    }
    inputs.sort();
    inputs.dedup();
    for p in &inputs {
        m.add_input(p)?;
    }
    m.add_output(&csv_path)?;
    m.add_output(&json_path)?;
    m.wall_ms = start.elapsed().as_millis() as u64;
    m.write(&RunManifest::path_for(&json_path))?;

    let summary = Summary {
        cells: report.cells.len(),
        failed_cells: report.cells.iter().filter(|c| c.error.is_some()).count(),
        inconsistent_accounting: report
            .cells
            .iter()
            .filter(|c| c.accounting.as_ref().is_some_and(|x| !x.consistent()))
            .map(|c| c.cell.id)
            .collect(),
        best: report.cells.first().filter(|c| c.stats.is_some()).map(|c| c.cell.id),
        csv: csv_path,
        json: json_path,
    };
    emit(json, &summary, || {
        let mut text = format!(
            "{} cells ({} failed) -> {}\naccounting: {}",
            summary.cells,
            summary.failed_cells,
            a.out_dir.display(),
            if summary.inconsistent_accounting.is_empty() {
                "consistent in every cell".to_string()
            } else {
                format!("MISMATCH in cells {:?}", summary.inconsistent_accounting)
            }
        );
        for c in report.cells.iter().take(5).filter(|c| c.stats.is_some()) {
            let cfg = &c.cell.config;
            text.push_str(&format!(
                "\ncell {:>3}: gamma {} T {} k {:?} c {} mean NLL {:.4}",
                c.cell.id,
                cfg.draft_len,
                cfg.sampler.temperature,
                cfg.k_values,
                cfg.candidates,
                c.stats.as_ref().map(|s| s.mean_nll).unwrap_or(f64::NAN)
            ));
        }
        text
    })?;
    if !summary.inconsistent_accounting.is_empty() {
        return Err(CliError::data("acceptance accounting mismatch"));
    }
    Ok(())
}

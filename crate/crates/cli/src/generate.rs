use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use specmer::decode::{
    generate_library, DecodeConfig, LibraryInputs, LibraryKind, PhaseTimings, WarpMode, DEFAULT_CANDIDATES,
    DEFAULT_DRAFT_LEN, DEFAULT_LIBRARY_SIZE,
};
use specmer::kmer::parse_k_values;
use specmer::lm::SamplerConfig;
use specmer::manifest::RunManifest;
use specmer::vocab::{TokenSequence, Vocabulary};

use crate::error::CliError;
use crate::io::{self, emit, encode, read_sequence_arg};
use crate::setup::{self, Models};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Batch-and-select decoding with k-mer scoring.
    Specmer,
    /// Vanilla speculative decoding.
    Speculative,
    /// Autoregressive sampling from the target.
    Target,
    /// Autoregressive sampling from the draft.
    Draft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpArg {
    Both,
    TargetOnly,
}

/// Flags of `generate`; every flag may also come from a `--config` JSON
/// document, with command-line values taking precedence.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct GenerateOpts {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Draft model descriptor (default: order-2 n-gram on --msa).
    #[arg(long)]
    pub draft: Option<String>,
    /// Target model descriptor (default: order-4 n-gram on --msa).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub msa: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Context residues or @file.
    #[arg(long)]
    pub context: Option<String>,
    /// Wild-type residues or @file; sets the default --max-len.
    #[arg(long)]
    pub wild_type: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub warp: Option<WarpArg>,
    #[arg(long)]
    pub no_boundary_windows: bool,
    #[arg(long)]
    pub no_bonus: bool,
    #[arg(long)]
    pub dedupe: bool,
}

macro_rules! overlay {
    ($top:ident, $base:ident; opt: $($o:ident),*; flag: $($f:ident),*) => {
        GenerateOpts {
            config: $top.config,
            $($o: $top.$o.or($base.$o),)*
            $($f: $top.$f || $base.$f,)*
        }
    };
}

impl GenerateOpts {
    /// Command-line values over `base`.
    pub fn overlay(self, base: GenerateOpts) -> GenerateOpts {
        let top = self;
        overlay!(top, base;
            opt: draft, target, msa, index, context, wild_type, method, gamma, candidates, temp, top_p, k, n,
                max_len, seed, out, trace, warp;
            flag: no_boundary_windows, no_bonus, dedupe)
    }

    pub fn with_config_file(self) -> Result<GenerateOpts, CliError> {
        match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                let base: GenerateOpts = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                Ok(self.overlay(base))
            }
            None => Ok(self),
        }
    }
}

/// Sequence arguments resolved against the vocabulary.
pub struct Resolved {
    pub cfg: DecodeConfig,
    pub method: Method,
    pub n: usize,
    pub input_files: Vec<PathBuf>,
}

pub fn resolve(o: &GenerateOpts, vocab: &Vocabulary) -> Result<Resolved, CliError> {
    let mut input_files = Vec::new();
    let mut seq_arg = |arg: &Option<String>, what: &str| -> Result<Option<TokenSequence>, CliError> {
        match arg {
            Some(a) => {
                let s = read_sequence_arg(a)?;
                input_files.extend(s.file);
                Ok(Some(encode(vocab, &s.text, what)?))
            }
            None => Ok(None),
        }
    };
    let context = seq_arg(&o.context, "context")?.unwrap_or_else(TokenSequence::empty);
    let wild_type = seq_arg(&o.wild_type, "wild type")?;
    let method = o.method.unwrap_or(Method::Specmer);
    let candidates = match (method, o.candidates) {
        (Method::Speculative, Some(c)) if c != 1 => {
            return Err(CliError::Usage("speculative decoding drafts a single candidate".into()))
        }
        (Method::Speculative, _) => 1,
        (_, c) => c.unwrap_or(DEFAULT_CANDIDATES),
    };
    let max_len = match (o.max_len, &wild_type) {
        (Some(m), _) => m,
        (None, Some(wt)) => wt.len(),
        (None, None) => return Err(CliError::Usage("--max-len or --wild-type is required".into())),
    };
    let sampler = SamplerConfig::new(o.temp.unwrap_or(1.0), o.top_p.unwrap_or(SamplerConfig::default().top_p))?;
    let k_values = parse_k_values(o.k.as_deref().unwrap_or("1,3"))?;
    let cfg = DecodeConfig {
        draft_len: o.gamma.unwrap_or(DEFAULT_DRAFT_LEN),
        candidates,
        sampler,
        k_values,
        max_len,
        context,
        seed: o.seed.unwrap_or(0),
        boundary_windows: !o.no_boundary_windows,
        bonus_token: !o.no_bonus,
        warp_mode: match o.warp {
            Some(WarpArg::TargetOnly) => WarpMode::TargetOnly,
            _ => WarpMode::Both,
        },
    };
    cfg.validate()?;
    let n = o.n.unwrap_or(DEFAULT_LIBRARY_SIZE);
    if n == 0 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    Ok(Resolved { cfg, method, n, input_files })
}

#[derive(Serialize)]
struct Summary {
    generated: usize,
    failures: usize,
    accepted: u64,
    rejected: u64,
    acceptance_ratio: Option<f64>,
    out: PathBuf,
    trace: Option<PathBuf>,
    manifest: PathBuf,
}

pub fn run(opts: GenerateOpts, json: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let o = opts.with_config_file()?;
    let out = o.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let vocab = Vocabulary::protein();
    let r = resolve(&o, &vocab)?;
    let models = Models::load(o.draft.as_deref(), o.target.as_deref(), o.msa.as_deref(), &vocab)?;
    let index = match r.method {
        Method::Specmer => {
            Some(setup::index(o.index.as_deref(), o.msa.as_deref(), &r.cfg.k_values, o.dedupe, &vocab)?)
        }
        _ => None,
    };
    let kind = match r.method {
        Method::Specmer => LibraryKind::Specmer,
        Method::Speculative => LibraryKind::Speculative,
        Method::Target => LibraryKind::Target,
        Method::Draft => LibraryKind::Draft,
    };
    let inputs = LibraryInputs { draft: models.draft.as_ref(), target: models.target.as_ref(), index: index.as_ref() };
    let outcome = generate_library(kind, r.n, inputs, &r.cfg);

    io::write_library_fasta(&out, &vocab, &outcome.results)?;
    if let Some(t) = &o.trace {
        io::write_traces(t, &outcome.results)?;
    }

    let mut manifest = RunManifest::new(
        "generate",
        serde_json::json!({
            "options": o,
            "resolved": r.cfg,
            "n": r.n,
            "draft": models.descriptors.0.to_string(),
            "target": models.descriptors.1.to_string(),
        }),
        r.cfg.seed,
    );
    let mut inputs: Vec<PathBuf> = models.input_files();
    inputs.extend(o.index.clone());
    if r.method == Method::Specmer && o.index.is_none() {
        inputs.extend(o.msa.clone());
    }
    inputs.extend(o.config.clone());
    inputs.extend(r.input_files.iter().cloned());
    let mut seen = HashSet::new();
    inputs.retain(|p| seen.insert(p.clone()));
    for p in &inputs {
        manifest.add_input(p)?;
    }
    manifest.add_output(&out)?;
    if let Some(t) = &o.trace {
        manifest.add_output(t)?;
    }
    let mut timings = PhaseTimings::default();
    for (_, g) in &outcome.results {
        timings.add(&g.trace.timings);
    }
    manifest.timings = timings;
    manifest.wall_ms = start.elapsed().as_millis() as u64;
    let manifest_path = RunManifest::path_for(&out);
    manifest.write(&manifest_path)?;

    let (accepted, rejected) =
        outcome.results.iter().fold((0, 0), |(a, j), (_, g)| (a + g.trace.accepted, j + g.trace.rejected));
    let summary = Summary {
        generated: outcome.results.len(),
        failures: outcome.failures.len(),
        accepted,
        rejected,
        acceptance_ratio: (accepted + rejected > 0).then(|| accepted as f64 / (accepted + rejected) as f64),
        out: out.clone(),
        trace: o.trace.clone(),
        manifest: manifest_path,
    };
    emit(json, &summary, || {
        let alpha = summary.acceptance_ratio.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into());
        format!(
            "generated {} sequences ({} failed) -> {}\nacceptance ratio {alpha} ({} accepted, {} rejected)",
            summary.generated,
            summary.failures,
            out.display(),
            accepted,
            rejected
        )
    })?;

    if let Some((i, e)) = outcome.failures.into_iter().next() {
        let err: CliError = e.into();
        return Err(match err {
            CliError::Remote(m) => CliError::Remote(format!("sequence {i}: {m}")),
            other => CliError::Data(format!("sequence {i}: {other}")),
        });
    }
    Ok(())
}

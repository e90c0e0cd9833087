use clap::{Args, Subcommand};
use rand::Rng;
use serde::Serialize;
use specmer::decode::DecodeConfig;
use specmer::lm::{Distribution, ModelDescriptor, ModelHandle, NgramModel, SamplerConfig};
use specmer::oracle::{check_coupling, compare_counts, exact_model_distribution, speculative_counts, Comparison};
use specmer::rng::{stream, Purpose};
use specmer::vocab::{TokenSequence, Vocabulary, AMINO_ACIDS};

use crate::error::CliError;
use crate::io::emit;

/// Binomial standard errors tolerated per token.
const MAX_Z: f64 = 4.0;
const MAX_EXACT_DEVIATION: f64 = 1e-12;

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Monte Carlo check that coupled outputs follow the target distribution.
    Coupling(CouplingArgs),
    /// Sequence-level comparison of speculative output with the exact target chain.
    Sequence(SequenceArgs),
}

#[derive(Args, Debug)]
pub struct CouplingArgs {
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 4)]
    vocab_size: usize,
    /// Number of random (p, q) pairs.
    #[arg(long, default_value_t = 1)]
    pairs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct SequenceArgs {
    #[arg(long, default_value_t = 4)]
    vocab_size: usize,
    #[arg(long, default_value_t = 4)]
    len: usize,
    /// Draft descriptor (default: bigram on a random corpus).
    #[arg(long)]
    draft: Option<String>,
    /// Target descriptor (default: trigram on another random corpus).
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 2)]
    gamma: usize,
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fail when TV exceeds this bound.
    #[arg(long)]
    max_tv: Option<f64>,
}

#[derive(Serialize)]
struct PairReport {
    pair: u64,
    p: Vec<f64>,
    q: Vec<f64>,
    max_deviation: f64,
    max_z: f64,
    exact_deviation: f64,
    pass: bool,
}

fn random_distribution(n: usize, seed: u64, major: u64, minor: u64) -> Distribution {
    let mut rng = stream(seed, Purpose::Simulation, major, minor);
    loop {
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        if let Ok(d) = Distribution::from_weights(w) {
            return d;
        }
    }
}

fn verify_coupling(a: CouplingArgs, json: bool) -> Result<(), CliError> {
    if a.vocab_size < 2 || a.trials == 0 || a.pairs == 0 {
        return Err(CliError::Usage("need --vocab-size >= 2, --trials >= 1 and --pairs >= 1".into()));
    }
    let mut reports = Vec::new();
    for pair in 0..a.pairs {
        let p = random_distribution(a.vocab_size, a.seed, pair, 0);
        let q = random_distribution(a.vocab_size, a.seed, pair, 1);
        let c = check_coupling(&p, &q, a.trials, a.seed.wrapping_add(pair))?;
        reports.push(PairReport {
            pair,
            pass: c.max_z <= MAX_Z && c.exact_deviation <= MAX_EXACT_DEVIATION,
            p: p.probs().to_vec(),
            q: q.probs().to_vec(),
            max_deviation: c.max_deviation,
            max_z: c.max_z,
            exact_deviation: c.exact_deviation,
        });
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    emit(json, &reports, || {
        reports
            .iter()
            .map(|r| {
                format!(
                    "pair {}: max deviation {:.3e} ({:.2} se), exact deviation {:.1e} [{}]",
                    r.pair,
                    r.max_deviation,
                    r.max_z,
                    r.exact_deviation,
                    if r.pass { "ok" } else { "FAIL" }
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} of {} pairs outside tolerance", reports.len())));
    }
    Ok(())
}

fn random_model(vocab: &Vocabulary, order: usize, seed: u64, corpus: u64) -> Result<NgramModel, CliError> {
    let mut rng = stream(seed, Purpose::Simulation, corpus, 2);
    let rows: Vec<TokenSequence> = (0..40)
        .map(|_| {
            let s: String = (0..12).map(|_| vocab.symbols()[rng.random_range(0..vocab.len())].clone()).collect();
            vocab.encode(&s)
        })
        .collect::<Result<_, _>>()?;
    Ok(NgramModel::train(&rows, order, 1.0, vocab, false)?)
}

fn model(arg: Option<&str>, vocab: &Vocabulary, order: usize, seed: u64, corpus: u64) -> Result<ModelHandle, CliError> {
    match arg {
        Some(s) => Ok(ModelDescriptor::parse(s)?.load(vocab)?),
        None => Ok(std::sync::Arc::new(random_model(vocab, order, seed, corpus)?)),
    }
}

#[derive(Serialize)]
struct SequenceReport {
    #[serde(flatten)]
    comparison: Comparison,
    exact_support: usize,
}

fn verify_sequence(a: SequenceArgs, json: bool) -> Result<(), CliError> {
    if !(1..=AMINO_ACIDS.len()).contains(&a.vocab_size) {
        return Err(CliError::Usage(format!("--vocab-size must lie in 1..={}", AMINO_ACIDS.len())));
    }
    let vocab = Vocabulary::residues_only(&AMINO_ACIDS[..a.vocab_size])?;
    let draft = model(a.draft.as_deref(), &vocab, 2, a.seed, 0)?;
    let target = model(a.target.as_deref(), &vocab, 3, a.seed, 1)?;
    let sampler = SamplerConfig::new(a.temp, a.top_p)?;
    let exact = exact_model_distribution(target.as_ref(), &[], a.len, &sampler)?;
    let cfg = DecodeConfig {
        draft_len: a.gamma,
        candidates: 1,
        sampler,
        max_len: a.len,
        seed: a.seed,
        ..Default::default()
    };
    let counts = speculative_counts(draft.as_ref(), target.as_ref(), &cfg, a.samples)?;
    let report = SequenceReport { comparison: compare_counts(&counts, &exact), exact_support: exact.len() };
    emit(json, &report, || {
        let c = &report.comparison;
        format!(
            "samples {}\ntv {:.6}\nchi2 {:.3} (dof {})\nchi2_p {:.4}\nout of space {:.2e}",
            c.samples, c.tv, c.chi2, c.dof, c.chi2_p, c.out_of_space
        )
    })?;
    if let Some(max) = a.max_tv {
        if report.comparison.tv > max {
            return Err(CliError::Data(format!("tv {} exceeds {max}", report.comparison.tv)));
        }
    }
    Ok(())
}

pub fn run(cmd: VerifyCommand, json: bool) -> Result<(), CliError> {
    match cmd {
        VerifyCommand::Coupling(a) => verify_coupling(a, json),
        VerifyCommand::Sequence(a) => verify_sequence(a, json),
    }
}

//! Library metrics and speedup theory.
//!
//! - [`library_stats`]: per-sequence NLL under the target, top-N NLL, pooled
//!   acceptance ratio, mean k-mer score and phase throughput.
//! - [`expected_speedup`], [`expected_speedup_batch`],
//!   [`expected_speedup_serial`]: closed-form wall-time speedups, with
//!   [`simulate_speedup`] as an independent discrete-event check.
//! - [`batch_acceptance`] and [`estimate_misranking`]: expected acceptance of
//!   best-of-m selection and the misranking loss ε.
//! - [`diversity`]: Hamming distance to the wild type and between members.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{DecodeTrace, GenerationResult, PhaseTimings};
use crate::kmer::KmerIndex;
use crate::lm::{sequence_nll, LanguageModel, LmError};
use crate::rng::{stream, Purpose};
use crate::vocab::TokenId;

pub const TOP_N: [usize; 2] = [20, 5];
pub const DEFAULT_MIN_ITERATIONS: usize = 1000;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const MAX_PAIRS: usize = 10_000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty library")]
    EmptyLibrary,
    #[error("sequence {index}: {source}")]
    Nll { index: usize, source: LmError },
    #[error("need at least {required} iterations, found {found}")]
    InsufficientData { required: usize, found: usize },
    #[error("invalid speedup parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub draft_tokens_per_sec: f64,
    pub score_tokens_per_sec: f64,
    pub verify_tokens_per_sec: f64,
    pub tokens_per_sec: f64,
}

impl Throughput {
    fn from_timings(tokens: usize, t: &PhaseTimings) -> Self {
        let rate = |ns: u64| if ns == 0 { 0.0 } else { tokens as f64 / (ns as f64 * 1e-9) };
        Self {
            draft_tokens_per_sec: rate(t.draft_ns),
            score_tokens_per_sec: rate(t.score_ns),
            verify_tokens_per_sec: rate(t.verify_ns),
            tokens_per_sec: rate(t.total_ns()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub size: usize,
    pub nll: Vec<f64>,
    pub mean_nll: f64,
    pub top20_nll: f64,
    pub top5_nll: f64,
    /// Set when the library is smaller than N for some top-N.
    pub top_n_clipped: bool,
    pub accepted: u64,
    pub rejected: u64,
    /// Pooled per-token acceptance ratio; `None` without coupling events.
    pub acceptance_ratio: Option<f64>,
    /// Acceptance of the first verified token of each iteration.
    pub first_token_acceptance: Option<f64>,
    pub mean_kmer_score: Option<f64>,
    pub mean_length: f64,
    pub throughput: Throughput,
}

/// Mean of the `n` smallest values (all values when fewer than `n`).
pub fn top_n_mean(values: &[f64], n: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let take = n.min(v.len()).max(1);
    v[..take].iter().sum::<f64>() / take as f64
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn ratio(a: u64, n: u64) -> Option<f64> {
    (n > 0).then(|| a as f64 / n as f64)
}

/// Pooled acceptance counts over traces.
pub fn pooled_acceptance<'a>(traces: impl IntoIterator<Item = &'a DecodeTrace>) -> (u64, u64) {
    traces.into_iter().fold((0, 0), |(a, r), t| (a + t.accepted, r + t.rejected))
}

/// First-token acceptance flags over traces.
pub fn first_token_flags<'a>(traces: impl IntoIterator<Item = &'a DecodeTrace>) -> Vec<bool> {
    traces.into_iter().flat_map(|t| t.first_token_flags()).collect()
}

/// Length-normalized NLL of every member under `target`, scored on the
/// generated tokens given the context.
pub fn library_nll(results: &[GenerationResult], target: &dyn LanguageModel) -> Result<Vec<f64>, AnalysisError> {
    results
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            let ctx = &r.sequence.as_slice()[..r.context_len];
            sequence_nll(target, r.generated(), ctx).map_err(|source| AnalysisError::Nll { index, source })
        })
        .collect()
}

pub fn library_stats(
    results: &[GenerationResult],
    target: &dyn LanguageModel,
    index: Option<&KmerIndex>,
) -> Result<LibraryStats, AnalysisError> {
    if results.is_empty() {
        return Err(AnalysisError::EmptyLibrary);
    }
    let nll = library_nll(results, target)?;
    let (accepted, rejected) = pooled_acceptance(results.iter().map(|r| &r.trace));
    let first = first_token_flags(results.iter().map(|r| &r.trace));
    let first_ok = first.iter().filter(|&&b| b).count() as u64;
    let mean_kmer_score = index.map(|ix| {
        let scores: Vec<f64> = results.iter().map(|r| ix.score(r.generated(), &[]).value).collect();
        mean(&scores)
    });
    let mut timings = PhaseTimings::default();
    let mut tokens = 0;
    for r in results {
        timings.add(&r.trace.timings);
        tokens += r.generated().len();
    }
    Ok(LibraryStats {
        size: results.len(),
        mean_nll: mean(&nll),
        top20_nll: top_n_mean(&nll, 20),
        top5_nll: top_n_mean(&nll, 5),
        top_n_clipped: results.len() < TOP_N[0],
        nll,
        accepted,
        rejected,
        acceptance_ratio: ratio(accepted, accepted + rejected),
        first_token_acceptance: ratio(first_ok, first.len() as u64),
        mean_kmer_score,
        mean_length: tokens as f64 / results.len() as f64,
        throughput: Throughput::from_timings(tokens, &timings),
    })
}

/// Expected tokens per iteration, `(1 - α^{γ+1}) / (1 - α)`, with the α = 1 limit.
pub fn expected_tokens(alpha: f64, gamma: usize) -> f64 {
    if alpha >= 1.0 {
        (gamma + 1) as f64
    } else {
        (1.0 - alpha.powi(gamma as i32 + 1)) / (1.0 - alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupParams {
    pub alpha: f64,
    pub gamma: usize,
    pub candidates: usize,
    /// Cost coefficient: per-token draft/target ratio for vanilla decoding,
    /// per-iteration `(ξ M_p + M_k) / M_q` for batch decoding.
    pub ce: f64,
    /// Batch generation cost factor.
    pub xi: f64,
}

impl SpeedupParams {
    pub fn new(alpha: f64, gamma: usize, ce: f64) -> Self {
        Self { alpha, gamma, candidates: 1, ce, xi: 1.0 }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: &str| Err(AnalysisError::InvalidParams(m.into()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.gamma == 0 {
            return bad("gamma must be >= 1");
        }
        if self.candidates == 0 {
            return bad("candidates must be >= 1");
        }
        if !(self.ce > 0.0 && self.ce.is_finite()) {
            return bad("ce must be positive");
        }
        if !(self.xi >= 1.0 && self.xi.is_finite()) {
            return bad("xi must be >= 1");
        }
        Ok(())
    }

    /// Batch coefficient from measured times: `(c M_p + M_k) / M_q`, where
    /// `m_p` is the per-candidate draft time.
    pub fn batch_ce(candidates: usize, m_p: f64, m_k: f64, m_q: f64) -> f64 {
        (candidates as f64 * m_p + m_k) / m_q
    }
}

/// Vanilla speedup: `(1 - α^{γ+1}) / ((1 - α)(γ c_e + 1))`.
pub fn expected_speedup(p: &SpeedupParams) -> f64 {
    expected_tokens(p.alpha, p.gamma) / (p.gamma as f64 * p.ce + 1.0)
}

/// Batch-drafting speedup: `(1 - α^{γ+1}) / ((1 - α)(c_e + 1))`.
pub fn expected_speedup_batch(p: &SpeedupParams) -> f64 {
    expected_tokens(p.alpha, p.gamma) / (p.ce + 1.0)
}

/// Serial-drafting speedup: `(1 - α^{γ+1}) / ((1 - α)((c/ξ) c_e + 1))`.
pub fn expected_speedup_serial(p: &SpeedupParams) -> f64 {
    expected_tokens(p.alpha, p.gamma) / (p.candidates as f64 / p.xi * p.ce + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedupMode {
    Vanilla,
    Batch,
    Serial,
}

pub fn speedup(p: &SpeedupParams, mode: SpeedupMode) -> f64 {
    match mode {
        SpeedupMode::Vanilla => expected_speedup(p),
        SpeedupMode::Batch => expected_speedup_batch(p),
        SpeedupMode::Serial => expected_speedup_serial(p),
    }
}

/// `1 - (1 - α)^m - ε`.
pub fn batch_acceptance(alpha: f64, m: usize, epsilon: f64) -> f64 {
    1.0 - (1.0 - alpha).powi(m as i32) - epsilon
}

/// Per-call costs for the simulator, in units of one target forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCosts {
    /// One draft forward pass for a single candidate.
    pub draft_step: f64,
    /// One batched draft forward pass over all candidates.
    pub batch_draft_step: f64,
    /// Scoring all candidates once.
    pub score: f64,
    pub target: f64,
}

impl PhaseCosts {
    /// Costs realising `p.ce` under `mode`, with `score_share` of the draft
    /// phase spent scoring in the batch and serial modes.
    pub fn for_mode(p: &SpeedupParams, mode: SpeedupMode, score_share: f64) -> Self {
        let g = p.gamma as f64;
        match mode {
            SpeedupMode::Vanilla => Self { draft_step: p.ce, batch_draft_step: p.ce, score: 0.0, target: 1.0 },
            SpeedupMode::Batch => {
                let score = score_share * p.ce;
                let batch = (p.ce - score) / g;
                Self { draft_step: batch / p.xi, batch_draft_step: batch, score, target: 1.0 }
            }
            SpeedupMode::Serial => {
                let per_candidate = p.ce / p.xi;
                let score = score_share * per_candidate;
                let step = (per_candidate - score) / g;
                Self { draft_step: step, batch_draft_step: step * p.xi, score: score * p.candidates as f64, target: 1.0 }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Draft,
    Score,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub iterations: usize,
    pub tokens: u64,
    pub elapsed: f64,
    /// Baseline time (one target pass per token) over simulated time.
    pub speedup: f64,
}

/// Discrete-event simulation of the decode loop with constant call costs and
/// i.i.d. per-token acceptance with probability `alpha`.
pub fn simulate_speedup(
    p: &SpeedupParams,
    mode: SpeedupMode,
    costs: &PhaseCosts,
    iterations: usize,
    seed: u64,
) -> SimulationResult {
    let mut rng = stream(seed, Purpose::Simulation, 0, 0);
    let mut queue: BinaryHeap<Reverse<(OrderedTime, u64, Event)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut schedule = |q: &mut BinaryHeap<_>, at: f64, ev: Event| {
        seq += 1;
        q.push(Reverse((OrderedTime(at), seq, ev)));
    };
    let draft_phase = match mode {
        SpeedupMode::Vanilla => p.gamma as f64 * costs.draft_step,
        SpeedupMode::Batch => p.gamma as f64 * costs.batch_draft_step,
        SpeedupMode::Serial => (p.candidates * p.gamma) as f64 * costs.draft_step,
    };

    let mut now = 0.0;
    let mut tokens = 0u64;
    let mut done = 0;
    schedule(&mut queue, draft_phase, Event::Draft);
    while let Some(Reverse((OrderedTime(t), _, ev))) = queue.pop() {
        now = t;
        match ev {
            Event::Draft => schedule(&mut queue, now + costs.score, Event::Score),
            Event::Score => schedule(&mut queue, now + costs.target, Event::Verify),
            Event::Verify => {
                let accepted = (0..p.gamma).take_while(|_| rng.random::<f64>() < p.alpha).count();
                tokens += accepted as u64 + 1;
                done += 1;
                if done < iterations {
                    schedule(&mut queue, now + draft_phase, Event::Draft);
                }
            }
        }
    }
    SimulationResult { iterations: done, tokens, elapsed: now, speedup: tokens as f64 * costs.target / now }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedTime(f64);

impl Eq for OrderedTime {}

impl PartialOrd for OrderedTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAcceptanceEstimate {
    /// First-token acceptance of the vanilla traces.
    pub alpha: f64,
    pub alpha_se: f64,
    /// Pooled per-token acceptance of the vanilla traces.
    pub alpha_pooled: f64,
    pub m: usize,
    pub expected_accept: f64,
    pub expected_accept_se: f64,
    pub epsilon: f64,
    /// Delta-method standard error of ε.
    pub epsilon_se: f64,
    /// 95% percentile bootstrap interval for ε.
    pub epsilon_ci: (f64, f64),
    pub vanilla_iterations: usize,
    pub specmer_iterations: usize,
    /// ε outside [0, 1].
    pub out_of_range: bool,
}

fn share(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64
}

/// Estimates ε from matched vanilla and batch-and-select traces.
pub fn estimate_misranking(
    vanilla: &[DecodeTrace],
    specmer: &[DecodeTrace],
    m: usize,
    min_iterations: usize,
    seed: u64,
) -> Result<BatchAcceptanceEstimate, AnalysisError> {
    let v = first_token_flags(vanilla);
    let s = first_token_flags(specmer);
    let found = v.len().min(s.len());
    if found < min_iterations.max(1) {
        return Err(AnalysisError::InsufficientData { required: min_iterations.max(1), found });
    }
    let alpha = share(&v);
    let a_star = share(&s);
    let epsilon = batch_acceptance(alpha, m, a_star);
    let alpha_se = (alpha * (1.0 - alpha) / v.len() as f64).sqrt();
    let a_se = (a_star * (1.0 - a_star) / s.len() as f64).sqrt();
    let slope = m as f64 * (1.0 - alpha).powi(m as i32 - 1);
    let epsilon_se = ((slope * alpha_se).powi(2) + a_se.powi(2)).sqrt();

    let mut rng = stream(seed, Purpose::Bootstrap, 0, 0);
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let a = (0..v.len()).filter(|_| v[rng.random_range(0..v.len())]).count() as f64 / v.len() as f64;
            let b = (0..s.len()).filter(|_| s[rng.random_range(0..s.len())]).count() as f64 / s.len() as f64;
            batch_acceptance(a, m, b)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let (pooled_a, pooled_r) = pooled_acceptance(vanilla);

    Ok(BatchAcceptanceEstimate {
        alpha,
        alpha_se,
        alpha_pooled: ratio(pooled_a, pooled_a + pooled_r).unwrap_or(f64::NAN),
        m,
        expected_accept: a_star,
        expected_accept_se: a_se,
        epsilon,
        epsilon_se,
        epsilon_ci: (quantile_sorted(&boot, 0.025), quantile_sorted(&boot, 0.975)),
        vanilla_iterations: v.len(),
        specmer_iterations: s.len(),
        out_of_range: !(0.0..=1.0).contains(&epsilon),
    })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Sorted bootstrap distribution of `mean(a) - mean(b)`, resampling each
/// group independently.
pub fn bootstrap_mean_difference(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Bootstrap, 1, 0);
    let mut resample_mean = |x: &[f64]| (0..x.len()).map(|_| x[rng.random_range(0..x.len())]).sum::<f64>() / x.len() as f64;
    let mut out: Vec<f64> = (0..resamples).map(|_| resample_mean(a) - resample_mean(b)).collect();
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, sd: 0.0, count: 0 };
        }
        Self { mean: mean(values), sd: std_dev(values), count: values.len() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub wt_hamming: Summary,
    pub inter_seq_hamming: Summary,
    pub pairs_subsampled: bool,
}

/// Position-wise mismatches over the shorter length plus the length difference.
pub fn hamming(a: &[TokenId], b: &[TokenId]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

pub fn diversity(sequences: &[&[TokenId]], wild_type: &[TokenId], seed: u64) -> Diversity {
    let wt: Vec<f64> = sequences.iter().map(|s| hamming(s, wild_type) as f64).collect();
    let n = sequences.len();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let pair_at = |k: usize| -> (usize, usize) {
        // k-th pair (i < j) in row-major order
        let mut i = 0;
        let mut k = k;
        while k >= n - 1 - i {
            k -= n - 1 - i;
            i += 1;
        }
        (i, i + 1 + k)
    };
    let subsampled = total_pairs > MAX_PAIRS;
    let picks: Vec<usize> = if subsampled {
        let mut rng = stream(seed, Purpose::Pairs, 0, 0);
        let mut v = sample_indices(&mut rng, total_pairs, MAX_PAIRS).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..total_pairs).collect()
    };
    let inter: Vec<f64> = picks
        .par_iter()
        .map(|&k| {
            let (i, j) = pair_at(k);
            hamming(sequences[i], sequences[j]) as f64
        })
        .collect();
    Diversity { wt_hamming: Summary::of(&wt), inter_seq_hamming: Summary::of(&inter), pairs_subsampled: subsampled }
}

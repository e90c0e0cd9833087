//! Generation loops.
//!
//! Each iteration of [`speculative_generate`]:
//!
//! 1. the draft model samples up to `draft_len` tokens from its (warped)
//!    conditionals;
//! 2. draft and target conditionals are computed at every drafted position
//!    (one batched call per model);
//! 3. tokens are coupled left to right; the first rejection emits the
//!    residual correction and ends the iteration. If every token is accepted
//!    and `bonus_token` is set, one extra token is sampled from the target.
//!
//! [`specmer_generate`] drafts `candidates` independent continuations in
//! lockstep (one batched draft call per position), keeps the one with the
//! highest k-mer score and verifies only that one. With a single candidate
//! no scoring happens and the token stream is identical to
//! [`speculative_generate`] under the same seed.
//!
//! Randomness: candidate `j` of iteration `i` draws from stream
//! `(seed, Draft, i, j)`; coupling and bonus draws use `(seed, Verify, i, 0)`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{couple, CouplingError};
use crate::kmer::KmerIndex;
use crate::lm::{ensure_shared_vocab, sample, warp, Distribution, LanguageModel, LmError, SamplerConfig};
use crate::rng::{derive_seed, stream, Purpose, Rng};
use crate::vocab::{TokenId, TokenSequence};

pub const DEFAULT_DRAFT_LEN: usize = 5;
pub const DEFAULT_CANDIDATES: usize = 5;
pub const DEFAULT_LIBRARY_SIZE: usize = 200;
pub const GAMMA_GRID: [usize; 3] = [5, 10, 15];
pub const TEMPERATURE_GRID: [f64; 3] = [0.7, 1.0, 1.4];
pub const CANDIDATE_GRID: [usize; 4] = [1, 2, 3, 5];

pub fn k_value_grid() -> Vec<Vec<usize>> {
    vec![vec![1], vec![3], vec![1, 3], vec![1, 3, 5]]
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error("context of length {context} leaves no room below max_len {max_len}")]
    ContextTooLong { context: usize, max_len: usize },
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
}

impl DecodeError {
    pub fn is_remote(&self) -> bool {
        matches!(self, DecodeError::Model(e) if e.is_remote())
    }
}

/// Which distributions pass through the sampler transform before coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpMode {
    #[default]
    Both,
    TargetOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Draft tokens per iteration.
    pub draft_len: usize,
    /// Candidates drafted per iteration; 1 disables k-mer selection.
    pub candidates: usize,
    pub sampler: SamplerConfig,
    pub k_values: Vec<usize>,
    /// Upper bound on the full sequence length, context included.
    pub max_len: usize,
    pub context: TokenSequence,
    pub seed: u64,
    pub boundary_windows: bool,
    pub bonus_token: bool,
    #[serde(default)]
    pub warp_mode: WarpMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            draft_len: DEFAULT_DRAFT_LEN,
            candidates: 1,
            sampler: SamplerConfig::default(),
            k_values: vec![1, 3],
            max_len: 64,
            context: TokenSequence::empty(),
            seed: 0,
            boundary_windows: true,
            bonus_token: true,
            warp_mode: WarpMode::Both,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.draft_len == 0 {
            return Err(DecodeError::InvalidConfig("draft_len must be >= 1".into()));
        }
        if self.candidates == 0 {
            return Err(DecodeError::InvalidConfig("candidates must be >= 1".into()));
        }
        self.sampler.validate()?;
        if self.context.len() >= self.max_len {
            return Err(DecodeError::ContextTooLong { context: self.context.len(), max_len: self.max_len });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Drafted candidates, each truncated after an end-of-sequence token.
    pub candidates: Vec<Vec<TokenId>>,
    pub chosen: usize,
    /// Selection scores; empty when no selection took place.
    pub scores: Vec<f64>,
    /// Per-token acceptance flags for the coupled prefix of the chosen draft.
    pub accepted: Vec<bool>,
    pub correction: Option<TokenId>,
    pub bonus: Option<TokenId>,
}

impl IterationRecord {
    pub fn emitted(&self) -> usize {
        self.accepted.len() + usize::from(self.bonus.is_some())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub draft_ns: u64,
    pub score_ns: u64,
    pub verify_ns: u64,
}

impl PhaseTimings {
    pub fn total_ns(&self) -> u64 {
        self.draft_ns + self.score_ns + self.verify_ns
    }

    pub fn add(&mut self, other: &PhaseTimings) {
        self.draft_ns += other.draft_ns;
        self.score_ns += other.score_ns;
        self.verify_ns += other.verify_ns;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub iterations: Vec<IterationRecord>,
    pub accepted: u64,
    pub rejected: u64,
    pub timings: PhaseTimings,
}

impl DecodeTrace {
    /// `accepted / (accepted + rejected)`; `None` before any coupling.
    pub fn acceptance_ratio(&self) -> Option<f64> {
        let n = self.accepted + self.rejected;
        (n > 0).then(|| self.accepted as f64 / n as f64)
    }

    /// Totals recomputed from the per-token flags.
    pub fn recount(&self) -> (u64, u64) {
        self.iterations.iter().flat_map(|it| &it.accepted).fold((0, 0), |(a, r), &ok| {
            if ok {
                (a + 1, r)
            } else {
                (a, r + 1)
            }
        })
    }

    /// Acceptance of the first verified token of each iteration.
    pub fn first_token_flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.iterations.iter().filter_map(|it| it.accepted.first().copied())
    }

    fn record(&mut self, it: IterationRecord) {
        for &ok in &it.accepted {
            if ok {
                self.accepted += 1;
            } else {
                self.rejected += 1;
            }
        }
        self.iterations.push(it);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Context followed by generated tokens.
    pub sequence: TokenSequence,
    pub context_len: usize,
    pub seed: u64,
    pub trace: DecodeTrace,
    pub nll: Option<f64>,
}

impl GenerationResult {
    pub fn generated(&self) -> &[TokenId] {
        &self.sequence.as_slice()[self.context_len..]
    }
}

/// Ranks drafted candidates given the current sequence (context included).
pub trait CandidateScorer: Sync {
    fn score(&self, candidate: &[TokenId], sequence: &[TokenId]) -> f64;
}

/// K-mer motif scorer over an index.
pub struct KmerGuide<'a> {
    pub index: &'a KmerIndex,
    pub boundary_windows: bool,
}

impl CandidateScorer for KmerGuide<'_> {
    fn score(&self, candidate: &[TokenId], sequence: &[TokenId]) -> f64 {
        let tail = if self.boundary_windows {
            &sequence[sequence.len().saturating_sub(self.index.max_k() - 1)..]
        } else {
            &[]
        };
        self.index.score(candidate, tail).value
    }
}

/// Scores every candidate identically.
pub struct ConstantScorer;

impl CandidateScorer for ConstantScorer {
    fn score(&self, _: &[TokenId], _: &[TokenId]) -> f64 {
        0.0
    }
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

struct Engine<'a> {
    draft: &'a dyn LanguageModel,
    target: &'a dyn LanguageModel,
    cfg: &'a DecodeConfig,
    eos: Option<TokenId>,
}

fn elapsed_ns(t: Instant) -> u64 {
    t.elapsed().as_nanos() as u64
}

impl<'a> Engine<'a> {
    fn new(
        draft: &'a dyn LanguageModel,
        target: &'a dyn LanguageModel,
        cfg: &'a DecodeConfig,
    ) -> Result<Self, DecodeError> {
        ensure_shared_vocab(draft, target)?;
        cfg.validate()?;
        Ok(Self { draft, target, cfg, eos: target.vocab().eos() })
    }

    fn draft_view(&self, raw: &Distribution) -> Result<Distribution, LmError> {
        match self.cfg.warp_mode {
            WarpMode::Both => warp(raw, &self.cfg.sampler),
            WarpMode::TargetOnly => Ok(raw.clone()),
        }
    }

    fn finished(&self, seq: &[TokenId]) -> bool {
        seq.len() >= self.cfg.max_len || (self.eos.is_some() && seq.last().copied() == self.eos)
    }

    /// Drafts `count` candidates of up to `budget` tokens in lockstep.
    fn draft_candidates(
        &self,
        seq: &[TokenId],
        budget: usize,
        count: usize,
        iteration: u64,
    ) -> Result<Vec<Vec<TokenId>>, DecodeError> {
        let mut rngs: Vec<Rng> =
            (0..count).map(|j| stream(self.cfg.seed, Purpose::Draft, iteration, j as u64)).collect();
        let mut cands: Vec<Vec<TokenId>> = vec![Vec::with_capacity(budget); count];
        let mut active: Vec<usize> = (0..count).collect();
        for _ in 0..budget {
            if active.is_empty() {
                break;
            }
            let contexts: Vec<Vec<TokenId>> =
                active.iter().map(|&j| [seq, &cands[j]].concat()).collect();
            let dists = self.draft.batch_next_distributions(&contexts)?;
            for (&j, raw) in active.iter().zip(&dists) {
                let tok = sample(&self.draft_view(raw)?, &mut rngs[j]);
                cands[j].push(tok);
            }
            active.retain(|&j| cands[j].last().copied() != self.eos || self.eos.is_none());
        }
        Ok(cands)
    }

    /// Couples `cand` against the target and appends the emitted tokens.
    fn verify(
        &self,
        seq: &mut Vec<TokenId>,
        cand: &[TokenId],
        iteration: u64,
        record: &mut IterationRecord,
    ) -> Result<(), DecodeError> {
        let n = cand.len();
        let ends_with_eos = self.eos.is_some() && cand.last().copied() == self.eos;
        let want_bonus = self.cfg.bonus_token && !ends_with_eos && seq.len() + n < self.cfg.max_len;
        let positions = n + usize::from(want_bonus);
        let contexts: Vec<Vec<TokenId>> = (0..positions).map(|i| [&seq[..], &cand[..i]].concat()).collect();
        let q: Vec<Distribution> = self
            .target
            .batch_next_distributions(&contexts)?
            .iter()
            .map(|d| warp(d, &self.cfg.sampler))
            .collect::<Result<_, _>>()?;
        let p: Vec<Distribution> = self
            .draft
            .batch_next_distributions(&contexts[..n])?
            .iter()
            .map(|d| self.draft_view(d))
            .collect::<Result<_, _>>()?;

        let mut rng = stream(self.cfg.seed, Purpose::Verify, iteration, 0);
        for i in 0..n {
            let outcome = couple(cand[i], &p[i], &q[i], &mut rng)?;
            record.accepted.push(outcome.accepted);
            seq.push(outcome.token);
            if !outcome.accepted {
                record.correction = Some(outcome.token);
                return Ok(());
            }
        }
        if want_bonus {
            let tok = sample(&q[n], &mut rng);
            record.bonus = Some(tok);
            seq.push(tok);
        }
        Ok(())
    }

    fn run(&self, scorer: Option<&dyn CandidateScorer>) -> Result<GenerationResult, DecodeError> {
        let mut seq = self.cfg.context.as_slice().to_vec();
        let mut trace = DecodeTrace::default();
        let count = if scorer.is_some() { self.cfg.candidates } else { 1 };
        let mut iteration = 0u64;
        while !self.finished(&seq) {
            let budget = self.cfg.draft_len.min(self.cfg.max_len - seq.len());

            let t = Instant::now();
            let candidates = self.draft_candidates(&seq, budget, count, iteration)?;
            trace.timings.draft_ns += elapsed_ns(t);

            let mut record = IterationRecord::default();
            if let (Some(scorer), true) = (scorer, count > 1) {
                let t = Instant::now();
                record.scores = candidates.iter().map(|c| scorer.score(c, &seq)).collect();
                record.chosen = argmax_first(&record.scores);
                trace.timings.score_ns += elapsed_ns(t);
            }

            let t = Instant::now();
            self.verify(&mut seq, &candidates[record.chosen], iteration, &mut record)?;
            trace.timings.verify_ns += elapsed_ns(t);

            record.candidates = candidates;
            trace.record(record);
            iteration += 1;
        }
        Ok(GenerationResult {
            sequence: TokenSequence::from_raw(seq),
            context_len: self.cfg.context.len(),
            seed: self.cfg.seed,
            trace,
            nll: None,
        })
    }
}

/// Vanilla speculative decoding (single draft per iteration).
pub fn speculative_generate(
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    cfg: &DecodeConfig,
) -> Result<GenerationResult, DecodeError> {
    if cfg.candidates != 1 {
        return Err(DecodeError::InvalidConfig(format!(
            "speculative decoding drafts one candidate, got {}",
            cfg.candidates
        )));
    }
    Engine::new(draft, target, cfg)?.run(None)
}

/// Batch-and-select decoding guided by a k-mer index.
pub fn specmer_generate(
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    index: &KmerIndex,
    cfg: &DecodeConfig,
) -> Result<GenerationResult, DecodeError> {
    let mut ks = cfg.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks != index.k_values() {
        return Err(DecodeError::InvalidConfig(format!(
            "index holds k = {:?} but the configuration asks for {:?}",
            index.k_values(),
            cfg.k_values
        )));
    }
    if index.vocab() != target.vocab() {
        return Err(LmError::VocabMismatch("k-mer index vocabulary differs from the models'".into()).into());
    }
    let guide = KmerGuide { index, boundary_windows: cfg.boundary_windows };
    guided_generate(draft, target, &guide, cfg)
}

/// Batch-and-select decoding with an arbitrary candidate scorer.
pub fn guided_generate(
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    scorer: &dyn CandidateScorer,
    cfg: &DecodeConfig,
) -> Result<GenerationResult, DecodeError> {
    Engine::new(draft, target, cfg)?.run(Some(scorer))
}

/// Plain autoregressive sampling from `model` with the configured warp.
pub fn baseline_generate(model: &dyn LanguageModel, cfg: &DecodeConfig) -> Result<GenerationResult, DecodeError> {
    cfg.validate()?;
    let eos = model.vocab().eos();
    let mut seq = cfg.context.as_slice().to_vec();
    let mut rng = stream(cfg.seed, Purpose::Draft, 0, 0);
    let mut trace = DecodeTrace::default();
    let t = Instant::now();
    while seq.len() < cfg.max_len && !(eos.is_some() && seq.last().copied() == eos) {
        let d = warp(&model.next_distribution(&seq)?, &cfg.sampler)?;
        seq.push(sample(&d, &mut rng));
    }
    trace.timings.draft_ns = elapsed_ns(t);
    Ok(GenerationResult {
        sequence: TokenSequence::from_raw(seq),
        context_len: cfg.context.len(),
        seed: cfg.seed,
        trace,
        nll: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryKind {
    /// Autoregressive sampling from the target.
    Target,
    /// Autoregressive sampling from the draft.
    Draft,
    Speculative,
    Specmer,
}

/// Models and index for one library.
#[derive(Clone, Copy)]
pub struct LibraryInputs<'a> {
    pub draft: &'a dyn LanguageModel,
    pub target: &'a dyn LanguageModel,
    pub index: Option<&'a KmerIndex>,
}

#[derive(Debug, Default)]
pub struct LibraryOutcome {
    /// Successful generations, in library order.
    pub results: Vec<(usize, GenerationResult)>,
    pub failures: Vec<(usize, DecodeError)>,
}

/// `n` independent generations. Member `i` runs with seed
/// `derive_seed(cfg.seed, Sequence, i)`, so a library is reproducible and
/// independent of evaluation order.
pub fn generate_library(kind: LibraryKind, n: usize, inputs: LibraryInputs<'_>, cfg: &DecodeConfig) -> LibraryOutcome {
    let outcomes: Vec<(usize, Result<GenerationResult, DecodeError>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut member = cfg.clone();
            member.seed = derive_seed(cfg.seed, Purpose::Sequence, i as u64);
            let res = match kind {
                LibraryKind::Target => baseline_generate(inputs.target, &member),
                LibraryKind::Draft => baseline_generate(inputs.draft, &member),
                LibraryKind::Speculative => {
                    member.candidates = 1;
                    speculative_generate(inputs.draft, inputs.target, &member)
                }
                LibraryKind::Specmer => match inputs.index {
                    Some(index) => specmer_generate(inputs.draft, inputs.target, index, &member),
                    None => Err(DecodeError::InvalidConfig("batch-and-select decoding needs a k-mer index".into())),
                },
            };
            (i, res)
        })
        .collect();
    let mut out = LibraryOutcome::default();
    for (i, r) in outcomes {
        match r {
            Ok(g) => out.results.push((i, g)),
            Err(e) => {
                log::warn!("sequence {i} failed: {e}");
                out.failures.push((i, e))
            }
        }
    }
    out
}

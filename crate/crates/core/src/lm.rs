//! Next-token models and sampling transforms.
//!
//! Every model implements [`LanguageModel`]: a pure function from a token
//! context to a probability vector over the shared [`Vocabulary`]. Three
//! backends exist:
//!
//! - [`NgramModel`]: Laplace-smoothed n-gram counts, the desk-scale stand-in
//!   for neural draft/target pairs.
//! - [`TableModel`]: explicit distributions keyed by context suffix.
//! - [`RemoteModel`]: HTTP client for the logits protocol
//!   (`GET /v1/info`, `POST /v1/logits`).
//!
//! Sampling always goes through [`warp`] (temperature, then nucleus
//! truncation) and [`sample`] (inverse CDF over ascending ids).

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msa::{read_fasta, MsaError};
use crate::vocab::{TokenId, TokenSequence, VocabError, VocabManifest, Vocabulary};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_TOP_P: f64 = 0.95;
pub const REMOTE_TIMEOUT_ENV: &str = "SPECMER_REMOTE_TIMEOUT_MS";
pub const DEFAULT_REMOTE_TIMEOUT_MS: u64 = 30_000;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution has no mass left after warping")]
    DegenerateDistribution,
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("remote model unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote protocol error: {0}")]
    RemoteProtocol(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("token at position {position} has zero probability")]
    InfiniteNll { position: usize },
    #[error("cannot score an empty sequence")]
    EmptySequence,
    #[error("bad model descriptor {0:?}")]
    Descriptor(String),
    #[error("bad table model: {0}")]
    Table(String),
    #[error(transparent)]
    Msa(#[from] MsaError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl LmError {
    pub fn is_remote(&self) -> bool {
        matches!(self, LmError::RemoteUnavailable(_) | LmError::RemoteProtocol(_))
    }
}

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, LmError> {
        if probs.is_empty() {
            return Err(LmError::InvalidDistribution("empty".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(LmError::InvalidDistribution(format!("entry {bad}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(LmError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, LmError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LmError::InvalidDistribution("weights must be finite and >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(LmError::DegenerateDistribution);
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    /// Softmax. `-inf` logits get zero mass.
    pub fn from_logits(logits: &[f64]) -> Result<Self, LmError> {
        if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(LmError::InvalidDistribution("logits must be finite or -inf".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(LmError::DegenerateDistribution);
        }
        Self::from_weights(logits.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, id: TokenId) -> Self {
        let mut probs = vec![0.0; n];
        probs[id as usize] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.0.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.0.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, _)| i as TokenId)
    }

    /// Highest-probability token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { temperature: DEFAULT_TEMPERATURE, top_p: DEFAULT_TOP_P }
    }
}

impl SamplerConfig {
    /// Plain ancestral sampling.
    pub const ANCESTRAL: SamplerConfig = SamplerConfig { temperature: 1.0, top_p: 1.0 };

    pub fn new(temperature: f64, top_p: f64) -> Result<Self, LmError> {
        let cfg = Self { temperature, top_p };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LmError::InvalidConfig(format!("temperature {} must be > 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LmError::InvalidConfig(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.temperature == 1.0 && self.top_p >= 1.0
    }
}

/// Temperature in log space, then nucleus truncation: keep the smallest
/// prefix of tokens (descending probability, ascending id on ties) whose mass
/// reaches `top_p`, and renormalize.
pub fn warp(dist: &Distribution, cfg: &SamplerConfig) -> Result<Distribution, LmError> {
    if cfg.is_identity() {
        return Ok(dist.clone());
    }
    let mut probs = if cfg.temperature == 1.0 {
        dist.0.clone()
    } else {
        let scaled: Vec<f64> = dist
            .0
            .iter()
            .map(|&p| if p > 0.0 { p.ln() / cfg.temperature } else { f64::NEG_INFINITY })
            .collect();
        Distribution::from_logits(&scaled)?.0
    };
    if cfg.top_p < 1.0 {
        let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let mut cum = 0.0;
        let mut keep = order.len();
        for (n, &i) in order.iter().enumerate() {
            cum += probs[i];
            if cum >= cfg.top_p - 1e-12 {
                keep = n + 1;
                break;
            }
        }
        for &i in &order[keep..] {
            probs[i] = 0.0;
        }
    }
    Distribution::from_weights(probs)
}

/// Inverse-CDF draw over ascending token ids.
pub fn sample<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in dist.0.iter().enumerate() {
        cum += p;
        if u < cum {
            return i as TokenId;
        }
    }
    // u landed in the rounding gap above the final cumulative sum
    dist.0.iter().rposition(|&p| p > 0.0).unwrap_or(0) as TokenId
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ngram,
    Table,
    Remote,
    Custom,
}

pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    fn kind(&self) -> ModelKind;

    fn identity(&self) -> String;

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution, LmError>;

    /// Element `i` equals `next_distribution(contexts[i])`.
    fn batch_next_distributions(&self, contexts: &[Vec<TokenId>]) -> Result<Vec<Distribution>, LmError> {
        contexts.iter().map(|c| self.next_distribution(c)).collect()
    }
}

pub type ModelHandle = Arc<dyn LanguageModel>;

pub fn ensure_shared_vocab(a: &dyn LanguageModel, b: &dyn LanguageModel) -> Result<(), LmError> {
    if a.vocab() != b.vocab() {
        return Err(LmError::VocabMismatch(format!(
            "{} and {} use different vocabularies",
            a.identity(),
            b.identity()
        )));
    }
    Ok(())
}

/// Length-normalized negative log-likelihood (natural log) of `seq` given
/// `context`. Scoring stops after an end-of-sequence token; pad is skipped.
pub fn sequence_nll(model: &dyn LanguageModel, seq: &[TokenId], context: &[TokenId]) -> Result<f64, LmError> {
    let vocab = model.vocab();
    let mut contexts = Vec::new();
    let mut targets = Vec::new();
    let mut prefix = context.to_vec();
    for &tok in seq {
        if Some(tok) == vocab.pad() {
            continue;
        }
        contexts.push(prefix.clone());
        targets.push(tok);
        prefix.push(tok);
        if Some(tok) == vocab.eos() {
            break;
        }
    }
    if targets.is_empty() {
        return Err(LmError::EmptySequence);
    }
    let dists = model.batch_next_distributions(&contexts)?;
    let mut total = 0.0;
    for (position, (d, &tok)) in dists.iter().zip(&targets).enumerate() {
        let p = d.prob(tok);
        if p <= 0.0 {
            return Err(LmError::InfiniteNll { position });
        }
        total -= p.ln();
    }
    Ok(total / targets.len() as f64)
}

// ---------------------------------------------------------------------------
// n-gram
// ---------------------------------------------------------------------------

/// History padding before the first token.
const START: TokenId = TokenId::MAX;

/// Laplace-smoothed n-gram model:
/// `P(x | h) = (count(h, x) + lambda) / (count(h) + lambda * |E|)` for every
/// emittable token `x` (all tokens except pad and begin-of-sequence), zero
/// elsewhere. Histories are the last `order - 1` tokens, left padded with a
/// start marker. An unseen history with `lambda = 0` falls back to uniform
/// over the emittable set.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    lambda: f64,
    vocab: Vocabulary,
    counts: HashMap<Vec<TokenId>, Vec<u64>>,
    emittable: Vec<TokenId>,
    label: String,
}

impl NgramModel {
    /// Trains on `sequences`; with `append_eos`, each training row ends with
    /// an end-of-sequence event.
    pub fn train(
        sequences: &[TokenSequence],
        order: usize,
        lambda: f64,
        vocab: &Vocabulary,
        append_eos: bool,
    ) -> Result<Self, LmError> {
        if order == 0 {
            return Err(LmError::InvalidConfig("n-gram order must be >= 1".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LmError::InvalidConfig(format!("lambda {lambda} must be >= 0")));
        }
        let emittable = vocab.emittable();
        let is_emittable: Vec<bool> =
            (0..vocab.len() as TokenId).map(|id| emittable.contains(&id)).collect();
        let mut counts: HashMap<Vec<TokenId>, Vec<u64>> = HashMap::new();
        for seq in sequences {
            let mut ids = seq.as_slice().to_vec();
            if append_eos {
                if let Some(eos) = vocab.eos() {
                    if ids.last() != Some(&eos) {
                        ids.push(eos);
                    }
                }
            }
            let mut padded = vec![START; order - 1];
            padded.extend_from_slice(&ids);
            for i in 0..ids.len() {
                let tok = ids[i];
                if !is_emittable.get(tok as usize).copied().unwrap_or(false) {
                    continue;
                }
                let hist = padded[i..i + order - 1].to_vec();
                counts.entry(hist).or_insert_with(|| vec![0; vocab.len()])[tok as usize] += 1;
            }
        }
        Ok(Self {
            order,
            lambda,
            vocab: vocab.clone(),
            counts,
            emittable,
            label: format!("ngram:order={order},lambda={lambda}"),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn history(&self, context: &[TokenId]) -> Vec<TokenId> {
        let h = self.order - 1;
        let tail = &context[context.len().saturating_sub(h)..];
        let mut hist = vec![START; h - tail.len()];
        hist.extend_from_slice(tail);
        hist
    }
}

impl LanguageModel for NgramModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Ngram
    }

    fn identity(&self) -> String {
        self.label.clone()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution, LmError> {
        let n = self.emittable.len() as f64;
        let row = self.counts.get(&self.history(context));
        let total: u64 = row.map_or(0, |r| self.emittable.iter().map(|&t| r[t as usize]).sum());
        let denom = total as f64 + self.lambda * n;
        let mut probs = vec![0.0; self.vocab.len()];
        for &t in &self.emittable {
            probs[t as usize] = if denom > 0.0 {
                (row.map_or(0, |r| r[t as usize]) as f64 + self.lambda) / denom
            } else {
                1.0 / n
            };
        }
        Ok(Distribution(probs))
    }
}

// ---------------------------------------------------------------------------
// table
// ---------------------------------------------------------------------------

/// Explicit distributions keyed by context suffix; the longest matching
/// suffix wins, otherwise `default`.
#[derive(Debug, Clone)]
pub struct TableModel {
    vocab: Vocabulary,
    default: Distribution,
    entries: HashMap<Vec<TokenId>, Distribution>,
    max_suffix: usize,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableDocument {
    pub vocabulary: VocabManifest,
    pub default: Vec<f64>,
    #[serde(default)]
    pub entries: Vec<TableEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableEntry {
    /// Context suffix as a residue string (sentinels allowed).
    pub suffix: String,
    pub probs: Vec<f64>,
}

impl TableModel {
    pub fn new(vocab: Vocabulary, default: Distribution) -> Result<Self, LmError> {
        if default.len() != vocab.len() {
            return Err(LmError::Table("default distribution has wrong length".into()));
        }
        Ok(Self { vocab, default, entries: HashMap::new(), max_suffix: 0, label: "table".into() })
    }

    pub fn uniform(vocab: Vocabulary) -> Self {
        let n = vocab.len();
        Self::new(vocab, Distribution::uniform(n)).expect("uniform has vocabulary length")
    }

    pub fn with_entry(mut self, suffix: Vec<TokenId>, dist: Distribution) -> Result<Self, LmError> {
        if dist.len() != self.vocab.len() {
            return Err(LmError::Table("entry distribution has wrong length".into()));
        }
        self.max_suffix = self.max_suffix.max(suffix.len());
        self.entries.insert(suffix, dist);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn from_document(doc: &TableDocument) -> Result<Self, LmError> {
        let vocab = Vocabulary::from_manifest(&doc.vocabulary)?;
        let mut model = Self::new(vocab, Distribution::new(doc.default.clone())?)?;
        for e in &doc.entries {
            let suffix = e
                .suffix
                .chars()
                .map(|c| model.vocab.token_for_char(c))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| LmError::Table(format!("bad suffix {:?}", e.suffix)))?;
            model = model.with_entry(suffix, Distribution::new(e.probs.clone())?)?;
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path)?;
        let doc: TableDocument =
            serde_json::from_str(&text).map_err(|e| LmError::Table(e.to_string()))?;
        Ok(Self::from_document(&doc)?.with_label(format!("table:{}", path.display())))
    }
}

impl LanguageModel for TableModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Table
    }

    fn identity(&self) -> String {
        self.label.clone()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution, LmError> {
        for len in (1..=self.max_suffix.min(context.len())).rev() {
            if let Some(d) = self.entries.get(&context[context.len() - len..]) {
                return Ok(d.clone());
            }
        }
        Ok(self.default.clone())
    }
}

// ---------------------------------------------------------------------------
// remote
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct InfoResponse {
    pub vocab: Vec<String>,
    pub model: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LogitsRequest {
    pub model: String,
    pub contexts: Vec<Vec<TokenId>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LogitsResponse {
    pub logits: Vec<Vec<f64>>,
}

/// Client for a logits server. The server reports raw logits; all warping
/// and sampling stays on this side.
pub struct RemoteModel {
    base_url: String,
    model: String,
    vocab: Vocabulary,
    agent: ureq::Agent,
}

impl fmt::Debug for RemoteModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteModel").field("base_url", &self.base_url).field("model", &self.model).finish()
    }
}

fn remote_timeout() -> Duration {
    let ms = std::env::var(REMOTE_TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_REMOTE_TIMEOUT_MS);
    Duration::from_millis(ms)
}

fn map_ureq(err: ureq::Error) -> LmError {
    match err {
        ureq::Error::StatusCode(503) => LmError::RemoteUnavailable("server returned 503".into()),
        ureq::Error::StatusCode(code) => LmError::RemoteProtocol(format!("server returned {code}")),
        ureq::Error::Json(e) => LmError::RemoteProtocol(e.to_string()),
        other => LmError::RemoteUnavailable(other.to_string()),
    }
}

impl RemoteModel {
    /// Connects and performs the vocabulary handshake: the server's symbol
    /// list must equal `expected` exactly.
    pub fn connect(base_url: &str, model: &str, expected: &Vocabulary) -> Result<Self, LmError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(remote_timeout())).build().into();
        let base_url = base_url.trim_end_matches('/').to_string();
        let info: InfoResponse = agent
            .get(&format!("{base_url}/v1/info"))
            .call()
            .map_err(map_ureq)?
            .body_mut()
            .read_json()
            .map_err(map_ureq)?;
        if info.vocab != expected.symbols() {
            return Err(LmError::VocabMismatch(format!(
                "server {base_url} reports {} symbols that differ from the engine manifest",
                info.vocab.len()
            )));
        }
        Ok(Self { base_url, model: model.to_string(), vocab: expected.clone(), agent })
    }
}

impl LanguageModel for RemoteModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Remote
    }

    fn identity(&self) -> String {
        format!("remote:{},model={}", self.base_url, self.model)
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution, LmError> {
        let mut out = self.batch_next_distributions(&[context.to_vec()])?;
        Ok(out.remove(0))
    }

    fn batch_next_distributions(&self, contexts: &[Vec<TokenId>]) -> Result<Vec<Distribution>, LmError> {
        if contexts.is_empty() {
            return Ok(Vec::new());
        }
        let body = LogitsRequest { model: self.model.clone(), contexts: contexts.to_vec() };
        let reply: LogitsResponse = self
            .agent
            .post(&format!("{}/v1/logits", self.base_url))
            .send_json(&body)
            .map_err(map_ureq)?
            .body_mut()
            .read_json()
            .map_err(map_ureq)?;
        if reply.logits.len() != contexts.len() {
            return Err(LmError::RemoteProtocol(format!(
                "expected {} logit rows, got {}",
                contexts.len(),
                reply.logits.len()
            )));
        }
        reply
            .logits
            .iter()
            .map(|row| {
                if row.len() != self.vocab.len() {
                    return Err(LmError::RemoteProtocol(format!(
                        "logit row has {} entries, vocabulary has {}",
                        row.len(),
                        self.vocab.len()
                    )));
                }
                Distribution::from_logits(row).map_err(|e| LmError::RemoteProtocol(e.to_string()))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// descriptors
// ---------------------------------------------------------------------------

/// Parsed CLI model descriptor:
/// `ngram:order=2,train=<msa>,lambda=1[,eos=1]`, `table:<path>`,
/// `remote:<url>,model=<name>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelDescriptor {
    Ngram { order: usize, train: PathBuf, lambda: f64, append_eos: bool },
    Table { path: PathBuf },
    Remote { url: String, model: String },
}

impl ModelDescriptor {
    pub fn parse(s: &str) -> Result<Self, LmError> {
        let bad = || LmError::Descriptor(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "ngram" => {
                let (mut order, mut train, mut lambda, mut append_eos) = (None, None, 1.0, false);
                for part in rest.split(',').filter(|p| !p.is_empty()) {
                    let (k, v) = part.split_once('=').ok_or_else(bad)?;
                    match k {
                        "order" => order = Some(v.parse().map_err(|_| bad())?),
                        "train" => train = Some(PathBuf::from(v)),
                        "lambda" => lambda = v.parse().map_err(|_| bad())?,
                        "eos" => append_eos = matches!(v, "1" | "true"),
                        _ => return Err(bad()),
                    }
                }
                Ok(Self::Ngram {
                    order: order.ok_or_else(bad)?,
                    train: train.ok_or_else(bad)?,
                    lambda,
                    append_eos,
                })
            }
            "table" if !rest.is_empty() => Ok(Self::Table { path: PathBuf::from(rest) }),
            "remote" => {
                let mut parts = rest.split(',');
                let url = parts.next().filter(|u| !u.is_empty()).ok_or_else(bad)?.to_string();
                let mut model = None;
                for part in parts {
                    match part.split_once('=') {
                        Some(("model", v)) => model = Some(v.to_string()),
                        _ => return Err(bad()),
                    }
                }
                Ok(Self::Remote { url, model: model.ok_or_else(bad)? })
            }
            _ => Err(bad()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Ngram { .. } => ModelKind::Ngram,
            Self::Table { .. } => ModelKind::Table,
            Self::Remote { .. } => ModelKind::Remote,
        }
    }

    /// Files the model reads, for run manifests.
    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            Self::Ngram { train, .. } => vec![train.clone()],
            Self::Table { path } => vec![path.clone()],
            Self::Remote { .. } => vec![],
        }
    }

    pub fn load(&self, vocab: &Vocabulary) -> Result<ModelHandle, LmError> {
        Ok(match self {
            Self::Ngram { order, train, lambda, append_eos } => {
                let msa = read_fasta(train)?;
                let (rows, _) = msa.ungapped(vocab);
                Arc::new(
                    NgramModel::train(&rows, *order, *lambda, vocab, *append_eos)?
                        .with_label(self.to_string()),
                )
            }
            Self::Table { path } => {
                let model = TableModel::load(path)?;
                if model.vocab() != vocab {
                    return Err(LmError::VocabMismatch(format!("{} has a different vocabulary", path.display())));
                }
                Arc::new(model)
            }
            Self::Remote { url, model } => Arc::new(RemoteModel::connect(url, model, vocab)?),
        })
    }
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ngram { order, train, lambda, append_eos } => {
                write!(f, "ngram:order={order},train={},lambda={lambda}", train.display())?;
                if *append_eos {
                    write!(f, ",eos=1")?;
                }
                Ok(())
            }
            Self::Table { path } => write!(f, "table:{}", path.display()),
            Self::Remote { url, model } => write!(f, "remote:{url},model={model}"),
        }
    }
}

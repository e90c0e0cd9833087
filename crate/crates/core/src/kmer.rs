//! K-mer motif index built from an alignment, and candidate scoring.
//!
//! For each window size `k` the index stores raw counts of every contiguous
//! residue k-mer across the ungapped alignment rows. Probabilities are always
//! derived as `count / total(k)`, so indices can be merged and reproduced
//! exactly. A candidate `s` of length `L` scores
//!
//! ```text
//! score(s) = (1/L) * sum_{k in K} sum_{windows w} P_k(w)
//! ```
//!
//! where the windows are every full k-window of `tail ++ s` that covers at
//! least one candidate token (`tail` being the last `k-1` context tokens).
//! Unseen k-mers and windows containing special tokens contribute zero.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::msa::Msa;
use crate::vocab::{TokenId, TokenSequence, VocabError, VocabManifest, Vocabulary};

pub const INDEX_VERSION: &str = "specmer-kmer-index/1";
pub const MAX_K: usize = 7;
pub const DEFAULT_K_VALUES: [usize; 3] = [1, 3, 5];

#[derive(Debug, Error)]
pub enum KmerError {
    #[error("k-mer window size must be >= 1")]
    ZeroK,
    #[error("k = {0} exceeds the supported maximum of {MAX_K}")]
    KTooLarge(usize),
    #[error("no k values given")]
    NoKValues,
    #[error("no sequence reaches length k = {0}")]
    EmptyIndex(usize),
    #[error("k = {0} is not present in the index")]
    MissingK(usize),
    #[error("index version {found:?} does not match {expected:?}")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("indices are incompatible: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub msa_path: Option<String>,
    pub sequences: usize,
    pub dropped: usize,
    #[serde(default)]
    pub deduplicated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KmerTable {
    counts: HashMap<Vec<TokenId>, u64>,
    total: u64,
}

impl KmerTable {
    pub fn count(&self, kmer: &[TokenId]) -> u64 {
        self.counts.get(kmer).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn probability(&self, kmer: &[TokenId]) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(kmer) as f64 / self.total as f64
    }

    pub fn counts(&self) -> &HashMap<Vec<TokenId>, u64> {
        &self.counts
    }

    fn add(&mut self, kmer: &[TokenId], n: u64) {
        *self.counts.entry(kmer.to_vec()).or_insert(0) += n;
        self.total += n;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmerIndex {
    k_values: Vec<usize>,
    tables: BTreeMap<usize, KmerTable>,
    vocab: Vocabulary,
    pub source: SourceMeta,
}

/// Score of one candidate, split per window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmerScore {
    pub value: f64,
    pub contributions: Vec<(usize, f64)>,
}

fn validate_k_values(k_values: &[usize]) -> Result<Vec<usize>, KmerError> {
    if k_values.is_empty() {
        return Err(KmerError::NoKValues);
    }
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for &k in &ks {
        if k == 0 {
            return Err(KmerError::ZeroK);
        }
        if k > MAX_K {
            return Err(KmerError::KTooLarge(k));
        }
        if k > 5 {
            log::warn!("k = {k} above 5: table size grows exponentially with k");
        }
    }
    Ok(ks)
}

/// Parses `"1,3,5"` into window sizes.
pub fn parse_k_values(s: &str) -> Result<Vec<usize>, KmerError> {
    let ks = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| KmerError::CorruptIndex(format!("bad k value {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    validate_k_values(&ks)
}

pub fn build_index(msa: &Msa, k_values: &[usize], vocab: &Vocabulary) -> Result<KmerIndex, KmerError> {
    let (rows, dropped) = msa.ungapped(vocab);
    let mut index = KmerIndex::from_sequences(&rows, k_values, vocab)?;
    index.source = SourceMeta {
        msa_path: msa.source.as_ref().map(|p| p.display().to_string()),
        sequences: msa.len(),
        dropped,
        deduplicated: false,
    };
    Ok(index)
}

impl KmerIndex {
    /// Counts every k-window of every sequence. Sequences must contain
    /// residue tokens only; windows touching a special token are skipped.
    pub fn from_sequences(
        sequences: &[TokenSequence],
        k_values: &[usize],
        vocab: &Vocabulary,
    ) -> Result<Self, KmerError> {
        let k_values = validate_k_values(k_values)?;
        let mut tables: BTreeMap<usize, KmerTable> =
            k_values.iter().map(|&k| (k, KmerTable::default())).collect();
        for seq in sequences {
            let ids = seq.as_slice();
            for (&k, table) in tables.iter_mut() {
                for window in ids.windows(k) {
                    if window.iter().all(|&t| vocab.is_residue(t)) {
                        table.add(window, 1);
                    }
                }
            }
        }
        let index = Self {
            k_values,
            tables,
            vocab: vocab.clone(),
            source: SourceMeta { sequences: sequences.len(), ..Default::default() },
        };
        for k in index.empty_k_values() {
            log::warn!("{}", KmerError::EmptyIndex(k));
        }
        Ok(index)
    }

    pub fn k_values(&self) -> &[usize] {
        &self.k_values
    }

    pub fn max_k(&self) -> usize {
        self.k_values.last().copied().unwrap_or(1)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn table(&self, k: usize) -> Option<&KmerTable> {
        self.tables.get(&k)
    }

    /// Window sizes no sequence was long enough to fill.
    pub fn empty_k_values(&self) -> Vec<usize> {
        self.tables.iter().filter(|(_, t)| t.total == 0).map(|(&k, _)| k).collect()
    }

    pub fn require_nonempty(&self) -> Result<(), KmerError> {
        match self.empty_k_values().first() {
            Some(&k) => Err(KmerError::EmptyIndex(k)),
            None => Ok(()),
        }
    }

    pub fn probability(&self, kmer: &[TokenId]) -> f64 {
        self.tables.get(&kmer.len()).map_or(0.0, |t| t.probability(kmer))
    }

    pub fn probability_exact(&self, kmer: &[TokenId]) -> Ratio<i128> {
        match self.tables.get(&kmer.len()) {
            Some(t) if t.total > 0 => Ratio::new(t.count(kmer) as i128, t.total as i128),
            _ => Ratio::from_integer(0),
        }
    }

    /// A copy keeping only `k_values` (each must already be indexed).
    pub fn restrict(&self, k_values: &[usize]) -> Result<Self, KmerError> {
        let ks = validate_k_values(k_values)?;
        let mut tables = BTreeMap::new();
        for &k in &ks {
            let t = self.tables.get(&k).ok_or(KmerError::MissingK(k))?;
            tables.insert(k, t.clone());
        }
        Ok(Self { k_values: ks, tables, vocab: self.vocab.clone(), source: self.source.clone() })
    }

    /// Adds another index's counts into this one.
    pub fn merge(&mut self, other: &KmerIndex) -> Result<(), KmerError> {
        if self.k_values != other.k_values {
            return Err(KmerError::Incompatible("different k values".into()));
        }
        if self.vocab != other.vocab {
            return Err(KmerError::Incompatible("different vocabularies".into()));
        }
        for (k, theirs) in &other.tables {
            let mine = self.tables.get_mut(k).expect("k sets are equal");
            for (kmer, &n) in &theirs.counts {
                mine.add(kmer, n);
            }
        }
        self.source.sequences += other.source.sequences;
        self.source.dropped += other.source.dropped;
        Ok(())
    }

    /// Windows of `tail[-(k-1)..] ++ candidate` that overlap the candidate.
    fn windows<'a>(
        k: usize,
        candidate: &'a [TokenId],
        context_tail: &'a [TokenId],
    ) -> impl Iterator<Item = Vec<TokenId>> + 'a {
        let tail = &context_tail[context_tail.len().saturating_sub(k - 1)..];
        let t = tail.len();
        let span = t + candidate.len();
        let start = t + 1 - k.min(t + 1);
        let at = move |i: usize| if i < t { tail[i] } else { candidate[i - t] };
        (start..(span + 1).saturating_sub(k)).map(move |i| (i..i + k).map(at).collect())
    }

    pub fn contribution(&self, k: usize, candidate: &[TokenId], context_tail: &[TokenId]) -> f64 {
        let Some(table) = self.tables.get(&k) else { return 0.0 };
        if candidate.is_empty() || table.total == 0 {
            return 0.0;
        }
        let sum: f64 =
            Self::windows(k, candidate, context_tail).map(|w| table.probability(&w)).sum();
        sum / candidate.len() as f64
    }

    /// Motif score of `candidate`. `context_tail` holds the most recent
    /// context tokens (pass an empty slice to score candidate windows only).
    pub fn score(&self, candidate: &[TokenId], context_tail: &[TokenId]) -> KmerScore {
        let contributions: Vec<(usize, f64)> = self
            .k_values
            .iter()
            .map(|&k| (k, self.contribution(k, candidate, context_tail)))
            .collect();
        KmerScore { value: contributions.iter().map(|(_, c)| c).sum(), contributions }
    }

    /// Same quantity as [`score`](Self::score) in exact rational arithmetic.
    pub fn score_exact(&self, candidate: &[TokenId], context_tail: &[TokenId]) -> Ratio<i128> {
        if candidate.is_empty() {
            return Ratio::from_integer(0);
        }
        let mut acc = Ratio::from_integer(0);
        for &k in &self.k_values {
            for w in Self::windows(k, candidate, context_tail) {
                acc += self.probability_exact(&w);
            }
        }
        acc / candidate.len() as i128
    }

    pub fn save(&self, path: &Path) -> Result<(), KmerError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KmerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, KmerError> {
        let mut doc = IndexDocument {
            version: INDEX_VERSION.into(),
            vocabulary: self.vocab.manifest(),
            k_values: self.k_values.clone(),
            kmers: BTreeMap::new(),
            totals: BTreeMap::new(),
            source: self.source.clone(),
            checksum: String::new(),
        };
        for (&k, table) in &self.tables {
            let mut entries: Vec<KmerEntry> = table
                .counts
                .iter()
                .map(|(kmer, &count)| KmerEntry { kmer: self.vocab.decode_ids(kmer), count })
                .collect();
            entries.sort_by(|a, b| a.kmer.cmp(&b.kmer));
            doc.kmers.insert(k.to_string(), entries);
            doc.totals.insert(k.to_string(), table.total);
        }
        doc.checksum = doc.compute_checksum();
        serde_json::to_string_pretty(&doc).map_err(|e| KmerError::CorruptIndex(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, KmerError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| KmerError::CorruptIndex(e.to_string()))?;
        let found = raw.get("version").and_then(|v| v.as_str()).unwrap_or_default();
        if found != INDEX_VERSION {
            return Err(KmerError::VersionMismatch {
                found: found.to_string(),
                expected: INDEX_VERSION.into(),
            });
        }
        let doc: IndexDocument =
            serde_json::from_value(raw).map_err(|e| KmerError::CorruptIndex(e.to_string()))?;
        if doc.compute_checksum() != doc.checksum {
            return Err(KmerError::CorruptIndex("checksum mismatch".into()));
        }
        let vocab = Vocabulary::from_manifest(&doc.vocabulary)?;
        let k_values = validate_k_values(&doc.k_values)?;
        let mut tables = BTreeMap::new();
        for &k in &k_values {
            let key = k.to_string();
            let entries = doc
                .kmers
                .get(&key)
                .ok_or_else(|| KmerError::CorruptIndex(format!("missing table for k = {k}")))?;
            let mut table = KmerTable::default();
            for e in entries {
                let ids: Vec<TokenId> = e
                    .kmer
                    .chars()
                    .map(|c| vocab.residue_id(c))
                    .collect::<Option<_>>()
                    .ok_or_else(|| KmerError::CorruptIndex(format!("bad k-mer {:?}", e.kmer)))?;
                if ids.len() != k {
                    return Err(KmerError::CorruptIndex(format!("k-mer {:?} has length != {k}", e.kmer)));
                }
                table.add(&ids, e.count);
            }
            if doc.totals.get(&key).copied() != Some(table.total) {
                return Err(KmerError::CorruptIndex(format!("total for k = {k} disagrees with counts")));
            }
            tables.insert(k, table);
        }
        Ok(Self { k_values, tables, vocab, source: doc.source })
    }
}

/// Argmax over candidate scores; ties go to the lowest position.
pub fn select_best(
    candidates: &[TokenSequence],
    context_tail: &[TokenId],
    index: &KmerIndex,
) -> (usize, KmerScore) {
    assert!(!candidates.is_empty(), "select_best needs at least one candidate");
    let mut best: Option<(usize, KmerScore)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = index.score(c.as_slice(), context_tail);
        if best.as_ref().is_none_or(|(_, b)| s.value > b.value) {
            best = Some((i, s));
        }
    }
    best.expect("non-empty")
}

#[derive(Debug, Serialize, Deserialize)]
struct KmerEntry {
    kmer: String,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexDocument {
    version: String,
    vocabulary: VocabManifest,
    k_values: Vec<usize>,
    kmers: BTreeMap<String, Vec<KmerEntry>>,
    totals: BTreeMap<String, u64>,
    source: SourceMeta,
    checksum: String,
}

impl IndexDocument {
    fn compute_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.version.as_bytes());
        hasher.update(serde_json::to_vec(&self.vocabulary).expect("serializable"));
        hasher.update(serde_json::to_vec(&self.k_values).expect("serializable"));
        hasher.update(serde_json::to_vec(&self.kmers).expect("serializable"));
        hasher.update(serde_json::to_vec(&self.totals).expect("serializable"));
        hasher.update(serde_json::to_vec(&self.source).expect("serializable"));
        hex::encode(hasher.finalize())
    }
}

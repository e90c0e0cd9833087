//! Exact sequence distributions for small instances, and comparison of
//! empirical samples against them.
//!
//! [`exact_model_distribution`] enumerates every completion of a context up to
//! a fixed length under a model's warped conditionals. Paths that emit the
//! end-of-sequence token stop there and keep their mass.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::coupling::{acceptance_ratio, couple, residual, CouplingError};
use crate::decode::{speculative_generate, DecodeConfig, DecodeError};
use crate::lm::{sample, warp, Distribution, LanguageModel, LmError, SamplerConfig};
use crate::rng::{derive_seed, stream, Purpose};
use crate::vocab::TokenId;

/// Largest enumeration space accepted.
pub const MAX_SPACE: u128 = 10_000_000;
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration space {vocab}^{length} exceeds {MAX_SPACE}")]
    SpaceTooLarge { vocab: usize, length: usize },
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    /// Generated continuations (context excluded) and their probabilities.
    pub probs: BTreeMap<Vec<TokenId>, f64>,
    pub length: usize,
}

impl ExactDistribution {
    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.values().copied())
    }

    pub fn prob(&self, seq: &[TokenId]) -> f64 {
        self.probs.get(seq).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Total variation distance to another exact distribution.
    pub fn tv(&self, other: &ExactDistribution) -> f64 {
        let mine = self.probs.iter().map(|(k, p)| (p - other.prob(k)).abs());
        let theirs = other.probs.iter().filter(|(k, _)| !self.probs.contains_key(*k)).map(|(_, p)| *p);
        0.5 * compensated_sum(mine.chain(theirs))
    }
}

struct Walk<'a> {
    model: &'a dyn LanguageModel,
    cfg: &'a SamplerConfig,
    context: &'a [TokenId],
    length: usize,
    eos: Option<TokenId>,
}

impl Walk<'_> {
    fn run(&self, prefix: &mut Vec<TokenId>, log_p: f64, out: &mut Vec<(Vec<TokenId>, f64)>) -> Result<(), LmError> {
        if prefix.len() == self.length || (self.eos.is_some() && prefix.last().copied() == self.eos) {
            out.push((prefix.clone(), log_p.exp()));
            return Ok(());
        }
        let full: Vec<TokenId> = self.context.iter().chain(prefix.iter()).copied().collect();
        let d = warp(&self.model.next_distribution(&full)?, self.cfg)?;
        for tok in d.support() {
            prefix.push(tok);
            self.run(prefix, log_p + d.prob(tok).ln(), out)?;
            prefix.pop();
        }
        Ok(())
    }
}

/// Chain-rule distribution over continuations of `context` with exactly
/// `length` tokens, or fewer when ending in end-of-sequence.
pub fn exact_model_distribution(
    model: &dyn LanguageModel,
    context: &[TokenId],
    length: usize,
    cfg: &SamplerConfig,
) -> Result<ExactDistribution, OracleError> {
    let v = model.vocab().len();
    let space = (v as u128).checked_pow(length as u32);
    if space.is_none_or(|s| s > MAX_SPACE) {
        return Err(OracleError::SpaceTooLarge { vocab: v, length });
    }
    cfg.validate()?;
    let eos = model.vocab().eos();
    if length == 0 {
        return Ok(ExactDistribution { probs: BTreeMap::from([(Vec::new(), 1.0)]), length });
    }
    let first = warp(&model.next_distribution(context)?, cfg)?;
    let walk = Walk { model, cfg, context, length, eos };
    let branches: Vec<Vec<(Vec<TokenId>, f64)>> = first
        .support()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|tok| {
            let mut out = Vec::new();
            let mut prefix = vec![tok];
            walk.run(&mut prefix, first.prob(tok).ln(), &mut out)?;
            Ok(out)
        })
        .collect::<Result<_, LmError>>()?;
    let probs = branches.into_iter().flatten().collect();
    Ok(ExactDistribution { probs, length })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub samples: usize,
    pub tv: f64,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_p: f64,
    /// Fraction of samples outside the enumerated support.
    pub out_of_space: f64,
}

/// Empirical counts keyed by sequence.
pub fn tally<'a>(samples: impl IntoIterator<Item = &'a [TokenId]>) -> HashMap<Vec<TokenId>, u64> {
    let mut counts: HashMap<Vec<TokenId>, u64> = HashMap::new();
    for s in samples {
        *counts.entry(s.to_vec()).or_default() += 1;
    }
    counts
}

/// TV distance and chi-square goodness of fit of sample counts against
/// `exact`. Cells are taken in ascending order of expected count and pooled
/// until each pool expects at least [`MIN_EXPECTED`] samples; a short final
/// pool is folded into the previous one. Out-of-space samples count toward TV
/// and are excluded from the chi-square test.
pub fn compare_counts(counts: &HashMap<Vec<TokenId>, u64>, exact: &ExactDistribution) -> Comparison {
    let n: u64 = counts.values().sum();
    let nf = n as f64;
    let outside: u64 = counts.iter().filter(|(k, _)| !exact.probs.contains_key(*k)).map(|(_, c)| c).sum();
    let count = |k: &Vec<TokenId>| counts.get(k).copied().unwrap_or(0) as f64;
    let tv = 0.5
        * compensated_sum(
            exact.probs.iter().map(|(k, p)| (count(k) / nf - p).abs()).chain(std::iter::once(outside as f64 / nf)),
        );

    let inside = nf - outside as f64;
    let mut cells: Vec<(f64, f64)> = exact.probs.iter().map(|(k, p)| (p * inside, count(k))).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pools: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (e, o) in cells {
        acc = (acc.0 + e, acc.1 + o);
        if acc.0 >= MIN_EXPECTED {
            pools.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match pools.last_mut() {
            Some(last) => *last = (last.0 + acc.0, last.1 + acc.1),
            None => pools.push(acc),
        }
    }
    let chi2 = compensated_sum(pools.iter().filter(|(e, _)| *e > 0.0).map(|(e, o)| (o - e).powi(2) / e));
    let dof = pools.len().saturating_sub(1);
    let chi2_p = if dof == 0 {
        1.0
    } else {
        let d = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        d.sf(chi2)
    };
    Comparison { samples: n as usize, tv, chi2, dof, chi2_p, out_of_space: outside as f64 / nf }
}

pub fn compare_empirical<'a>(samples: impl IntoIterator<Item = &'a [TokenId]>, exact: &ExactDistribution) -> Comparison {
    compare_counts(&tally(samples), exact)
}

/// Output marginal of one coupling step with `x ~ p`, by enumeration over `x`.
pub fn coupling_marginal(p: &Distribution, q: &Distribution) -> Result<Vec<f64>, CouplingError> {
    let mut marginal = vec![0.0; q.len()];
    let mut reject = 0.0;
    for x in p.support() {
        let a = acceptance_ratio(x, p, q)?;
        marginal[x as usize] += p.prob(x) * a;
        reject += p.prob(x) * (1.0 - a);
    }
    match residual(p, q) {
        Ok(r) => marginal.iter_mut().zip(r.probs()).for_each(|(m, rp)| *m += reject * rp),
        Err(CouplingError::IdenticalDistributions) => {}
        Err(e) => return Err(e),
    }
    Ok(marginal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingCheck {
    pub trials: u64,
    pub counts: Vec<u64>,
    /// Largest `|empirical - q|` over tokens.
    pub max_deviation: f64,
    /// Largest deviation in binomial standard errors.
    pub max_z: f64,
    /// Largest `|exact marginal - q|` over tokens.
    pub exact_deviation: f64,
}

/// Monte Carlo check of the coupling output marginal against `q`.
pub fn check_coupling(p: &Distribution, q: &Distribution, trials: u64, seed: u64) -> Result<CouplingCheck, OracleError> {
    const CHUNK: u64 = 1 << 16;
    let chunks = trials.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<u64>, CouplingError> {
            let mut draft = stream(seed, Purpose::Draft, c, 0);
            let mut verify = stream(seed, Purpose::Verify, c, 0);
            let mut counts = vec![0u64; q.len()];
            for _ in 0..CHUNK.min(trials - c * CHUNK) {
                let x = sample(p, &mut draft);
                counts[couple(x, p, q, &mut verify)?.token as usize] += 1;
            }
            Ok(counts)
        })
        .try_reduce(|| vec![0; q.len()], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()))?;
    let n = trials as f64;
    let (mut max_deviation, mut max_z) = (0.0f64, 0.0f64);
    for (c, &t) in counts.iter().zip(q.probs()) {
        let dev = (*c as f64 / n - t).abs();
        max_deviation = max_deviation.max(dev);
        let se = (t * (1.0 - t) / n).sqrt();
        if se > 0.0 {
            max_z = max_z.max(dev / se);
        } else if dev > 0.0 {
            max_z = f64::INFINITY;
        }
    }
    let exact = coupling_marginal(p, q)?;
    let exact_deviation = exact.iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(CouplingCheck { trials, counts, max_deviation, max_z, exact_deviation })
}

/// Tallies the generated parts of `samples` speculative generations; member
/// `i` runs with seed `derive_seed(cfg.seed, Sequence, i)`.
pub fn speculative_counts(
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    cfg: &DecodeConfig,
    samples: u64,
) -> Result<HashMap<Vec<TokenId>, u64>, OracleError> {
    let merge = |mut a: HashMap<Vec<TokenId>, u64>, b: HashMap<Vec<TokenId>, u64>| {
        for (k, v) in b {
            *a.entry(k).or_default() += v;
        }
        a
    };
    let counts = (0..samples)
        .into_par_iter()
        .try_fold(HashMap::new, |mut acc: HashMap<Vec<TokenId>, u64>, i| {
            let mut member = cfg.clone();
            member.seed = derive_seed(cfg.seed, Purpose::Sequence, i);
            let r = speculative_generate(draft, target, &member)?;
            *acc.entry(r.generated().to_vec()).or_default() += 1;
            Ok::<_, DecodeError>(acc)
        })
        .try_reduce(HashMap::new, |a, b| Ok(merge(a, b)))?;
    Ok(counts)
}

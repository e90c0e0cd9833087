//! Token-level maximal coupling.
//!
//! Given a drafted token `x ~ p`, accept it with probability
//! `min(1, q(x)/p(x))`; otherwise resample from the residual
//! `p_res = (q - min(p, q)) / (1 - sum min(p, q))`. The output is then
//! distributed exactly as `q`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{sample, Distribution};
use crate::vocab::TokenId;

/// Residual denominators at or below this are treated as `p == q`.
pub const IDENTICAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("draft and target distributions are identical; no residual exists")]
    IdenticalDistributions,
    #[error("drafted token {0} has zero draft probability")]
    DraftZeroProbability(TokenId),
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub token: TokenId,
    pub accepted: bool,
    pub eta: f64,
    pub residual_used: bool,
}

fn check_lengths(p: &Distribution, q: &Distribution) -> Result<(), CouplingError> {
    if p.len() != q.len() {
        return Err(CouplingError::LengthMismatch(p.len(), q.len()));
    }
    Ok(())
}

/// `sum_x min(p(x), q(x))`, i.e. `1 - TV(p, q)`.
pub fn acceptance_probability(p: &Distribution, q: &Distribution) -> f64 {
    p.probs().iter().zip(q.probs()).map(|(a, b)| a.min(*b)).sum()
}

/// `min(1, q(x)/p(x))` for a drafted token.
pub fn acceptance_ratio(x: TokenId, p: &Distribution, q: &Distribution) -> Result<f64, CouplingError> {
    let px = p.prob(x);
    if px <= 0.0 {
        return Err(CouplingError::DraftZeroProbability(x));
    }
    Ok((q.prob(x) / px).min(1.0))
}

pub fn residual(p: &Distribution, q: &Distribution) -> Result<Distribution, CouplingError> {
    check_lengths(p, q)?;
    let overlap = acceptance_probability(p, q);
    let denom = 1.0 - overlap;
    if denom <= IDENTICAL_TOLERANCE {
        return Err(CouplingError::IdenticalDistributions);
    }
    let excess: Vec<f64> =
        p.probs().iter().zip(q.probs()).map(|(a, b)| (b - a.min(*b)).max(0.0)).collect();
    // normalized by the realized excess, which equals `denom` up to rounding
    Distribution::from_weights(excess).map_err(|_| CouplingError::IdenticalDistributions)
}

/// One accept/correct step. `eta` is always drawn first so the rng position
/// after a step depends only on whether the residual was sampled.
pub fn couple<R: Rng + ?Sized>(
    x: TokenId,
    p: &Distribution,
    q: &Distribution,
    rng: &mut R,
) -> Result<CouplingOutcome, CouplingError> {
    check_lengths(p, q)?;
    let ratio = acceptance_ratio(x, p, q)?;
    let eta: f64 = rng.random();
    if eta <= ratio {
        return Ok(CouplingOutcome { token: x, accepted: true, eta, residual_used: false });
    }
    match residual(p, q) {
        Ok(res) => {
            let token = sample(&res, rng);
            Ok(CouplingOutcome { token, accepted: false, eta, residual_used: true })
        }
        // p == q up to tolerance: acceptance is certain in exact arithmetic
        Err(CouplingError::IdenticalDistributions) => {
            Ok(CouplingOutcome { token: x, accepted: true, eta, residual_used: false })
        }
        Err(e) => Err(e),
    }
}

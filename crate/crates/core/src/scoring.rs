//! Density-ratio scoring: per-dimension log ratios, weighted aggregation,
//! the signed-weight reward clamp, and the acceptance test.
//!
//! With strictly positive weights the aggregated score is computed as
//! `logsumexp_i(ln a_i + log_ratio_i)`. Any non-positive weight switches to
//! linear-domain signed summation with the reward clamped at zero, under
//! which a non-positive score means certain rejection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::log_info;
use crate::math::logsumexp;

/// Exponent cap applied when materializing a ratio in linear domain.
pub const RATIO_EXP_CAP: f64 = 700.0;

/// The preference weight vector. Signed values are permitted; weights are
/// never renormalized internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceWeights {
    alphas: Vec<f64>,
}

impl PreferenceWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Input(
                "at least one preference weight required".into(),
            ));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::Input("preference weights must be finite".into()));
        }
        if alphas.iter().all(|&a| a == 0.0) {
            return Err(Error::Input(
                "preference weights must not all be zero".into(),
            ));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// True iff every weight is strictly positive, enabling log-domain
    /// aggregation.
    pub fn positive_mode(&self) -> bool {
        self.alphas.iter().all(|&a| a > 0.0)
    }

    /// Sum of the positive parts; the scale the conservative default bound
    /// builds on.
    pub fn positive_mass(&self) -> f64 {
        self.alphas.iter().map(|a| a.max(0.0)).sum()
    }
}

/// Cumulative per-chunk log ratio: the sum of per-position differences
/// between a preference model's and the reference model's log-probabilities.
///
/// The reference entries must be finite (a proposal always has positive
/// reference probability); a `-inf` preference entry yields `-inf`.
pub fn chunk_log_ratio(pref_logprobs: &[f64], ref_logprobs: &[f64]) -> Result<f64> {
    if pref_logprobs.len() != ref_logprobs.len() {
        return Err(Error::Input(format!(
            "log-probability lists have lengths {} and {}",
            pref_logprobs.len(),
            ref_logprobs.len()
        )));
    }
    if pref_logprobs.is_empty() {
        return Err(Error::Input("empty log-probability lists".into()));
    }
    let mut total = 0.0;
    for (&p, &r) in pref_logprobs.iter().zip(ref_logprobs) {
        if p.is_nan() || r.is_nan() || p == f64::INFINITY || r == f64::INFINITY {
            return Err(Error::Input("log-probability entry is NaN or +inf".into()));
        }
        if p > crate::model::NORMALIZATION_TOL || r > crate::model::NORMALIZATION_TOL {
            return Err(Error::Input("log-probability entry is positive".into()));
        }
        if r == f64::NEG_INFINITY {
            return Err(Error::InvalidProposal(
                "proposal token has zero reference probability".into(),
            ));
        }
        if p == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += p - r;
    }
    Ok(total)
}

/// Log-domain aggregation `logsumexp_i(ln a_i + log_ratio_i)`; requires
/// strictly positive weights.
pub fn aggregate_log_score(weights: &PreferenceWeights, log_ratios: &[f64]) -> Result<f64> {
    if !weights.positive_mode() {
        return Err(Error::Mode(
            "log-domain aggregation requires strictly positive weights".into(),
        ));
    }
    if log_ratios.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} log ratios for {} weights",
            log_ratios.len(),
            weights.len()
        )));
    }
    let terms: Vec<f64> = weights
        .alphas()
        .iter()
        .zip(log_ratios)
        .map(|(&a, &lr)| a.ln() + lr)
        .collect();
    Ok(logsumexp(&terms))
}

/// Linear-domain signed score with the zero clamp.
///
/// Returns `(linear_score, log_score)` where `linear_score` is the signed sum
/// of weighted ratios (each ratio capped at `exp(700)`) and `log_score` is
/// its natural log, `-inf` whenever the sum is non-positive.
pub fn signed_reward(weights: &PreferenceWeights, log_ratios: &[f64]) -> Result<(f64, f64)> {
    if log_ratios.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} log ratios for {} weights",
            log_ratios.len(),
            weights.len()
        )));
    }
    let mut linear = 0.0;
    for (&a, &lr) in weights.alphas().iter().zip(log_ratios) {
        let ratio = if lr > RATIO_EXP_CAP {
            log_info!("ratio overflow: log ratio {lr:.3} capped at exp({RATIO_EXP_CAP})");
            RATIO_EXP_CAP.exp()
        } else {
            lr.exp()
        };
        linear += a * ratio;
    }
    let log_score = if linear > 0.0 {
        linear.ln()
    } else {
        f64::NEG_INFINITY
    };
    Ok((linear, log_score))
}

/// The score attached to one candidate chunk (or prefix).
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkScore {
    /// Per-dimension cumulative log ratios.
    pub log_ratios: Vec<f64>,
    /// Aggregated log score driving the acceptance test; `-inf` means the
    /// candidate can never be accepted.
    pub log_score: f64,
    /// Signed linear-domain sum before the clamp.
    pub linear_score: f64,
}

impl ChunkScore {
    /// Aggregate per-dimension ratios under `weights`, picking the log-domain
    /// or clamped-linear path by weight mode.
    pub fn compute(weights: &PreferenceWeights, log_ratios: Vec<f64>) -> Result<Self> {
        let (linear_score, clamped_log) = signed_reward(weights, &log_ratios)?;
        let log_score = if weights.positive_mode() {
            aggregate_log_score(weights, &log_ratios)?
        } else {
            clamped_log
        };
        Ok(Self {
            log_ratios,
            log_score,
            linear_score,
        })
    }
}

/// Log-domain rejection-sampling test: accept iff `ln(u) < log_score - log_m`.
///
/// A `-inf` score always rejects; `log_score >= log_m` always accepts.
pub fn accept_test(log_score: f64, log_m: f64, u: f64) -> bool {
    debug_assert!(log_m.is_finite(), "acceptance bound must be finite");
    debug_assert!(u > 0.0 && u < 1.0);
    if log_score == f64::NEG_INFINITY {
        return false;
    }
    u.ln() < log_score - log_m
}

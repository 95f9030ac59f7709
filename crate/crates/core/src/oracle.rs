//! Brute-force target distributions and the statistics used to compare
//! samplers against them.
//!
//! Everything here recomputes probabilities directly from model evaluations
//! with its own arithmetic, independent of the scoring path the decoders
//! use, so agreement between a sampler and these oracles is meaningful.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LanguageModel, Token, TokenSequence, Vocabulary};
use crate::scoring::PreferenceWeights;

/// Enumeration guard: `vocab_size ^ max_len` must stay at or below this.
pub const ENUMERATION_GUARD: f64 = 1e7;

/// An explicit distribution over token sequences.
///
/// Sequences are either eos-terminated or truncated at the support's maximum
/// length; probabilities sum to one within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDistribution {
    entries: BTreeMap<TokenSequence, f64>,
    max_len: usize,
}

impl SequenceDistribution {
    pub fn new(entries: BTreeMap<TokenSequence, f64>, max_len: usize) -> Result<Self> {
        let total: f64 = entries.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "sequence probabilities sum to {total}"
            )));
        }
        if entries.values().any(|p| *p < 0.0) {
            return Err(Error::Input("negative sequence probability".into()));
        }
        Ok(Self { entries, max_len })
    }

    pub fn entries(&self) -> &BTreeMap<TokenSequence, f64> {
        &self.entries
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn probability(&self, seq: &TokenSequence) -> f64 {
        self.entries.get(seq).copied().unwrap_or(0.0)
    }

    /// Collapse to the distribution of the first token (sequences of length
    /// zero contribute nothing).
    pub fn first_token_marginal(&self) -> BTreeMap<Token, f64> {
        let mut out = BTreeMap::new();
        for (seq, p) in &self.entries {
            if let Some(&first) = seq.tokens().first() {
                *out.entry(first).or_insert(0.0) += p;
            }
        }
        out
    }
}

/// All continuations a bounded decode can produce: eos-terminated sequences
/// of length <= `max_len` plus non-terminated sequences of exactly `max_len`.
pub fn enumerate_sequences(
    vocab: &Vocabulary,
    prompt: &TokenSequence,
    max_len: usize,
) -> Result<Vec<TokenSequence>> {
    vocab.validate_context(prompt.tokens())?;
    let total = (vocab.size() as f64).powi(max_len as i32);
    if total > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard(format!(
            "{}^{max_len} sequences exceed the {ENUMERATION_GUARD:e} guard",
            vocab.size()
        )));
    }
    let eos = vocab.eos();
    let plain: Vec<Token> = (0..vocab.size()).filter(|&t| t != eos).collect();
    let mut out = Vec::new();
    // Depth-first over non-eos stems; each stem shorter than max_len may
    // close with eos, and stems of full length stand as truncated tails.
    let mut stack: Vec<Vec<Token>> = vec![Vec::new()];
    while let Some(stem) = stack.pop() {
        if stem.len() == max_len {
            out.push(TokenSequence::from_tokens(stem));
            continue;
        }
        let mut terminated = stem.clone();
        terminated.push(eos);
        out.push(TokenSequence::from_tokens(terminated));
        for &t in plain.iter().rev() {
            let mut next = stem.clone();
            next.push(t);
            stack.push(next);
        }
    }
    Ok(out)
}

/// Log-probability of `continuation` after `prompt`, accumulated in log
/// domain from direct model evaluations.
fn sequence_logprob(
    model: &dyn LanguageModel,
    prompt: &[Token],
    continuation: &[Token],
) -> Result<f64> {
    let mut ctx = prompt.to_vec();
    let mut total = 0.0;
    for &tok in continuation {
        let dist = model.logprobs(&ctx)?;
        total += dist.get(tok);
        ctx.push(tok);
    }
    Ok(total)
}

/// Linear-domain twin of [`sequence_logprob`]: probabilities multiplied
/// token by token.
fn sequence_prob_linear(
    model: &dyn LanguageModel,
    prompt: &[Token],
    continuation: &[Token],
) -> Result<f64> {
    let mut ctx = prompt.to_vec();
    let mut total = 1.0;
    for &tok in continuation {
        let dist = model.logprobs(&ctx)?;
        total *= dist.get(tok).exp();
        ctx.push(tok);
    }
    Ok(total)
}

fn normalize_target(
    raw: Vec<(TokenSequence, f64)>,
    max_len: usize,
) -> Result<SequenceDistribution> {
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::InfeasibleTarget(
            "every sequence has zero clamped reward".into(),
        ));
    }
    let entries = raw.into_iter().map(|(s, w)| (s, w / total)).collect();
    SequenceDistribution::new(entries, max_len)
}

/// The exact target distribution over bounded continuations:
/// `p(y) proportional to pi_ref(y) * max(0, sum_i alpha_i r_i(y))`,
/// accumulating per-token terms in log domain.
pub fn target_distribution(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    prompt: &TokenSequence,
    max_len: usize,
) -> Result<SequenceDistribution> {
    if pref_models.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} preference models for {} weights",
            pref_models.len(),
            weights.len()
        )));
    }
    let sequences = enumerate_sequences(ref_model.vocab(), prompt, max_len)?;
    let mut raw = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let ref_lp = sequence_logprob(ref_model, prompt.tokens(), seq.tokens())?;
        let mut score = 0.0;
        for (model, &alpha) in pref_models.iter().zip(weights.alphas()) {
            let pref_lp = sequence_logprob(*model, prompt.tokens(), seq.tokens())?;
            // ratio r_i = exp(log pref - log ref); zero reference probability
            // only happens off the proposal support, where the target mass is
            // zero anyway.
            let ratio = if ref_lp == f64::NEG_INFINITY {
                0.0
            } else {
                (pref_lp - ref_lp).exp()
            };
            score += alpha * ratio;
        }
        let weight = ref_lp.exp() * score.max(0.0);
        raw.push((seq, weight));
    }
    normalize_target(raw, max_len)
}

/// Independent route to [`target_distribution`]: per-token probabilities
/// multiplied in linear domain. Used to cross-check the oracle itself.
pub fn target_distribution_linear(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    prompt: &TokenSequence,
    max_len: usize,
) -> Result<SequenceDistribution> {
    if pref_models.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} preference models for {} weights",
            pref_models.len(),
            weights.len()
        )));
    }
    let sequences = enumerate_sequences(ref_model.vocab(), prompt, max_len)?;
    let mut raw = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let ref_p = sequence_prob_linear(ref_model, prompt.tokens(), seq.tokens())?;
        let mut score = 0.0;
        for (model, &alpha) in pref_models.iter().zip(weights.alphas()) {
            let pref_p = sequence_prob_linear(*model, prompt.tokens(), seq.tokens())?;
            let ratio = if ref_p == 0.0 { 0.0 } else { pref_p / ref_p };
            score += alpha * ratio;
        }
        raw.push((seq, ref_p * score.max(0.0)));
    }
    normalize_target(raw, max_len)
}

/// Relative frequencies of the given samples.
pub fn empirical_distribution(samples: &[TokenSequence]) -> Result<SequenceDistribution> {
    if samples.is_empty() {
        return Err(Error::Input("no samples".into()));
    }
    let mut counts: BTreeMap<TokenSequence, u64> = BTreeMap::new();
    let mut max_len = 0;
    for s in samples {
        max_len = max_len.max(s.len());
        *counts.entry(s.clone()).or_insert(0) += 1;
    }
    let n = samples.len() as f64;
    let entries = counts.into_iter().map(|(s, c)| (s, c as f64 / n)).collect();
    SequenceDistribution::new(entries, max_len)
}

/// Total variation distance `0.5 * sum |p - q|` over the union support.
pub fn tv_distance(p: &SequenceDistribution, q: &SequenceDistribution) -> f64 {
    let mut keys: std::collections::BTreeSet<&TokenSequence> = p.entries().keys().collect();
    keys.extend(q.entries().keys());
    keys.iter()
        .map(|k| (p.probability(k) - q.probability(k)).abs())
        .sum::<f64>()
        / 2.0
}

/// The exact conditional law of a fully accepted chunk:
/// `P(C | accepted) proportional to pi_ref(C|ctx) * min(1, exp(S(C) - log_m))`.
///
/// The chunk space is every eos-terminated continuation of length <= k plus
/// every non-terminated continuation of exactly k.
pub fn exact_chunk_conditional(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    context: &TokenSequence,
    k: usize,
    log_m: f64,
) -> Result<SequenceDistribution> {
    if !log_m.is_finite() {
        return Err(Error::Input("log_m must be finite".into()));
    }
    let chunks = enumerate_sequences(ref_model.vocab(), context, k)?;
    let mut raw = Vec::with_capacity(chunks.len());
    for chunk in chunks {
        if chunk.is_empty() {
            continue;
        }
        let ref_lp = sequence_logprob(ref_model, context.tokens(), chunk.tokens())?;
        if ref_lp == f64::NEG_INFINITY {
            raw.push((chunk, 0.0));
            continue;
        }
        let mut score = 0.0;
        for (model, &alpha) in pref_models.iter().zip(weights.alphas()) {
            let pref_lp = sequence_logprob(*model, context.tokens(), chunk.tokens())?;
            score += alpha * (pref_lp - ref_lp).exp();
        }
        let acceptance = if score <= 0.0 {
            0.0
        } else {
            (score.ln() - log_m).exp().min(1.0)
        };
        raw.push((chunk, ref_lp.exp() * acceptance));
    }
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::InfeasibleTarget(
            "chunk acceptance mass is zero".into(),
        ));
    }
    let entries = raw.into_iter().map(|(s, w)| (s, w / total)).collect();
    SequenceDistribution::new(entries, k)
}

/// The largest aggregated log-score over the enumerated sequence space; the
/// tight envelope for sequence-level rejection sampling on toy instances.
pub fn max_log_score(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    prompt: &TokenSequence,
    max_len: usize,
) -> Result<f64> {
    let sequences = enumerate_sequences(ref_model.vocab(), prompt, max_len)?;
    let mut best = f64::NEG_INFINITY;
    for seq in sequences {
        if seq.is_empty() {
            continue;
        }
        let ref_lp = sequence_logprob(ref_model, prompt.tokens(), seq.tokens())?;
        if ref_lp == f64::NEG_INFINITY {
            continue;
        }
        let mut score = 0.0;
        for (model, &alpha) in pref_models.iter().zip(weights.alphas()) {
            let pref_lp = sequence_logprob(*model, prompt.tokens(), seq.tokens())?;
            score += alpha * (pref_lp - ref_lp).exp();
        }
        if score > 0.0 {
            best = best.max(score.ln());
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::InfeasibleTarget(
            "every sequence score is clamped".into(),
        ));
    }
    Ok(best)
}

/// One verification comparison, serialized into reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub name: String,
    pub tv: f64,
    pub threshold: f64,
    pub pass: bool,
    pub samples: u64,
    pub seed: u64,
}

/// Machine-readable verification report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub results: Vec<VerifyOutcome>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn push(&mut self, outcome: VerifyOutcome) {
        self.results.push(outcome);
    }
}

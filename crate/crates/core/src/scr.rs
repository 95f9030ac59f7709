//! Speculative chunk-level rejection decoding.
//!
//! Each iteration proposes a `k`-token chunk from the reference model, scores
//! it against every preference model via cumulative density ratios, and runs
//! a log-domain acceptance test against the adaptive bound. A rejected chunk
//! falls through a prefix salvage cascade (longest prefix first, each with a
//! fresh uniform draw, reusing the cached per-token terms) and finally a
//! single-token rejection-sampling fallback that guarantees progress.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bound::BoundEstimator;
use crate::error::{Error, Result};
use crate::event_log::{log_debug, log_info};
use crate::model::{
    propose_chunk_with_basis, uniform_open01, ChunkProposal, LanguageModel, RatioBasis,
    SamplingConfig, Token, TokenSequence,
};
use crate::scoring::{accept_test, chunk_log_ratio, ChunkScore, PreferenceWeights};
use crate::stats::DecodeStats;

/// Warm-up bound `log M0`: an explicit value or the conservative default
/// `ln(sum of positive weights) + 3`. Serialized as a float or the string
/// `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LogM0 {
    #[default]
    Auto,
    Value(f64),
}

impl LogM0 {
    pub fn resolve(&self, weights: &PreferenceWeights) -> f64 {
        match self {
            LogM0::Value(v) => *v,
            // The floor keeps the bound finite even when no weight is
            // positive (every candidate is clamped anyway).
            LogM0::Auto => weights.positive_mass().max(1e-12).ln() + 3.0,
        }
    }
}

impl Serialize for LogM0 {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LogM0::Auto => serializer.serialize_str("auto"),
            LogM0::Value(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for LogM0 {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(LogM0::Value(v)),
            Raw::Text(s) if s == "auto" => Ok(LogM0::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "log_M0 must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

/// Which scores feed the bound estimator: only committed candidates, or
/// every candidate observed (full chunks, prefixes, fallback attempts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferPolicy {
    #[default]
    Accepted,
    Observed,
}

/// Decoder configuration; defaults follow the standard operating point
/// (k=4, W=20, gamma=1.2, tau=0.01, temperature 0.7, top-p 0.9, 128 new
/// tokens, fallback cap 64).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub k: usize,
    pub window: usize,
    pub log_m0: LogM0,
    pub gamma: f64,
    pub tau: f64,
    pub sampling: SamplingConfig,
    pub max_new_tokens: usize,
    pub fallback_cap: usize,
    pub buffer_policy: BufferPolicy,
    pub ratio_basis: RatioBasis,
    /// Retry budget for sequence-level rejection sampling.
    pub seq_retry_cap: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            k: 4,
            window: 20,
            log_m0: LogM0::Auto,
            gamma: 1.2,
            tau: 0.01,
            sampling: SamplingConfig::default(),
            max_new_tokens: 128,
            fallback_cap: 64,
            buffer_policy: BufferPolicy::Accepted,
            ratio_basis: RatioBasis::Raw,
            seq_retry_cap: 10_000,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Input("k must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Input("window W must be >= 1".into()));
        }
        if self.gamma.is_nan() || self.gamma <= 1.0 {
            return Err(Error::Input(format!("gamma {} must be > 1", self.gamma)));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(Error::Input(format!("tau {} must be >= 0", self.tau)));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Input("max_new_tokens must be >= 1".into()));
        }
        if self.fallback_cap == 0 {
            return Err(Error::Input("fallback_cap must be >= 1".into()));
        }
        if self.seq_retry_cap == 0 {
            return Err(Error::Input("seq_retry_cap must be >= 1".into()));
        }
        if let LogM0::Value(v) = self.log_m0 {
            if !v.is_finite() {
                return Err(Error::Input("log_M0 must be finite".into()));
            }
        }
        self.sampling.validate()
    }

    pub fn estimator(&self, weights: &PreferenceWeights) -> BoundEstimator {
        BoundEstimator::new(
            self.window,
            self.log_m0.resolve(weights),
            self.gamma,
            self.tau,
        )
    }
}

/// How one decode iteration resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeKind {
    FullAccept,
    /// Accepted the prefix of this length (1 <= j <= k-1).
    PrefixAccept(usize),
    FallbackToken,
    /// Whole cascade rejected; nothing committed.
    Rejected,
}

/// Result of validating one proposal (and possibly its fallback).
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkOutcome {
    pub kind: OutcomeKind,
    pub committed: Vec<Token>,
    /// Log-scores of every candidate tested this round, in test order.
    pub score_records: Vec<f64>,
}

/// Score a proposal against every preference model and run the acceptance
/// cascade: full chunk first, then prefixes of length k-1 down to 1, each
/// with a fresh uniform draw. Prefix scores reuse the cached per-token terms.
pub fn validate_chunk(
    proposal: &ChunkProposal,
    pref_logprobs: &[Vec<f64>],
    weights: &PreferenceWeights,
    log_m: f64,
    rng: &mut dyn RngCore,
) -> Result<ChunkOutcome> {
    if !log_m.is_finite() {
        return Err(Error::Input("acceptance bound must be finite".into()));
    }
    let len = proposal.len();
    if len == 0 {
        return Err(Error::Input("empty proposal".into()));
    }
    if pref_logprobs.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} preference score lists for {} weights",
            pref_logprobs.len(),
            weights.len()
        )));
    }
    for lp in pref_logprobs {
        if lp.len() != len {
            return Err(Error::Input(
                "preference scores not aligned with proposal".into(),
            ));
        }
    }

    // Cumulative per-dimension log ratios for every prefix length; entry
    // [i][j] covers the first j+1 tokens under dimension i.
    let mut cumulative = vec![vec![0.0f64; len]; weights.len()];
    for (i, lp) in pref_logprobs.iter().enumerate() {
        for j in 0..len {
            cumulative[i][j] = chunk_log_ratio(&lp[..=j], &proposal.ref_logprobs[..=j])?;
        }
    }
    let score_at = |j: usize| -> Result<ChunkScore> {
        let ratios: Vec<f64> = cumulative.iter().map(|dim| dim[j]).collect();
        ChunkScore::compute(weights, ratios)
    };

    let mut records = Vec::with_capacity(len);
    let full = score_at(len - 1)?;
    records.push(full.log_score);
    if accept_test(full.log_score, log_m, uniform_open01(rng)) {
        log_debug!(
            "full chunk accepted (S = {:.4}, log_m = {log_m:.4})",
            full.log_score
        );
        return Ok(ChunkOutcome {
            kind: OutcomeKind::FullAccept,
            committed: proposal.tokens.clone(),
            score_records: records,
        });
    }

    for j in (1..len).rev() {
        let prefix = score_at(j - 1)?;
        records.push(prefix.log_score);
        if accept_test(prefix.log_score, log_m, uniform_open01(rng)) {
            log_debug!(
                "prefix of length {j} salvaged (S = {:.4})",
                prefix.log_score
            );
            return Ok(ChunkOutcome {
                kind: OutcomeKind::PrefixAccept(j),
                committed: proposal.tokens[..j].to_vec(),
                score_records: records,
            });
        }
    }

    Ok(ChunkOutcome {
        kind: OutcomeKind::Rejected,
        committed: Vec::new(),
        score_records: records,
    })
}

/// What a single-token fallback round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackResult {
    pub token: Token,
    pub log_score: f64,
    pub attempts: u64,
    pub cap_hit: bool,
    /// Log-score of every attempt, in order.
    pub score_records: Vec<f64>,
}

/// Single-token rejection sampling: propose one token from the reference,
/// score it, accept against the bound; after `fallback_cap` failures commit
/// the best finite-scoring attempt.
///
/// Errors with a progress stall when every attempt scored `-inf`.
pub fn rs1_fallback(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    context: &[Token],
    log_m: f64,
    cfg: &DecodeConfig,
    rng: &mut dyn RngCore,
) -> Result<FallbackResult> {
    if !log_m.is_finite() {
        return Err(Error::Input("acceptance bound must be finite".into()));
    }
    let mut best: Option<(Token, f64)> = None;
    let mut records = Vec::new();
    for attempt in 1..=cfg.fallback_cap {
        let dist = ref_model.logprobs(context)?;
        let token = crate::model::sample_token(&dist, &cfg.sampling, rng)?;
        let ref_lp = match cfg.ratio_basis {
            RatioBasis::Raw => dist.get(token),
            RatioBasis::Proposal => {
                let nucleus = crate::model::nucleus_distribution(&dist, &cfg.sampling)?;
                nucleus
                    .iter()
                    .find(|(t, _)| *t == token)
                    .map(|&(_, p)| p.ln())
                    .expect("sampled token is in its nucleus")
            }
        };
        let single = [token];
        let mut ratios = Vec::with_capacity(weights.len());
        for model in pref_models {
            let lp = model.score_continuation(context, &single)?;
            ratios.push(chunk_log_ratio(&lp, &[ref_lp])?);
        }
        let score = ChunkScore::compute(weights, ratios)?;
        records.push(score.log_score);
        if accept_test(score.log_score, log_m, uniform_open01(rng)) {
            return Ok(FallbackResult {
                token,
                log_score: score.log_score,
                attempts: attempt as u64,
                cap_hit: false,
                score_records: records,
            });
        }
        if score.log_score.is_finite() && best.is_none_or(|(_, s)| score.log_score > s) {
            best = Some((token, score.log_score));
        }
    }
    match best {
        Some((token, log_score)) => {
            log_info!(
                "fallback cap {} reached; committing best-scoring token {token} (S = {log_score:.4})",
                cfg.fallback_cap
            );
            Ok(FallbackResult {
                token,
                log_score,
                attempts: cfg.fallback_cap as u64,
                cap_hit: true,
                score_records: records,
            })
        }
        None => Err(Error::ProgressStall(format!(
            "all {} fallback attempts scored -inf",
            cfg.fallback_cap
        ))),
    }
}

/// Snapshot helper for per-run forward-pass deltas.
struct PassBaseline(Vec<u64>);

impl PassBaseline {
    fn take(ref_model: &dyn LanguageModel, pref_models: &[&dyn LanguageModel]) -> Self {
        let mut v = Vec::with_capacity(1 + pref_models.len());
        v.push(ref_model.forward_passes());
        v.extend(pref_models.iter().map(|m| m.forward_passes()));
        Self(v)
    }

    fn delta(&self, ref_model: &dyn LanguageModel, pref_models: &[&dyn LanguageModel]) -> Vec<u64> {
        let mut v = Vec::with_capacity(self.0.len());
        v.push(ref_model.forward_passes() - self.0[0]);
        for (i, m) in pref_models.iter().enumerate() {
            v.push(m.forward_passes() - self.0[i + 1]);
        }
        v
    }
}

pub(crate) fn check_shared_vocab(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
) -> Result<()> {
    for m in pref_models {
        if !ref_model.vocab().compatible(m.vocab()) {
            return Err(Error::Input(format!(
                "model {:?} does not share the reference vocabulary",
                m.label()
            )));
        }
    }
    Ok(())
}

/// Decode a continuation of `prompt` with speculative chunk-level rejection
/// sampling. Returns the full sequence (prompt included) and the run's
/// counters.
pub fn decode(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    cfg: &DecodeConfig,
    prompt: &TokenSequence,
    rng: &mut dyn RngCore,
) -> Result<(TokenSequence, DecodeStats)> {
    cfg.validate()?;
    check_shared_vocab(ref_model, pref_models)?;
    if pref_models.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} preference models for {} weights",
            pref_models.len(),
            weights.len()
        )));
    }
    let vocab = ref_model.vocab();
    vocab.validate_context(prompt.tokens())?;

    let start = std::time::Instant::now();
    let baseline = PassBaseline::take(ref_model, pref_models);
    let mut stats = DecodeStats::new(1 + pref_models.len());
    let mut estimator = cfg.estimator(weights);
    let mut sequence: Vec<Token> = prompt.tokens().to_vec();
    let mut emitted = 0usize;
    let mut terminated = false;
    // Consecutive fallback attempts whose score was -inf; decoding stalls
    // once this patience reaches max_new_tokens.
    let mut dead_attempts = 0usize;

    while emitted < cfg.max_new_tokens && !terminated {
        let k_eff = cfg.k.min(cfg.max_new_tokens - emitted);
        let proposal = propose_chunk_with_basis(
            ref_model,
            &sequence,
            k_eff,
            &cfg.sampling,
            cfg.ratio_basis,
            rng,
        )?;
        stats.chunks_proposed += 1;

        let mut pref_logprobs = Vec::with_capacity(pref_models.len());
        for model in pref_models {
            pref_logprobs.push(model.score_continuation(&sequence, &proposal.tokens)?);
        }

        let log_m = estimator.log_m();
        let outcome = validate_chunk(&proposal, &pref_logprobs, weights, log_m, rng)?;
        stats.candidates_tested += outcome.score_records.len() as u64;

        let mut round_records = outcome.score_records.clone();
        let committed_score;
        let committed: Vec<Token>;
        match outcome.kind {
            OutcomeKind::FullAccept => {
                stats.full_accepted += 1;
                stats.candidates_rejected += outcome.score_records.len() as u64 - 1;
                committed_score = Some(*outcome.score_records.last().unwrap());
                committed = outcome.committed;
                dead_attempts = 0;
            }
            OutcomeKind::PrefixAccept(_) => {
                stats.prefix_salvaged += 1;
                stats.candidates_rejected += outcome.score_records.len() as u64 - 1;
                committed_score = Some(*outcome.score_records.last().unwrap());
                committed = outcome.committed;
                dead_attempts = 0;
            }
            OutcomeKind::FallbackToken => {
                unreachable!("validate_chunk never yields fallback outcomes")
            }
            OutcomeKind::Rejected => {
                stats.chunks_rejected += 1;
                stats.candidates_rejected += outcome.score_records.len() as u64;
                match rs1_fallback(ref_model, pref_models, weights, &sequence, log_m, cfg, rng) {
                    Ok(fb) => {
                        stats.fallback_attempts += fb.attempts;
                        stats.candidates_tested += fb.attempts;
                        stats.candidates_rejected += fb.attempts - if fb.cap_hit { 0 } else { 1 };
                        if fb.cap_hit {
                            stats.fallback_cap_hits += 1;
                        }
                        // Finite-score attempts reset the stall patience.
                        if fb.score_records.iter().any(|s| s.is_finite()) {
                            dead_attempts = 0;
                        }
                        round_records.extend_from_slice(&fb.score_records);
                        committed_score = Some(fb.log_score);
                        committed = vec![fb.token];
                    }
                    Err(Error::ProgressStall(_)) => {
                        stats.fallback_attempts += cfg.fallback_cap as u64;
                        stats.candidates_tested += cfg.fallback_cap as u64;
                        stats.candidates_rejected += cfg.fallback_cap as u64;
                        dead_attempts += cfg.fallback_cap;
                        if dead_attempts >= cfg.max_new_tokens {
                            return Err(Error::ProgressStall(format!(
                                "{dead_attempts} consecutive fallback attempts scored -inf"
                            )));
                        }
                        log_info!(
                            "fallback produced no finite score; retrying ({dead_attempts} dead attempts)"
                        );
                        match cfg.buffer_policy {
                            BufferPolicy::Accepted => estimator.update(&[]),
                            BufferPolicy::Observed => {
                                round_records.extend(std::iter::repeat_n(
                                    f64::NEG_INFINITY,
                                    cfg.fallback_cap,
                                ));
                                estimator.update(&round_records);
                            }
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        sequence.extend_from_slice(&committed);
        emitted += committed.len();
        stats.tokens_emitted += committed.len() as u64;
        if committed.last() == Some(&vocab.eos()) {
            terminated = true;
        }

        match cfg.buffer_policy {
            BufferPolicy::Accepted => {
                estimator.update(&[committed_score.expect("committed round has a score")]);
            }
            BufferPolicy::Observed => estimator.update(&round_records),
        }
    }

    stats.forward_passes = baseline.delta(ref_model, pref_models);
    stats.wall_clock_seconds = start.elapsed().as_secs_f64();
    stats.finalize_rejection_rate();
    Ok((TokenSequence::from_tokens(sequence), stats))
}

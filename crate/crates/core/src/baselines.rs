//! Comparison decoders sharing the model and scoring layers: plain reference
//! sampling, sequence-level rejection sampling (the exactness reference),
//! token-level rejection sampling (the k=1 degenerate case), and weighted
//! log-probability fusion.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_token, LanguageModel, LogProbVector, Token, TokenSequence};
use crate::scoring::{accept_test, chunk_log_ratio, ChunkScore, PreferenceWeights};
use crate::scr::{check_shared_vocab, decode, DecodeConfig};
use crate::stats::DecodeStats;

/// Decoder selector for run configurations and the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Base,
    SeqRs,
    TokenRs,
    Mod,
    #[default]
    Scr,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 5] = [
        DecoderKind::Base,
        DecoderKind::SeqRs,
        DecoderKind::TokenRs,
        DecoderKind::Mod,
        DecoderKind::Scr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DecoderKind::Base => "base",
            DecoderKind::SeqRs => "seq-rs",
            DecoderKind::TokenRs => "token-rs",
            DecoderKind::Mod => "mod",
            DecoderKind::Scr => "scr",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "base" => Ok(DecoderKind::Base),
            "seq-rs" => Ok(DecoderKind::SeqRs),
            "token-rs" => Ok(DecoderKind::TokenRs),
            "mod" => Ok(DecoderKind::Mod),
            "scr" => Ok(DecoderKind::Scr),
            other => Err(Error::Input(format!("unknown decoder {other:?}"))),
        }
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Plain autoregressive sampling from the reference model: one forward pass
/// per token, no acceptance tests.
pub fn base_decode(
    ref_model: &dyn LanguageModel,
    cfg: &DecodeConfig,
    prompt: &TokenSequence,
    rng: &mut dyn RngCore,
) -> Result<(TokenSequence, DecodeStats)> {
    cfg.validate()?;
    let vocab = ref_model.vocab();
    vocab.validate_context(prompt.tokens())?;
    let start = std::time::Instant::now();
    let base_passes = ref_model.forward_passes();
    let mut stats = DecodeStats::new(1);
    let mut sequence = prompt.tokens().to_vec();
    for _ in 0..cfg.max_new_tokens {
        let dist = ref_model.logprobs(&sequence)?;
        let tok = sample_token(&dist, &cfg.sampling, rng)?;
        sequence.push(tok);
        stats.tokens_emitted += 1;
        if tok == vocab.eos() {
            break;
        }
    }
    stats.forward_passes = vec![ref_model.forward_passes() - base_passes];
    stats.wall_clock_seconds = start.elapsed().as_secs_f64();
    stats.finalize_rejection_rate();
    Ok((TokenSequence::from_tokens(sequence), stats))
}

/// Sequence-level rejection sampling against a caller-fixed envelope.
///
/// Whole continuations are drawn from the reference and accepted with
/// probability `min(1, exp(S - log_m))`. With an envelope that dominates
/// every sequence score this samples the target distribution exactly, which
/// is why the bound is not adaptive here.
pub fn seq_rs_decode(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    cfg: &DecodeConfig,
    prompt: &TokenSequence,
    log_m: f64,
    rng: &mut dyn RngCore,
) -> Result<(TokenSequence, DecodeStats)> {
    cfg.validate()?;
    check_shared_vocab(ref_model, pref_models)?;
    if !log_m.is_finite() {
        return Err(Error::Input("envelope log_m must be finite".into()));
    }
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
    let mut base_passes: Vec<u64> = Vec::with_capacity(1 + pref_models.len());
    base_passes.push(ref_model.forward_passes());
    base_passes.extend(pref_models.iter().map(|m| m.forward_passes()));
    let mut stats = DecodeStats::new(1 + pref_models.len());

    for _ in 0..cfg.seq_retry_cap {
        // Propose a full continuation, caching raw reference log-probs.
        let mut continuation: Vec<Token> = Vec::new();
        let mut ref_logprobs: Vec<f64> = Vec::new();
        let mut ctx = prompt.tokens().to_vec();
        for _ in 0..cfg.max_new_tokens {
            let dist = ref_model.logprobs(&ctx)?;
            let tok = sample_token(&dist, &cfg.sampling, rng)?;
            continuation.push(tok);
            ref_logprobs.push(dist.get(tok));
            if tok == vocab.eos() {
                break;
            }
            ctx.push(tok);
        }
        stats.chunks_proposed += 1;

        let mut ratios = Vec::with_capacity(weights.len());
        for model in pref_models {
            let lp = model.score_continuation(prompt.tokens(), &continuation)?;
            ratios.push(chunk_log_ratio(&lp, &ref_logprobs)?);
        }
        let score = ChunkScore::compute(weights, ratios)?;
        stats.candidates_tested += 1;
        if accept_test(score.log_score, log_m, crate::model::uniform_open01(rng)) {
            stats.full_accepted += 1;
            stats.tokens_emitted += continuation.len() as u64;
            let mut sequence = prompt.tokens().to_vec();
            sequence.extend_from_slice(&continuation);
            stats.forward_passes = vec![ref_model.forward_passes() - base_passes[0]];
            for (i, m) in pref_models.iter().enumerate() {
                stats
                    .forward_passes
                    .push(m.forward_passes() - base_passes[i + 1]);
            }
            stats.wall_clock_seconds = start.elapsed().as_secs_f64();
            stats.finalize_rejection_rate();
            return Ok((TokenSequence::from_tokens(sequence), stats));
        }
        stats.candidates_rejected += 1;
        stats.chunks_rejected += 1;
    }
    Err(Error::EnvelopeTooTight(format!(
        "no sequence accepted within {} proposals",
        cfg.seq_retry_cap
    )))
}

/// Token-level rejection sampling: the chunk decoder at k = 1 (there is no
/// prefix to salvage), sharing the adaptive bound semantics.
pub fn token_rs_decode(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    cfg: &DecodeConfig,
    prompt: &TokenSequence,
    rng: &mut dyn RngCore,
) -> Result<(TokenSequence, DecodeStats)> {
    let cfg = DecodeConfig {
        k: 1,
        ..cfg.clone()
    };
    decode(ref_model, pref_models, weights, &cfg, prompt, rng)
}

/// The per-position fused distribution used by [`mod_decode`]:
/// `normalize(log pi_ref + sum_i alpha_i (log pi_di - log pi_ref))`.
///
/// Tokens carrying `-inf` in the reference or in any preference model with a
/// non-zero weight fuse to `-inf`.
pub fn fused_logprobs(
    ref_dist: &LogProbVector,
    pref_dists: &[LogProbVector],
    alphas: &[f64],
) -> Result<LogProbVector> {
    if pref_dists.len() != alphas.len() {
        return Err(Error::Input(format!(
            "{} preference distributions for {} weights",
            pref_dists.len(),
            alphas.len()
        )));
    }
    let n = ref_dist.len();
    let mut combined = Vec::with_capacity(n);
    'token: for t in 0..n {
        let r = ref_dist.values()[t];
        if r == f64::NEG_INFINITY {
            combined.push(f64::NEG_INFINITY);
            continue;
        }
        let mut v = r;
        for (dist, &a) in pref_dists.iter().zip(alphas) {
            if a == 0.0 {
                continue;
            }
            let p = dist.values()[t];
            if p == f64::NEG_INFINITY {
                combined.push(f64::NEG_INFINITY);
                continue 'token;
            }
            v += a * (p - r);
        }
        combined.push(v);
    }
    LogProbVector::renormalized(combined)
}

/// Weighted log-probability fusion: every step evaluates the reference and
/// all preference models (N+1 forward passes per token) and samples from the
/// fused distribution.
///
/// Takes the raw weight slice rather than [`PreferenceWeights`]: an all-zero
/// vector is meaningful here (it reproduces the reference exactly).
pub fn mod_decode(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    alphas: &[f64],
    cfg: &DecodeConfig,
    prompt: &TokenSequence,
    rng: &mut dyn RngCore,
) -> Result<(TokenSequence, DecodeStats)> {
    cfg.validate()?;
    check_shared_vocab(ref_model, pref_models)?;
    if pref_models.len() != alphas.len() {
        return Err(Error::Input(format!(
            "{} preference models for {} weights",
            pref_models.len(),
            alphas.len()
        )));
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Input("weights must be finite".into()));
    }
    let vocab = ref_model.vocab();
    vocab.validate_context(prompt.tokens())?;
    let start = std::time::Instant::now();
    let mut base_passes: Vec<u64> = Vec::with_capacity(1 + pref_models.len());
    base_passes.push(ref_model.forward_passes());
    base_passes.extend(pref_models.iter().map(|m| m.forward_passes()));
    let mut stats = DecodeStats::new(1 + pref_models.len());
    let mut sequence = prompt.tokens().to_vec();

    for _ in 0..cfg.max_new_tokens {
        let ref_dist = ref_model.logprobs(&sequence)?;
        let mut pref_dists = Vec::with_capacity(pref_models.len());
        for m in pref_models {
            pref_dists.push(m.logprobs(&sequence)?);
        }
        let fused = fused_logprobs(&ref_dist, &pref_dists, alphas)?;
        let tok = sample_token(&fused, &cfg.sampling, rng)?;
        sequence.push(tok);
        stats.tokens_emitted += 1;
        if tok == vocab.eos() {
            break;
        }
    }

    stats.forward_passes = vec![ref_model.forward_passes() - base_passes[0]];
    for (i, m) in pref_models.iter().enumerate() {
        stats
            .forward_passes
            .push(m.forward_passes() - base_passes[i + 1]);
    }
    stats.wall_clock_seconds = start.elapsed().as_secs_f64();
    stats.finalize_rejection_rate();
    Ok((TokenSequence::from_tokens(sequence), stats))
}

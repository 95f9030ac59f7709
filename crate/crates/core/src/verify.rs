//! Distributional verification suites: sampler output against the
//! brute-force oracle, reusable over any model backend.

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::baselines::seq_rs_decode;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::model::{propose_chunk, LanguageModel, SamplingConfig, TokenSequence};
use crate::oracle::{
    empirical_distribution, exact_chunk_conditional, max_log_score, target_distribution,
    tv_distance, VerificationReport, VerifyOutcome,
};
use crate::scoring::PreferenceWeights;
use crate::scr::{decode, validate_chunk, DecodeConfig, LogM0, OutcomeKind};

/// Sampling controls shared by a suite run.
#[derive(Debug, Clone, Copy)]
pub struct SuiteParams {
    pub samples: u64,
    pub threshold: f64,
    pub seed: u64,
}

pub const SEQ_RS_SUITE: &str = "seq-rs-exactness";
pub const CHUNK_SUITE: &str = "chunk-conditional";
pub const IDENTITY_SUITE: &str = "identity-reduction";

pub const SEQ_RS_DEFAULTS: SuiteParams = SuiteParams {
    samples: 200_000,
    threshold: 0.02,
    seed: 1,
};
pub const CHUNK_DEFAULTS: SuiteParams = SuiteParams {
    samples: 200_000,
    threshold: 0.02,
    seed: 2,
};
pub const IDENTITY_DEFAULTS: SuiteParams = SuiteParams {
    samples: 100_000,
    threshold: 0.03,
    seed: 3,
};

fn untempered(seed: u64, max_new_tokens: usize) -> DecodeConfig {
    DecodeConfig {
        sampling: SamplingConfig {
            temperature: 1.0,
            top_p: 1.0,
            seed,
        },
        max_new_tokens,
        ..DecodeConfig::default()
    }
}

/// Sequence-level rejection sampling against the exact target distribution.
///
/// With an envelope fixed at the enumerated maximum score, the accepted
/// sequences of untempered sequence-level rejection sampling follow the
/// target law; the TV distance over `samples` accepted continuations must
/// stay within the threshold.
pub fn seq_rs_exactness(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    max_len: usize,
    params: SuiteParams,
) -> Result<VerifyOutcome> {
    let prompt = TokenSequence::empty();
    let target = target_distribution(ref_model, pref_models, weights, &prompt, max_len)?;
    let log_m = max_log_score(ref_model, pref_models, weights, &prompt, max_len)?;
    let cfg = untempered(params.seed, max_len);
    let mut rng = StdRng::seed_from_u64(params.seed);
    let mut accepted = Vec::with_capacity(params.samples as usize);
    for _ in 0..params.samples {
        let (seq, _) = seq_rs_decode(
            ref_model,
            pref_models,
            weights,
            &cfg,
            &prompt,
            log_m,
            &mut rng,
        )?;
        accepted.push(seq);
    }
    let empirical = empirical_distribution(&accepted)?;
    let tv = tv_distance(&empirical, &target);
    Ok(VerifyOutcome {
        name: SEQ_RS_SUITE.into(),
        tv,
        threshold: params.threshold,
        pass: tv <= params.threshold,
        samples: params.samples,
        seed: params.seed,
    })
}

/// The conditional law of fully accepted chunks against the enumerated
/// conditional.
///
/// Chunks are proposed untempered from `context` and validated against a
/// fixed valid bound; only full-chunk accepts enter the empirical
/// distribution, which must match `exact_chunk_conditional` within the
/// threshold. `samples` counts accepted chunks.
pub fn chunk_conditional_exactness(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    context: &TokenSequence,
    k: usize,
    params: SuiteParams,
) -> Result<VerifyOutcome> {
    let log_m = max_log_score(ref_model, pref_models, weights, context, k)?;
    let exact = exact_chunk_conditional(ref_model, pref_models, weights, context, k, log_m)?;
    let sampling = SamplingConfig {
        temperature: 1.0,
        top_p: 1.0,
        seed: params.seed,
    };
    let mut rng = StdRng::seed_from_u64(params.seed);
    let mut accepted = Vec::with_capacity(params.samples as usize);
    let mut guard = 0u64;
    let trial_guard = params.samples.saturating_mul(1_000).max(1_000_000);
    while (accepted.len() as u64) < params.samples {
        guard += 1;
        if guard > trial_guard {
            return Err(Error::EnvelopeTooTight(format!(
                "{} full-chunk accepts after {guard} proposals",
                accepted.len()
            )));
        }
        let proposal = propose_chunk(ref_model, context.tokens(), k, &sampling, &mut rng)?;
        let mut pref_logprobs = Vec::with_capacity(pref_models.len());
        for model in pref_models {
            pref_logprobs.push(model.score_continuation(context.tokens(), &proposal.tokens)?);
        }
        let outcome = validate_chunk(&proposal, &pref_logprobs, weights, log_m, &mut rng)?;
        if outcome.kind == OutcomeKind::FullAccept {
            accepted.push(TokenSequence::from_tokens(outcome.committed));
        }
    }
    let empirical = empirical_distribution(&accepted)?;
    let tv = tv_distance(&empirical, &exact);
    Ok(VerifyOutcome {
        name: CHUNK_SUITE.into(),
        tv,
        threshold: params.threshold,
        pass: tv <= params.threshold,
        samples: params.samples,
        seed: params.seed,
    })
}

/// Identity preferences collapse the decoder to plain reference sampling.
///
/// With every preference model equal to the reference and weights summing to
/// one, each candidate scores zero and the chunk decoder's output law equals
/// the reference sequence distribution; compared here over full decodes.
pub fn identity_reduction(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    weights: &PreferenceWeights,
    max_len: usize,
    params: SuiteParams,
) -> Result<VerifyOutcome> {
    let prompt = TokenSequence::empty();
    let target = target_distribution(ref_model, pref_models, weights, &prompt, max_len)?;
    let mut cfg = untempered(params.seed, max_len);
    // Warm-up bound pinned to the constant score ln(sum alpha): the test
    // accepts every candidate, exposing the raw proposal distribution.
    cfg.log_m0 = LogM0::Value(weights.positive_mass().ln());
    let mut rng = StdRng::seed_from_u64(params.seed);
    let mut outputs = Vec::with_capacity(params.samples as usize);
    for _ in 0..params.samples {
        let (seq, _) = decode(ref_model, pref_models, weights, &cfg, &prompt, &mut rng)?;
        outputs.push(seq);
    }
    let empirical = empirical_distribution(&outputs)?;
    let tv = tv_distance(&empirical, &target);
    Ok(VerifyOutcome {
        name: IDENTITY_SUITE.into(),
        tv,
        threshold: params.threshold,
        pass: tv <= params.threshold,
        samples: params.samples,
        seed: params.seed,
    })
}

fn with_overrides(
    base: SuiteParams,
    samples: Option<u64>,
    threshold: Option<f64>,
    seed: Option<u64>,
) -> SuiteParams {
    SuiteParams {
        samples: samples.unwrap_or(base.samples),
        threshold: threshold.unwrap_or(base.threshold),
        seed: seed.unwrap_or(base.seed),
    }
}

/// Run a named suite (or `"all"`) on the built-in verification instances.
pub fn run_builtin_suite(
    name: &str,
    samples: Option<u64>,
    threshold: Option<f64>,
    seed: Option<u64>,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::default();
    let run_seq = |report: &mut VerificationReport| -> Result<()> {
        let reference = fixtures::verification_reference();
        let pa = fixtures::verification_pref_a();
        let pb = fixtures::verification_pref_b();
        let prefs: Vec<&dyn LanguageModel> = vec![&pa, &pb];
        let params = with_overrides(SEQ_RS_DEFAULTS, samples, threshold, seed);
        report.push(seq_rs_exactness(
            &reference,
            &prefs,
            &fixtures::verification_weights(),
            3,
            params,
        )?);
        Ok(())
    };
    let run_chunk = |report: &mut VerificationReport| -> Result<()> {
        let reference = fixtures::verification_reference();
        let pa = fixtures::verification_pref_a();
        let pb = fixtures::verification_pref_b();
        let prefs: Vec<&dyn LanguageModel> = vec![&pa, &pb];
        let params = with_overrides(CHUNK_DEFAULTS, samples, threshold, seed);
        report.push(chunk_conditional_exactness(
            &reference,
            &prefs,
            &fixtures::verification_weights(),
            &TokenSequence::from_tokens(vec![0]),
            2,
            params,
        )?);
        Ok(())
    };
    let run_identity = |report: &mut VerificationReport| -> Result<()> {
        let (reference, pa, pb) = fixtures::identity_models();
        let prefs: Vec<&dyn LanguageModel> = vec![&pa, &pb];
        let params = with_overrides(IDENTITY_DEFAULTS, samples, threshold, seed);
        report.push(identity_reduction(
            &reference,
            &prefs,
            &fixtures::verification_weights(),
            3,
            params,
        )?);
        Ok(())
    };
    match name {
        SEQ_RS_SUITE => run_seq(&mut report)?,
        CHUNK_SUITE => run_chunk(&mut report)?,
        IDENTITY_SUITE => run_identity(&mut report)?,
        "all" => {
            run_seq(&mut report)?;
            run_chunk(&mut report)?;
            run_identity(&mut report)?;
        }
        other => return Err(Error::Input(format!("unknown suite {other:?}"))),
    }
    Ok(report)
}

//! Efficiency harness: runs a set of decoders over a prompt list and
//! aggregates throughput, latency, forward-pass, and rejection statistics.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::baselines::{base_decode, mod_decode, seq_rs_decode, token_rs_decode, DecoderKind};
use crate::error::{Error, Result};
use crate::model::{LanguageModel, TokenSequence};
use crate::oracle::max_log_score;
use crate::scoring::PreferenceWeights;
use crate::scr::{decode, DecodeConfig};
use crate::stats::DecodeStats;

/// Every benchmark row averages this many repetitions.
pub const BENCH_REPETITIONS: u32 = 3;

/// Aggregated metrics for one decoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub decoder: DecoderKind,
    pub throughput_tokens_per_sec: f64,
    pub latency_sec_per_seq: f64,
    pub forward_passes_per_token: f64,
    /// None when the decoder runs no acceptance tests (plain sampling).
    pub rejection_rate: Option<f64>,
    pub tokens_emitted: u64,
    pub sequences: u64,
    /// Populated instead of metrics when the decoder failed.
    pub error: Option<String>,
}

/// Benchmark metadata and rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub preference_models: usize,
    pub k: usize,
    pub prompt_count: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
    pub repetitions: u32,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, kind: DecoderKind) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.decoder == kind)
    }

    /// Render as an aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>12} {:>12} {:>14} {:>12}\n",
            "decoder", "tok/s", "s/seq", "passes/tok", "reject %"
        ));
        for row in &self.rows {
            if let Some(err) = &row.error {
                out.push_str(&format!("{:<10} failed: {err}\n", row.decoder.name()));
                continue;
            }
            let rej = row
                .rejection_rate
                .map(|r| format!("{:.1}", r * 100.0))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<10} {:>12.1} {:>12.4} {:>14.3} {:>12}\n",
                row.decoder.name(),
                row.throughput_tokens_per_sec,
                row.latency_sec_per_seq,
                row.forward_passes_per_token,
                rej
            ));
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    kind: DecoderKind,
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    alphas: &[f64],
    cfg: &DecodeConfig,
    prompt: &TokenSequence,
    seq_rs_log_m: f64,
    seed: u64,
) -> Result<DecodeStats> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let stats = match kind {
        DecoderKind::Base => base_decode(ref_model, cfg, prompt, &mut rng)?.1,
        DecoderKind::Mod => mod_decode(ref_model, pref_models, alphas, cfg, prompt, &mut rng)?.1,
        DecoderKind::SeqRs => {
            let weights = PreferenceWeights::new(alphas.to_vec())?;
            seq_rs_decode(
                ref_model,
                pref_models,
                &weights,
                cfg,
                prompt,
                seq_rs_log_m,
                &mut rng,
            )?
            .1
        }
        DecoderKind::TokenRs => {
            let weights = PreferenceWeights::new(alphas.to_vec())?;
            token_rs_decode(ref_model, pref_models, &weights, cfg, prompt, &mut rng)?.1
        }
        DecoderKind::Scr => {
            let weights = PreferenceWeights::new(alphas.to_vec())?;
            decode(ref_model, pref_models, &weights, cfg, prompt, &mut rng)?.1
        }
    };
    Ok(stats)
}

/// Run each decoder over every prompt for [`BENCH_REPETITIONS`] repetitions.
///
/// Forward passes count full model evaluations of the reference and every
/// preference model. Sequence-level rejection sampling needs a fixed
/// envelope; it uses the enumerated maximum score plus the configured safety
/// margin, so the benchmark instance must stay within the enumeration guard.
/// A failing decoder is recorded in its row and does not abort the run.
pub fn run_benchmark(
    ref_model: &dyn LanguageModel,
    pref_models: &[&dyn LanguageModel],
    alphas: &[f64],
    cfg: &DecodeConfig,
    prompts: &[TokenSequence],
    decoders: &[DecoderKind],
) -> Result<BenchReport> {
    if prompts.is_empty() {
        return Err(Error::Input("at least one prompt required".into()));
    }
    cfg.validate()?;
    // The envelope for seq-rs: exact maximum over the bounded sequence space
    // with the safety margin applied, computed per prompt lazily.
    let seq_rs_envelope = |prompt: &TokenSequence| -> Result<f64> {
        let weights = PreferenceWeights::new(alphas.to_vec())?;
        Ok(
            max_log_score(ref_model, pref_models, &weights, prompt, cfg.max_new_tokens)?
                + cfg.gamma.ln(),
        )
    };

    let mut rows = Vec::with_capacity(decoders.len());
    for &kind in decoders {
        let mut merged = DecodeStats::new(1 + pref_models.len());
        let mut sequences = 0u64;
        let mut failure: Option<String> = None;
        'outer: for rep in 0..BENCH_REPETITIONS {
            for (p_idx, prompt) in prompts.iter().enumerate() {
                let log_m = if kind == DecoderKind::SeqRs {
                    match seq_rs_envelope(prompt) {
                        Ok(v) => v,
                        Err(e) => {
                            failure = Some(e.to_string());
                            break 'outer;
                        }
                    }
                } else {
                    0.0
                };
                let seed = cfg
                    .sampling
                    .seed
                    .wrapping_add(rep as u64 * 1_000_003)
                    .wrapping_add(p_idx as u64);
                match run_one(
                    kind,
                    ref_model,
                    pref_models,
                    alphas,
                    cfg,
                    prompt,
                    log_m,
                    seed,
                ) {
                    Ok(stats) => {
                        merged.merge(&stats);
                        sequences += 1;
                    }
                    Err(e) => {
                        failure = Some(e.to_string());
                        break 'outer;
                    }
                }
            }
        }
        let row = match failure {
            Some(error) => BenchRow {
                decoder: kind,
                throughput_tokens_per_sec: 0.0,
                latency_sec_per_seq: 0.0,
                forward_passes_per_token: 0.0,
                rejection_rate: None,
                tokens_emitted: 0,
                sequences,
                error: Some(error),
            },
            None => BenchRow {
                decoder: kind,
                throughput_tokens_per_sec: if merged.wall_clock_seconds > 0.0 {
                    merged.tokens_emitted as f64 / merged.wall_clock_seconds
                } else {
                    f64::INFINITY
                },
                latency_sec_per_seq: merged.wall_clock_seconds / sequences.max(1) as f64,
                forward_passes_per_token: merged.passes_per_token(),
                rejection_rate: (merged.candidates_tested > 0).then_some(merged.rejection_rate),
                tokens_emitted: merged.tokens_emitted,
                sequences,
                error: None,
            },
        };
        rows.push(row);
    }

    Ok(BenchReport {
        preference_models: pref_models.len(),
        k: cfg.k,
        prompt_count: prompts.len(),
        max_new_tokens: cfg.max_new_tokens,
        seed: cfg.sampling.seed,
        repetitions: BENCH_REPETITIONS,
        rows,
    })
}

/// Deterministic synthetic prompts: short non-eos token runs derived from
/// the seed.
pub fn synthetic_prompts(
    vocab: &crate::model::Vocabulary,
    count: usize,
    seed: u64,
) -> Vec<TokenSequence> {
    use rand::Rng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let plain: Vec<u32> = (0..vocab.size()).filter(|&t| t != vocab.eos()).collect();
    (0..count)
        .map(|_| {
            let len = rng.random_range(1..=3);
            let tokens = (0..len)
                .map(|_| plain[rng.random_range(0..plain.len())])
                .collect();
            TokenSequence::from_tokens(tokens)
        })
        .collect()
}

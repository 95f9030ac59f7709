//! External decode-run configuration document.

use serde::{Deserialize, Serialize};

use crate::baselines::DecoderKind;
use crate::error::Result;
use crate::model::{RatioBasis, SamplingConfig};
use crate::scoring::PreferenceWeights;
use crate::scr::{BufferPolicy, DecodeConfig, LogM0};

fn default_k() -> usize {
    4
}
fn default_window() -> usize {
    20
}
fn default_gamma() -> f64 {
    1.2
}
fn default_tau() -> f64 {
    0.01
}
fn default_temperature() -> f64 {
    0.7
}
fn default_top_p() -> f64 {
    0.9
}
fn default_max_new_tokens() -> usize {
    128
}
fn default_fallback_cap() -> usize {
    64
}
fn default_alphas() -> Vec<f64> {
    vec![1.0]
}
fn default_seed() -> u64 {
    42
}
fn default_seq_retry_cap() -> usize {
    10_000
}

/// JSON run configuration consumed by the CLI and the benchmark harness.
///
/// All fields carry the standard defaults, so `{}` is a valid document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(rename = "W", default = "default_window")]
    pub w: usize,
    #[serde(rename = "log_M0", default)]
    pub log_m0: LogM0,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default = "default_fallback_cap")]
    pub fallback_cap: usize,
    #[serde(default)]
    pub buffer_policy: BufferPolicy,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub decoder: DecoderKind,
    #[serde(default)]
    pub ratio_basis: RatioBasis,
    #[serde(default = "default_seq_retry_cap")]
    pub seq_retry_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty run config parses")
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            k: self.k,
            window: self.w,
            log_m0: self.log_m0,
            gamma: self.gamma,
            tau: self.tau,
            sampling: SamplingConfig {
                temperature: self.temperature,
                top_p: self.top_p,
                seed: self.seed,
            },
            max_new_tokens: self.max_new_tokens,
            fallback_cap: self.fallback_cap,
            buffer_policy: self.buffer_policy,
            ratio_basis: self.ratio_basis,
            seq_retry_cap: self.seq_retry_cap,
        }
    }

    pub fn weights(&self) -> Result<PreferenceWeights> {
        PreferenceWeights::new(self.alphas.clone())
    }
}

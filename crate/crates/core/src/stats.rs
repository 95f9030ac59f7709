//! Per-run decode counters.

use serde::{Deserialize, Serialize};

/// Counters collected by every decoder.
///
/// `forward_passes[0]` belongs to the reference model, the remaining entries
/// to the preference models in order. A candidate is any chunk, prefix, or
/// fallback token submitted to the acceptance test.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeStats {
    pub forward_passes: Vec<u64>,
    pub tokens_emitted: u64,
    pub chunks_proposed: u64,
    pub full_accepted: u64,
    pub prefix_salvaged: u64,
    pub chunks_rejected: u64,
    pub candidates_tested: u64,
    pub candidates_rejected: u64,
    pub fallback_attempts: u64,
    pub fallback_cap_hits: u64,
    pub wall_clock_seconds: f64,
    /// `candidates_rejected / candidates_tested`, 0 when nothing was tested.
    pub rejection_rate: f64,
}

impl DecodeStats {
    pub fn new(model_count: usize) -> Self {
        Self {
            forward_passes: vec![0; model_count],
            ..Self::default()
        }
    }

    pub fn total_forward_passes(&self) -> u64 {
        self.forward_passes.iter().sum()
    }

    /// Average model evaluations per emitted token.
    pub fn passes_per_token(&self) -> f64 {
        if self.tokens_emitted == 0 {
            0.0
        } else {
            self.total_forward_passes() as f64 / self.tokens_emitted as f64
        }
    }

    pub(crate) fn finalize_rejection_rate(&mut self) {
        self.rejection_rate = if self.candidates_tested == 0 {
            0.0
        } else {
            self.candidates_rejected as f64 / self.candidates_tested as f64
        };
    }

    /// Fold another run's counters into this one (wall clock adds up).
    pub fn merge(&mut self, other: &DecodeStats) {
        if self.forward_passes.len() < other.forward_passes.len() {
            self.forward_passes.resize(other.forward_passes.len(), 0);
        }
        for (a, b) in self.forward_passes.iter_mut().zip(&other.forward_passes) {
            *a += b;
        }
        self.tokens_emitted += other.tokens_emitted;
        self.chunks_proposed += other.chunks_proposed;
        self.full_accepted += other.full_accepted;
        self.prefix_salvaged += other.prefix_salvaged;
        self.chunks_rejected += other.chunks_rejected;
        self.candidates_tested += other.candidates_tested;
        self.candidates_rejected += other.candidates_rejected;
        self.fallback_attempts += other.fallback_attempts;
        self.fallback_cap_hits += other.fallback_cap_hits;
        self.wall_clock_seconds += other.wall_clock_seconds;
        self.finalize_rejection_rate();
    }
}

//! Online estimation of the acceptance bound `log M`.
//!
//! The estimator moves through three phases driven by a sliding window over
//! recent candidate log-scores:
//!
//! * warm-up: while the buffer holds at most `W` records the bound stays at
//!   the conservative constant `log M0`;
//! * estimation: afterwards the bound tracks `max(window) + ln(gamma)`,
//!   freezing once the window variance drops below `tau`;
//! * stabilization: a frozen bound is left untouched until the window
//!   variance climbs back to `tau` or above.

use crate::event_log::log_info;
use crate::math::population_variance;

/// Which phase an estimator is in; exactly one applies to any state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundPhase {
    WarmUp,
    Estimation,
    Stabilization,
}

/// Sliding-window bound estimator for `log M`.
#[derive(Debug, Clone)]
pub struct BoundEstimator {
    buffer: Vec<f64>,
    window: usize,
    log_m0: f64,
    log_gamma: f64,
    tau: f64,
    log_m: f64,
    frozen: bool,
}

impl BoundEstimator {
    /// `window` is the statistics window W, `log_m0` the warm-up constant,
    /// `gamma > 1` the safety multiplier, `tau >= 0` the freeze threshold.
    pub fn new(window: usize, log_m0: f64, gamma: f64, tau: f64) -> Self {
        debug_assert!(window >= 1 && gamma > 1.0 && tau >= 0.0 && log_m0.is_finite());
        Self {
            buffer: Vec::new(),
            window,
            log_m0,
            log_gamma: gamma.ln(),
            tau,
            log_m: log_m0,
            frozen: false,
        }
    }

    pub fn log_m(&self) -> f64 {
        self.log_m
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub fn records(&self) -> usize {
        self.buffer.len()
    }

    pub fn phase(&self) -> BoundPhase {
        if self.buffer.len() <= self.window {
            BoundPhase::WarmUp
        } else if self.frozen {
            BoundPhase::Stabilization
        } else {
            BoundPhase::Estimation
        }
    }

    fn window_slice(&self) -> &[f64] {
        let start = self.buffer.len().saturating_sub(self.window);
        &self.buffer[start..]
    }

    /// Append this round's records and run one bound update.
    ///
    /// The update applies once per decode iteration regardless of how many
    /// records arrived, matching the per-iteration bound refresh of the
    /// decoding loop.
    pub fn update(&mut self, new_records: &[f64]) {
        self.buffer.extend(
            new_records
                .iter()
                .copied()
                .filter(|s| !s.is_nan() && *s != f64::INFINITY),
        );
        if self.buffer.len() <= self.window {
            self.log_m = self.log_m0;
            self.frozen = false;
            return;
        }
        let window = self.window_slice();
        let variance = population_variance(window);
        if !self.frozen {
            let max = window
                .iter()
                .copied()
                .filter(|s| s.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            // A window of all-rejected (zero-reward) candidates carries no
            // usable maximum; hold the conservative constant instead.
            self.log_m = if max == f64::NEG_INFINITY {
                self.log_m0
            } else {
                max + self.log_gamma
            };
            if variance < self.tau {
                self.frozen = true;
                log_info!(
                    "bound frozen at log_m = {:.6} (window variance {variance:.3e})",
                    self.log_m
                );
            }
        } else if variance >= self.tau {
            self.frozen = false;
            log_info!("bound unfrozen (window variance {variance:.3e})");
        }
    }
}

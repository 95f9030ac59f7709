//! Coordinate search over the preference weight vector, guided by a caller
//! supplied accuracy callback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated point: the weight vector, the per-dimension accuracies the
/// callback reported, and their mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneRecord {
    pub alphas: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Full tuning trajectory. `history` is append-only and records every
/// evaluation, including rejected probes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunerState {
    pub alphas: Vec<f64>,
    pub history: Vec<TuneRecord>,
    pub step_size: f64,
    pub steps_completed: usize,
}

impl TunerState {
    /// The best record seen so far (highest mean accuracy, earliest wins
    /// ties).
    pub fn best(&self) -> Option<&TuneRecord> {
        let mut best: Option<&TuneRecord> = None;
        for rec in &self.history {
            if best.is_none_or(|b| rec.mean_accuracy > b.mean_accuracy) {
                best = Some(rec);
            }
        }
        best
    }
}

/// A tuning run aborted mid-way by a callback failure; the partial history
/// is preserved.
#[derive(Debug)]
pub struct TuneAborted {
    pub partial: TunerState,
    pub source: Error,
}

impl std::fmt::Display for TuneAborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "tuning aborted after {} evaluations: {}",
            self.partial.history.len(),
            self.source
        )
    }
}

impl std::error::Error for TuneAborted {}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Coordinate search with fixed +/- probes.
///
/// Every step walks the dimensions in order; for each it evaluates the
/// current vector perturbed by `+step_size` and `-step_size` and keeps the
/// perturbation with the best mean accuracy. Ties keep the current value, so
/// a constant callback leaves the vector untouched. Signed weights are
/// allowed throughout.
pub fn tune_alpha<F>(
    mut evaluate: F,
    initial: &[f64],
    steps: usize,
    step_size: f64,
) -> std::result::Result<TunerState, TuneAborted>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut state = TunerState {
        alphas: initial.to_vec(),
        history: Vec::new(),
        step_size,
        steps_completed: 0,
    };
    if initial.is_empty() || steps == 0 || step_size.is_nan() || step_size <= 0.0 {
        return Err(TuneAborted {
            partial: state,
            source: Error::Input("initial weights, steps >= 1 and step_size > 0 required".into()),
        });
    }

    let mut eval =
        |alphas: &[f64], state: &mut TunerState| -> std::result::Result<f64, TuneAborted> {
            match evaluate(alphas) {
                Ok(accuracies) => {
                    let m = mean(&accuracies);
                    state.history.push(TuneRecord {
                        alphas: alphas.to_vec(),
                        accuracies,
                        mean_accuracy: m,
                    });
                    Ok(m)
                }
                Err(source) => Err(TuneAborted {
                    partial: state.clone(),
                    source,
                }),
            }
        };

    let mut current_score = eval(&state.alphas.clone(), &mut state)?;
    for _ in 0..steps {
        for dim in 0..state.alphas.len() {
            let base = state.alphas[dim];
            let mut best_value = base;
            let mut best_score = current_score;
            for candidate in [base + step_size, base - step_size] {
                let mut probe = state.alphas.clone();
                probe[dim] = candidate;
                let score = eval(&probe, &mut state)?;
                // Strict improvement only: ties keep the current value.
                if score > best_score {
                    best_score = score;
                    best_value = candidate;
                }
            }
            state.alphas[dim] = best_value;
            current_score = best_score;
        }
        state.steps_completed += 1;
    }
    Ok(state)
}

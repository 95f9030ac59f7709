//! Small numeric helpers shared across the crate.

/// log(sum(exp(x))) with the max-trick. Returns `-inf` for an empty slice or
/// when every entry is `-inf`. Stable for magnitudes up to ~700.
pub fn logsumexp(values: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Population variance over the finite entries of `values`.
///
/// Infinite entries are excluded; with fewer than two finite entries the
/// variance is `+inf`, which deliberately fails any `< tau` freeze check.
pub fn population_variance(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return f64::INFINITY;
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

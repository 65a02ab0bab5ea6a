//! Small statistical helpers shared by the Monte Carlo drivers and tests.

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n > 0, "mean of empty sample");
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean and standard error by batch means: the sample is cut into
/// `n_batches` contiguous batches and the batch averages are treated as
/// independent draws. Falls back to the plain estimator when the sample is
/// too short to batch.
pub fn batch_mean_stderr(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let n = xs.len();
    if n_batches < 2 || n < 2 * n_batches {
        return mean_stderr(xs);
    }
    let batch_len = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * batch_len..(b + 1) * batch_len].iter().sum::<f64>() / batch_len as f64)
        .collect();
    let (_, se) = mean_stderr(&means);
    // The tail shorter than one batch is excluded from the error estimate but
    // not from the mean.
    let full_mean = xs.iter().sum::<f64>() / n as f64;
    (full_mean, se)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// `ln(sum exp(xs))` with the usual max shift; `-inf` entries are allowed.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Two-term logsumexp.
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Stable `ln(1 + tanh u)`, with `u = ±inf` mapped to `ln 2` / `-inf`.
pub fn ln_one_plus_tanh(u: f64) -> f64 {
    if u == f64::INFINITY {
        return std::f64::consts::LN_2;
    }
    if u == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // 1 + tanh u = 2 / (1 + e^{-2u})
    if u >= 0.0 {
        std::f64::consts::LN_2 - (-2.0 * u).exp().ln_1p()
    } else {
        std::f64::consts::LN_2 + 2.0 * u - (2.0 * u).exp().ln_1p()
    }
}

/// Stable `ln(1 - tanh u)` = `ln_one_plus_tanh(-u)`.
pub fn ln_one_minus_tanh(u: f64) -> f64 {
    ln_one_plus_tanh(-u)
}

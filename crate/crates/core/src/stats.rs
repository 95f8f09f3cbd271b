//! Small statistical helpers shared across modules: jackknife standard
//! errors, deterministic quantiles, and the fixed-width numeric formatting
//! used by every CSV writer.

/// Sample mean of `values`. Sequential summation in index order so the
/// result is independent of worker count.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean together with its leave-one-out jackknife standard error.
///
/// For the plain mean the jackknife variance reduces to `s^2 / n` with `s`
/// the unbiased sample standard deviation; it is computed that way. A sample
/// of size < 2 yields a zero standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(values);
    if n < 2 {
        return (m, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let var = ss / (n as f64 - 1.0);
    (m, (var / n as f64).sqrt())
}

/// Unbiased sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let (_, se) = mean_and_se(values);
    se * (values.len() as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
/// `q` in [0, 1]. The input does not need to be sorted.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    sorted_quantile(&v, q)
}

/// Quantile of an already ascending-sorted slice.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Formats a float with 17 significant digits, enough for the decimal form
/// to round-trip any f64 exactly. All CSV output uses this so reruns with
/// identical inputs are byte-identical.
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// SplitMix64 step. Used to derive independent sub-seeds and to drive the
/// seeded "random measurable table" feedback maps. Deterministic across
/// platforms.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a purpose/index tag into a fresh sub-seed.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

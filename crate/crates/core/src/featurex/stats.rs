//! Descriptive statistics with population (n) denominators.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population central moment of order `k` about `mu`.
fn central_moment(xs: &[f64], mu: f64, k: i32) -> f64 {
    xs.iter().map(|x| (x - mu).powi(k)).sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    central_moment(xs, mean(xs), 2)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// True when a variance is indistinguishable from rounding noise on a
/// constant signal of this magnitude.
pub fn is_degenerate(var: f64, xs: &[f64]) -> bool {
    let scale = f64::EPSILON * max_abs(xs);
    var <= 16.0 * scale * scale
}

/// (mean, std, median, min, max); all NaN for an empty slice.
pub fn five(xs: &[f64]) -> [f64; 5] {
    if xs.is_empty() {
        return [f64::NAN; 5];
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let var = variance(xs);
    let std = if is_degenerate(var, xs) { 0.0 } else { var.sqrt() };
    [mean(xs), std, median(xs), min, max]
}

/// Sample skewness m3 / m2^1.5; 0 for a constant signal.
pub fn skewness(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mu = mean(xs);
    let m2 = central_moment(xs, mu, 2);
    if is_degenerate(m2, xs) {
        return 0.0;
    }
    central_moment(xs, mu, 3) / m2.powf(1.5)
}

/// Excess kurtosis m4 / m2^2 - 3; 0 for a constant signal.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mu = mean(xs);
    let m2 = central_moment(xs, mu, 2);
    if is_degenerate(m2, xs) {
        return 0.0;
    }
    central_moment(xs, mu, 4) / (m2 * m2) - 3.0
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if xs.is_empty() {
        return f64::NAN;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.len() as f64
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let (vx, vy) = (variance(xs), variance(ys));
    if is_degenerate(vx, xs) || is_degenerate(vy, ys) {
        return 0.0;
    }
    (covariance(xs, ys) / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_of_pair() {
        let s = five(&[1000.0, 1010.0]);
        assert_eq!(s, [1005.0, 5.0, 1005.0, 1000.0, 1010.0]);
        let s = five(&[1013.0]);
        assert_eq!(s, [1013.0, 0.0, 1013.0, 1013.0, 1013.0]);
        assert!(five(&[]).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn constant_signal_moments_are_zero() {
        let xs = [0.1; 37];
        assert_eq!(skewness(&xs), 0.0);
        assert_eq!(excess_kurtosis(&xs), 0.0);
        assert_eq!(correlation(&xs, &[0.3; 37]), 0.0);
    }

    #[test]
    fn alternating_signal() {
        let xs = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(mean(&xs), 0.0);
        assert_eq!(variance(&xs), 1.0);
        assert_eq!(skewness(&xs), 0.0);
        assert_eq!(excess_kurtosis(&xs), -2.0);
    }
}

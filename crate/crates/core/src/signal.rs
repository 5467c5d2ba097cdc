//! Scalar series helpers: decimation, error metrics and lag estimation.

use crate::error::{Error, Result};

/// Every `factor`-th element, starting with the first.
pub fn decimate<T: Clone>(values: &[T], factor: usize) -> Vec<T> {
    values.iter().step_by(factor.max(1)).cloned().collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64
}

pub fn differences(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let denom = (sxx * syy).sqrt();
    (denom > 0.0).then(|| sxy / denom)
}

/// Correlation of `signal[n]` with `reference[n − lag]` over the overlap.
pub fn correlation_at_lag(reference: &[f64], signal: &[f64], lag: i64) -> Option<f64> {
    let n = reference.len().min(signal.len()) as i64;
    let (start, end) = (lag.max(0), (n + lag).min(n));
    if end - start < 3 {
        return None;
    }
    let s = &signal[start as usize..end as usize];
    let r = &reference[(start - lag) as usize..(end - lag) as usize];
    pearson(r, s)
}

/// Lag (in samples) at which `signal` best matches a delayed copy of
/// `reference`: positive when `signal` trails, negative when it leads.
pub fn best_lag(reference: &[f64], signal: &[f64], max_lag: usize) -> Result<i64> {
    let max_lag = max_lag as i64;
    let mut best: Option<(i64, f64)> = None;
    for lag in -max_lag..=max_lag {
        if let Some(c) = correlation_at_lag(reference, signal, lag) {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((lag, c));
            }
        }
    }
    best.map(|(lag, _)| lag)
        .ok_or_else(|| Error::Invalid("series too short or constant for lag estimation".into()))
}

/// [`best_lag`] on first differences, which isolates the motion onsets from
/// the slowly varying level of a cumulative signal.
pub fn best_lag_of_rates(reference: &[f64], signal: &[f64], max_lag: usize) -> Result<i64> {
    best_lag(&differences(reference), &differences(signal), max_lag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(n: usize, centre: f64) -> Vec<f64> {
        (0..n).map(|i| (-((i as f64 - centre) / 6.0).powi(2)).exp()).collect()
    }

    #[test]
    fn decimation_keeps_first_sample() {
        let v: Vec<usize> = (0..25).collect();
        assert_eq!(decimate(&v, 12), vec![0, 12, 24]);
        assert_eq!(decimate(&v, 1), v);
    }

    #[test]
    fn lag_sign_convention() {
        let truth = bump(200, 80.0);
        let late = bump(200, 87.0);
        let early = bump(200, 70.0);
        assert_eq!(best_lag(&truth, &late, 30).unwrap(), 7);
        assert_eq!(best_lag(&truth, &early, 30).unwrap(), -10);
        assert_eq!(best_lag(&truth, &truth, 30).unwrap(), 0);
        assert!(best_lag(&[1.0; 10], &[1.0; 10], 3).is_err());
    }

    #[test]
    fn rate_lag_on_cumulative_signal() {
        let step = |c: f64| -> Vec<f64> { (0..300).map(|i| 1.0 / (1.0 + (-(i as f64 - c) / 4.0).exp())).collect() };
        assert_eq!(best_lag_of_rates(&step(120.0), &step(110.0), 40).unwrap(), -10);
    }

    #[test]
    fn mse_basics() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 4.0]), 2.0);
        assert_eq!(mse(&[], &[]), 0.0);
    }
}

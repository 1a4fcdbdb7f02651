//! Small statistical helpers shared by the experiment harnesses and tests:
//! least-squares slopes for rate fits, empirical moments of time series, and
//! classical two-sample / goodness-of-fit statistics.

use crate::error::{Error, Result};

/// Slope of the least-squares line through `(x_i, y_i)`.
///
/// Errors if fewer than two points are given or all abscissae coincide.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Config(format!(
            "slope fit needs at least two paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("slope fit is degenerate: all abscissae equal".into()));
    }
    Ok(sxy / sxx)
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Median (average of the middle pair for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of non-finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Lag-`k` autocovariance of a series, `1/(n-k) * sum (x_i - m)(x_{i+k} - m)`
/// with `m` the full-series mean.
pub fn autocovariance(xs: &[f64], k: usize) -> f64 {
    assert!(k < xs.len(), "lag exceeds series length");
    let m = mean(xs);
    let n = xs.len() - k;
    xs[..n].iter().zip(&xs[k..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Lag-1 autocorrelation: lag-1 autocovariance over variance.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    autocovariance(xs, 1) / autocovariance(xs, 0)
}

/// Pearson chi-square statistic of observed counts against expected counts.
pub fn chi_square_statistic(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("non-finite sample"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("non-finite sample"));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Advance both walks through every copy of the next value so that
        // ties are compared after the joint step.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

//! Small statistical toolbox for ensemble tests: moments with standard
//! errors, Kolmogorov-Smirnov statistics, sorted-sample 1-Wasserstein
//! distance, and equal-probability binning with merge-on-underflow.

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// One-sample KS statistic against Uniform(0,1).
pub fn ks_statistic_uniform(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| {
            let lo = (u - i as f64 / n).abs();
            let hi = ((i + 1) as f64 / n - u).abs();
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS statistic and its 1%-level critical value
/// `1.628 sqrt((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (sa.len(), sb.len());
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        if sa[i] <= sb[j] {
            i += 1;
        } else {
            j += 1;
        }
        let gap = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(gap);
    }
    let crit = 1.628 * (((n + m) as f64) / ((n * m) as f64)).sqrt();
    (d, crit)
}

/// 1-Wasserstein distance between equally sized samples (mean absolute
/// difference of order statistics).
pub fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "samples must have equal size");
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Assignment of samples to quantile bins.
pub struct BinAssignment {
    /// per-bin sample indices
    pub bins: Vec<Vec<usize>>,
    /// number of requested bins that were merged into a neighbor
    pub merged: usize,
}

/// Splits samples into `n_bins` equal-probability bins by rank; bins that
/// would hold fewer than `min_count` samples are merged into the previous
/// bin (or the next, for the first).
pub fn equal_probability_bins(xs: &[f64], n_bins: usize, min_count: usize) -> BinAssignment {
    assert!(n_bins >= 1);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap());
    let n = xs.len();
    let mut bins: Vec<Vec<usize>> = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let lo = b * n / n_bins;
        let hi = (b + 1) * n / n_bins;
        bins.push(order[lo..hi].to_vec());
    }
    let mut merged = 0;
    let mut out = bins;
    loop {
        let Some(idx) = out.iter().position(|b| b.len() < min_count) else {
            break;
        };
        if out.len() == 1 {
            break;
        }
        merged += 1;
        let bin = out.remove(idx);
        let target = idx.saturating_sub(1);
        out[target].extend(bin);
    }
    BinAssignment { bins: out, merged }
}

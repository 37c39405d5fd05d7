//! Shared numerical kernels: compensated sums, trapezoid quadrature, the
//! tridiagonal solve, finite-difference gradients, Richardson extrapolation
//! and monotone interpolation helpers.

use crate::error::{EntroflowError, Result};

/// Neumaier compensated sum; keeps quadrature drift well below the 1e-10
/// mass budget on 4k-cell grids.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid_uniform(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let s = compensated_sum(values);
    h * (s - 0.5 * (values[0] + values[values.len() - 1]))
}

/// Trapezoid rule on arbitrary increasing abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    }
    acc
}

/// Thomas algorithm for a tridiagonal system. `sub[0]` and `sup[n-1]` are
/// ignored. Fails on a vanishing pivot.
pub fn solve_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(EntroflowError::Format("tridiagonal solve: zero pivot".into()));
    }
    c[0] = sup[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i] * c[i - 1];
        if piv == 0.0 {
            return Err(EntroflowError::Format(format!(
                "tridiagonal solve: zero pivot at row {i}"
            )));
        }
        if i < n - 1 {
            c[i] = sup[i] / piv;
        }
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}

/// Centered finite-difference gradient with one-sided ends.
pub fn gradient_uniform(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut g = vec![0.0; n];
    if n < 2 {
        return g;
    }
    g[0] = (values[1] - values[0]) / h;
    g[n - 1] = (values[n - 1] - values[n - 2]) / h;
    for i in 1..n - 1 {
        g[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    g
}

/// Iterated Richardson extrapolation for quantities sampled at offsets
/// `d, d/2, d/4, ...` whose error expands in integer powers of `d`
/// (one-sided difference quotients). `ys[k]` is the value at `d / 2^k`.
pub fn richardson_onesided(ys: &[f64]) -> f64 {
    let mut cur = ys.to_vec();
    let mut order = 1.0;
    while cur.len() > 1 {
        let f = 2f64.powf(order);
        cur = cur
            .windows(2)
            .map(|w| (f * w[1] - w[0]) / (f - 1.0))
            .collect();
        order += 1.0;
    }
    cur[0]
}

/// Same for centered quotients, whose error expands in even powers of `d`.
pub fn richardson_centered(ys: &[f64]) -> f64 {
    let mut cur = ys.to_vec();
    let mut order = 2.0;
    while cur.len() > 1 {
        let f = 2f64.powf(order);
        cur = cur
            .windows(2)
            .map(|w| (f * w[1] - w[0]) / (f - 1.0))
            .collect();
        order += 2.0;
    }
    cur[0]
}

/// First index `i` with `sorted[i] >= x`, or `sorted.len()` when `x` exceeds
/// every element.
pub fn lower_bound(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&v| v < x)
}

/// Piecewise-linear interpolation on sorted abscissae, clamped at the ends.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = lower_bound(xs, x).max(1);
    let t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] + t * (ys[j] - ys[j - 1])
}

/// Cubic Hermite evaluation on a uniform grid given values and derivatives
/// per node. Clamps outside the grid. Returns (value, derivative).
pub fn hermite_uniform(
    x0: f64,
    h: f64,
    values: &[f64],
    derivs: &[f64],
    x: f64,
) -> (f64, f64) {
    let n = values.len();
    let last = x0 + (n - 1) as f64 * h;
    if x <= x0 {
        return (values[0], derivs[0]);
    }
    if x >= last {
        return (values[n - 1], derivs[n - 1]);
    }
    let j = (((x - x0) / h).floor() as usize).min(n - 2);
    let t = (x - (x0 + j as f64 * h)) / h;
    let (y0, y1, m0, m1) = (values[j], values[j + 1], derivs[j] * h, derivs[j + 1] * h);
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * m1;
    let dv = ((6.0 * t2 - 6.0 * t) * y0
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * m1)
        / h;
    (v, dv)
}

/// Simple least-squares line fit; returns (slope, intercept).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

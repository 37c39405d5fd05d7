//! Exact one-dimensional quadratic optimal transport. Distances come from
//! quantile functions of the piecewise-linear cell CDF, maps from monotone
//! rearrangement, and geodesics from interpolated quantiles inverted back
//! onto the working grid.

use crate::error::{EntroflowError, Result};
use crate::fokker_planck::GridDensity;
use crate::grid::Grid;
use crate::numerics::{richardson_centered, richardson_onesided, trapezoid_uniform};

/// CDF of a cell density, sampled at cell edges. Linear inside each cell,
/// flat across empty cells.
pub(crate) struct EdgeCdf {
    grid: Grid,
    /// length n_cells + 1, cdf[0] = 0, cdf[n] = 1
    cdf: Vec<f64>,
}

impl EdgeCdf {
    pub(crate) fn from_density(d: &GridDensity) -> Self {
        let n = d.grid.n_cells;
        let h = d.grid.h();
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for &p in &d.values {
            acc += h * p;
            cdf.push(acc);
        }
        let total = cdf[n];
        for c in cdf.iter_mut() {
            *c /= total;
        }
        cdf[n] = 1.0;
        EdgeCdf { grid: d.grid, cdf }
    }

    /// Largest x with F(x) <= u, clamping u into [0,1].
    pub(crate) fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let e = self.cdf.partition_point(|&c| c < u).max(1);
        let du = self.cdf[e] - self.cdf[e - 1];
        let lo = self.grid.edge(e - 1);
        if du > 0.0 {
            lo + self.grid.h() * (u - self.cdf[e - 1]) / du
        } else {
            lo
        }
    }

}

/// Quantile function sampled at the midpoints (j + 1/2)/M.
pub struct QuantileRep {
    pub m_points: usize,
    pub quantiles: Vec<f64>,
}

impl QuantileRep {
    pub fn from_density(d: &GridDensity, m_points: usize) -> Self {
        assert!(m_points >= 1024, "need at least 1024 quantile points");
        let cdf = EdgeCdf::from_density(d);
        let n = d.grid.n_cells;
        let h = d.grid.h();
        // u midpoints are increasing, so one sweep over the edges suffices
        let mut quantiles = Vec::with_capacity(m_points);
        let mut e = 1usize;
        for j in 0..m_points {
            let u = (j as f64 + 0.5) / m_points as f64;
            while e < n && cdf.cdf[e] < u {
                e += 1;
            }
            let du = cdf.cdf[e] - cdf.cdf[e - 1];
            let lo = d.grid.edge(e - 1);
            quantiles.push(if du > 0.0 {
                lo + h * (u - cdf.cdf[e - 1]) / du
            } else {
                lo
            });
        }
        QuantileRep {
            m_points,
            quantiles,
        }
    }

    /// Mean of the represented distribution (midpoint rule in u).
    pub fn mean(&self) -> f64 {
        self.quantiles.iter().sum::<f64>() / self.m_points as f64
    }
}

/// Quadratic Wasserstein distance via the quantile representation.
pub fn w2(p0: &GridDensity, p1: &GridDensity, m_points: usize) -> f64 {
    let q0 = QuantileRep::from_density(p0, m_points);
    let q1 = QuantileRep::from_density(p1, m_points);
    let sum: f64 = q0
        .quantiles
        .iter()
        .zip(&q1.quantiles)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sum / m_points as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportMapKind {
    MonotoneOptimal,
    Linearized { base_time: f64, delta: f64 },
}

/// A transport map sampled at the cell centers of its source grid.
#[derive(Debug, Clone)]
pub struct TransportMap {
    pub kind: TransportMapKind,
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl TransportMap {
    /// Displacement field `map(x) - x` at cell centers.
    pub fn displacement(&self) -> Vec<f64> {
        (0..self.grid.n_cells)
            .map(|i| self.values[i] - self.grid.center(i))
            .collect()
    }

    /// `L²(p0)` norm of the displacement; equals the W2 distance to the
    /// target when the map is the monotone rearrangement.
    pub fn displacement_norm(&self, p0: &GridDensity) -> f64 {
        let integrand: Vec<f64> = self
            .displacement()
            .iter()
            .zip(&p0.values)
            .map(|(g, &p)| g * g * p)
            .collect();
        trapezoid_uniform(&integrand, self.grid.h()).sqrt()
    }
}

/// Monotone rearrangement of `p0` onto `p1`.
pub fn optimal_map(p0: &GridDensity, p1: &GridDensity) -> TransportMap {
    let c0 = EdgeCdf::from_density(p0);
    let c1 = EdgeCdf::from_density(p1);
    let values = (0..p0.grid.n_cells)
        .map(|i| {
            // CDF is linear inside the cell, so its center value is the
            // average of the edge values
            let u = 0.5 * (c0.cdf[i] + c0.cdf[i + 1]);
            c1.quantile(u)
        })
        .collect();
    TransportMap {
        kind: TransportMapKind::MonotoneOptimal,
        grid: p0.grid,
        values,
    }
}

/// Sub-intervals per source cell when pushing mass through a transport map.
/// The CDF is linear inside a cell, so the map is exact at every sub-edge;
/// refinement only shrinks the piecewise-uniform spreading error, and eight
/// pieces already reach the resolution floor of the gridded endpoints.
const PUSHFORWARD_REFINEMENT: usize = 8;

/// Constant-speed geodesic between `p0` and `p1`: pushes `p0` through
/// `x -> (1-t) x + t * rearrangement(x)` and re-grids the image measure by
/// conservative cell averaging, so mass is exact before renormalization.
pub fn displacement_interpolation(
    p0: &GridDensity,
    p1: &GridDensity,
    t: f64,
) -> Result<GridDensity> {
    assert!((0.0..=1.0).contains(&t), "t must lie in [0,1]");
    let grid = p0.grid;
    let n = grid.n_cells;
    let h = grid.h();
    let c0 = EdgeCdf::from_density(p0);
    let c1 = EdgeCdf::from_density(p1);
    let k_sub = PUSHFORWARD_REFINEMENT;
    let mut y = Vec::with_capacity(n * k_sub + 1);
    for i in 0..n {
        let cell_mass = c0.cdf[i + 1] - c0.cdf[i];
        for s in 0..k_sub {
            let f = s as f64 / k_sub as f64;
            let x = grid.edge(i) + f * h;
            let u = c0.cdf[i] + f * cell_mass;
            y.push((1.0 - t) * x + t * c1.quantile(u));
        }
    }
    y.push((1.0 - t) * grid.edge(n) + t * c1.quantile(1.0));
    for w in y.windows(2) {
        if w[1] < w[0] - 1e-12 {
            return Err(EntroflowError::DegenerateGeodesic(format!(
                "interpolated map decreases by {:.3e}",
                w[0] - w[1]
            )));
        }
    }
    let mut values = vec![0.0; n];
    for i in 0..n {
        let sub_mass = (c0.cdf[i + 1] - c0.cdf[i]) / k_sub as f64;
        if sub_mass <= 0.0 {
            continue;
        }
        for s in 0..k_sub {
            let idx = i * k_sub + s;
            let (lo, hi) = (y[idx].min(y[idx + 1]), y[idx].max(y[idx + 1]));
            let k_lo = grid.cell_index(lo);
            let k_hi = grid.cell_index(hi);
            if k_lo == k_hi {
                values[k_lo] += sub_mass / h;
                continue;
            }
            let width = hi - lo;
            for k in k_lo..=k_hi {
                let a = lo.max(grid.edge(k));
                let b = hi.min(grid.edge(k + 1));
                if b > a {
                    values[k] += sub_mass * (b - a) / width / h;
                }
            }
        }
    }
    let total: f64 = values.iter().map(|v| v * h).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(EntroflowError::InvalidDensity(format!(
            "re-gridded mass {total:.9} deviates from 1 beyond 1e-6"
        )));
    }
    GridDensity::from_unnormalized(grid, p0.time, values)
}

/// Pushes `p_t0` through `x + delta * v(x)` with `v` given at cell centers.
/// Fails with the largest admissible step when the map is not increasing.
pub fn linearized_transport(
    p_t0: &GridDensity,
    velocity: &[f64],
    delta: f64,
) -> Result<GridDensity> {
    let grid = p_t0.grid;
    let n = grid.n_cells;
    assert_eq!(velocity.len(), n, "velocity field must match the grid");
    let h = grid.h();
    // velocity at edges: interior averages, clamped ends
    let v_edge: Vec<f64> = (0..=n)
        .map(|j| {
            if j == 0 {
                velocity[0]
            } else if j == n {
                velocity[n - 1]
            } else {
                0.5 * (velocity[j - 1] + velocity[j])
            }
        })
        .collect();
    let mut max_admissible = f64::INFINITY;
    for j in 0..n {
        let dv = v_edge[j + 1] - v_edge[j];
        if dv < 0.0 {
            max_admissible = max_admissible.min(h / (-dv));
        }
    }
    if delta.abs() >= max_admissible {
        return Err(EntroflowError::StepTooLarge {
            requested: delta,
            max_admissible,
        });
    }
    let z: Vec<f64> = (0..=n).map(|j| grid.edge(j) + delta * v_edge[j]).collect();
    // conservative scatter of each source cell's mass onto the fixed grid;
    // image pieces outside the domain are dropped and accounted below
    let mut values = vec![0.0; n];
    let mut kept = 0.0;
    let mut sent = 0.0;
    for j in 0..n {
        let mass = h * p_t0.values[j];
        if mass == 0.0 {
            continue;
        }
        sent += mass;
        let (lo, hi) = (z[j], z[j + 1]);
        let width = hi - lo;
        let k_lo = grid.cell_index(lo);
        let k_hi = grid.cell_index(hi);
        for k in k_lo..=k_hi {
            let a = lo.max(grid.edge(k));
            let b = hi.min(grid.edge(k + 1));
            if b > a {
                let piece = mass * (b - a) / width;
                values[k] += piece / h;
                kept += piece;
            }
        }
    }
    if (sent - kept).abs() > 1e-9 * sent {
        return Err(EntroflowError::SupportTouchesBoundary {
            lo: z[0],
            hi: z[n],
            x_min: grid.x_min,
            x_max: grid.x_max,
        });
    }
    GridDensity::from_unnormalized(grid, p_t0.time + delta, values)
}

/// Difference quotients of W2 distance to the `t0` slice, with Richardson
/// extrapolation over a halving ladder of offsets.
#[derive(Debug, Clone)]
pub struct SlopeTable {
    pub slope: f64,
    /// (offset, quotient) rows, largest offset first
    pub rows: Vec<(f64, f64)>,
    pub two_sided: bool,
}

fn find_slice<'a>(flow: &'a [GridDensity], t: f64) -> Result<&'a GridDensity> {
    flow.iter()
        .find(|d| (d.time - t).abs() <= 1e-9)
        .ok_or_else(|| EntroflowError::InsufficientFlow(format!("no slice at t = {t}")))
}

/// Estimates `lim W2(P(t0 + d), P(t0)) / d`. Offsets must halve. When the
/// flow also contains `t0 - d` for every offset the left and right quotients
/// are averaged and the even-order ladder is used.
pub fn slope_w2(
    flow: &[GridDensity],
    t0: f64,
    offsets: &[f64],
    m_points: usize,
) -> Result<SlopeTable> {
    if offsets.len() < 2 {
        return Err(EntroflowError::InsufficientFlow(
            "need at least 2 offsets for extrapolation".into(),
        ));
    }
    for w in offsets.windows(2) {
        if (w[0] / w[1] - 2.0).abs() > 1e-9 {
            return Err(EntroflowError::BadTimeGrid(format!(
                "offsets must halve, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let p_center = find_slice(flow, t0)?;
    let two_sided = offsets
        .iter()
        .all(|&d| find_slice(flow, t0 - d).is_ok());
    let mut rows = Vec::with_capacity(offsets.len());
    for &d in offsets {
        let right = w2(find_slice(flow, t0 + d)?, p_center, m_points) / d;
        let q = if two_sided {
            let left = w2(find_slice(flow, t0 - d)?, p_center, m_points) / d;
            0.5 * (left + right)
        } else {
            right
        };
        rows.push((d, q));
    }
    let qs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let slope = if two_sided {
        richardson_centered(&qs)
    } else {
        richardson_onesided(&qs)
    };
    Ok(SlopeTable {
        slope,
        rows,
        two_sided,
    })
}

//! Confining potentials and the Gibbs reference measure.
//!
//! A potential is a smooth nonnegative scalar function on the line with
//! analytically coded first and second derivatives. The associated reference
//! density is `q(x) = exp(-2 Psi(x))`, sigma-finite in general; when
//! `Z = ∫ q` is finite the normalized Gibbs density `q/Z` is the unique
//! stationary point of the diffusion.

use crate::error::{EntroflowError, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `Psi(x) = x^2 / 2`, curvature 1.
    Quadratic,
    /// `Psi(x) = (x^2 - alpha^2)^2`, curvature bounded below by `-4 alpha^2`.
    DoubleWell { alpha: f64 },
    /// `Psi ≡ 0` (heat flow; the reference measure is not normalizable).
    Free,
    /// `Psi(x) = sum_k coeffs[k] x^k` with analytic derivatives.
    Polynomial { coeffs: Vec<f64> },
}

/// A confining potential together with its drift-condition parameters:
/// `x Psi'(x) >= -c x^2` is required for `|x| >= r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub drift_c: f64,
    pub drift_r: f64,
}

impl Potential {
    pub fn quadratic() -> Self {
        Potential {
            kind: PotentialKind::Quadratic,
            drift_c: 0.0,
            drift_r: 0.0,
        }
    }

    pub fn double_well(alpha: f64) -> Self {
        Potential {
            kind: PotentialKind::DoubleWell { alpha },
            drift_c: 0.0,
            drift_r: alpha,
        }
    }

    pub fn free() -> Self {
        Potential {
            kind: PotentialKind::Free,
            drift_c: 0.0,
            drift_r: 0.0,
        }
    }

    pub fn polynomial(coeffs: Vec<f64>, drift_c: f64, drift_r: f64) -> Self {
        Potential {
            kind: PotentialKind::Polynomial { coeffs },
            drift_c,
            drift_r,
        }
    }

    /// Value, first and second derivative at `x`, exact for every kind.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match &self.kind {
            PotentialKind::Quadratic => (0.5 * x * x, x, 1.0),
            PotentialKind::DoubleWell { alpha } => {
                let a2 = alpha * alpha;
                let u = x * x - a2;
                (u * u, 4.0 * x * u, 12.0 * x * x - 4.0 * a2)
            }
            PotentialKind::Free => (0.0, 0.0, 0.0),
            PotentialKind::Polynomial { coeffs } => {
                // Horner for value and both derivatives in one pass
                let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    d2 = d2 * x + 2.0 * d1;
                    d1 = d1 * x + v;
                    v = v * x + c;
                }
                (v, d1, d2)
            }
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn dpsi(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    pub fn ddpsi(&self, x: f64) -> f64 {
        self.eval(x).2
    }

    /// Checks nonnegativity, the curvature bound and the drift condition on
    /// the working grid. Built-in kinds always pass; custom polynomials may
    /// not.
    pub fn validate_on(&self, grid: &Grid) -> Result<()> {
        let kappa = self.curvature_lower_bound(grid);
        for i in 0..grid.n_cells {
            let x = grid.center(i);
            let (v, d1, d2) = self.eval(x);
            if v < 0.0 {
                return Err(EntroflowError::InvalidPotential(format!(
                    "negative value {v:.3e} at x = {x:.4}"
                )));
            }
            if d2 < kappa - 1e-12 {
                return Err(EntroflowError::InvalidPotential(format!(
                    "curvature {d2:.3e} below bound {kappa:.3e} at x = {x:.4}"
                )));
            }
            if x.abs() >= self.drift_r && x * d1 < -self.drift_c * x * x - 1e-12 {
                return Err(EntroflowError::InvalidPotential(format!(
                    "drift condition violated at x = {x:.4}"
                )));
            }
        }
        Ok(())
    }

    /// Lower bound on `Psi''` over the grid interval. Analytic for built-in
    /// kinds (the quadratic is 1 everywhere; the double-well minimum sits at
    /// the origin), grid scan for custom polynomials.
    pub fn curvature_lower_bound(&self, grid: &Grid) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic => 1.0,
            PotentialKind::Free => 0.0,
            PotentialKind::DoubleWell { alpha } => {
                // Psi'' = 12 x^2 - 4 alpha^2 is minimized at the admissible x
                // closest to the origin
                let x0 = if grid.x_min <= 0.0 && grid.x_max >= 0.0 {
                    0.0
                } else if grid.x_min.abs() < grid.x_max.abs() {
                    grid.x_min
                } else {
                    grid.x_max
                };
                12.0 * x0 * x0 - 4.0 * alpha * alpha
            }
            PotentialKind::Polynomial { .. } => (0..grid.n_cells)
                .map(|i| self.ddpsi(grid.center(i)))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Whether `∫ exp(-2 Psi)` diverges on the real line.
    fn z_is_infinite(&self) -> bool {
        match &self.kind {
            PotentialKind::Free => true,
            PotentialKind::Polynomial { coeffs } => {
                coeffs.iter().skip(1).all(|&c| c == 0.0)
            }
            _ => false,
        }
    }
}

/// Partition constant of the reference measure, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionConstant {
    Finite(f64),
    Infinite,
}

impl PartitionConstant {
    pub fn finite(&self) -> Option<f64> {
        match self {
            PartitionConstant::Finite(z) => Some(*z),
            PartitionConstant::Infinite => None,
        }
    }
}

/// The unnormalized reference density `q = exp(-2 Psi)` tabulated on a grid.
///
/// Log values are kept alongside the linear ones: on wide grids with steep
/// potentials `q` underflows to zero in the tails while `log q = -2 Psi`
/// stays exact, and every downstream functional works on the log scale.
#[derive(Debug, Clone)]
pub struct GibbsReference {
    pub grid: Grid,
    pub q_values: Vec<f64>,
    pub log_q_values: Vec<f64>,
    /// `2 Psi'` at cell centers; the analytic part of the score
    /// `∇ log l = (log p)' + 2 Psi'`.
    pub two_dpsi_values: Vec<f64>,
    pub z: PartitionConstant,
}

/// Tabulates `q = exp(-2 Psi)` and computes `Z` by trapezoid quadrature,
/// flagging divergence for potentials without confinement.
pub fn gibbs_reference(pot: &Potential, grid: &Grid) -> GibbsReference {
    let n = grid.n_cells;
    let mut q = Vec::with_capacity(n);
    let mut logq = Vec::with_capacity(n);
    let mut two_dpsi = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.center(i);
        let (v, d1, _) = pot.eval(x);
        logq.push(-2.0 * v);
        q.push((-2.0 * v).exp());
        two_dpsi.push(2.0 * d1);
    }
    let z = if pot.z_is_infinite() {
        PartitionConstant::Infinite
    } else {
        PartitionConstant::Finite(crate::numerics::trapezoid_uniform(&q, grid.h()))
    };
    GibbsReference {
        grid: *grid,
        q_values: q,
        log_q_values: logq,
        two_dpsi_values: two_dpsi,
        z,
    }
}

/// Normalized Gibbs density `q / Z` as a plain vector. Errors when the
/// reference measure is not normalizable.
pub fn gibbs_density(reference: &GibbsReference) -> Result<Vec<f64>> {
    match reference.z {
        PartitionConstant::Finite(z) => {
            Ok(reference.q_values.iter().map(|&q| q / z).collect())
        }
        PartitionConstant::Infinite => Err(EntroflowError::InvalidDensity(
            "reference measure is not normalizable (Z = ∞)".into(),
        )),
    }
}

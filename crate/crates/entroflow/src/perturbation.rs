//! Compactly supported gradient perturbations.
//!
//! A perturbation is a smooth bump `B(x) = A exp(-1/(1 - u^2))` with
//! `u = (x - c)/w`, identically zero outside `|x - c| < w`. The drift field
//! it induces is `beta = B'` and its divergence `B''`; all three have closed
//! forms, so the perturbed solver and the analytic slope formulas share exact
//! derivatives.

use crate::error::{EntroflowError, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Perturbation {
    pub fn new(center: f64, width: f64, amplitude: f64) -> Self {
        assert!(width > 0.0, "bump width must be positive, got {width}");
        Perturbation {
            center,
            width,
            amplitude,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }

    /// Errors unless the support lies strictly inside the grid interior.
    pub fn check_support_inside(&self, grid: &Grid) -> Result<()> {
        let (lo, hi) = self.support();
        if lo <= grid.x_min || hi >= grid.x_max {
            return Err(EntroflowError::SupportTouchesBoundary {
                lo,
                hi,
                x_min: grid.x_min,
                x_max: grid.x_max,
            });
        }
        Ok(())
    }

    /// Bump value `B(x)`.
    pub fn potential(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        let s = 1.0 - u * u;
        if s <= 0.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / s).exp()
        }
    }

    /// Drift field `beta(x) = B'(x)`.
    pub fn beta(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        let s = 1.0 - u * u;
        if s <= 0.0 {
            0.0
        } else {
            let g = (-1.0 / s).exp();
            self.amplitude / self.width * g * (-2.0 * u / (s * s))
        }
    }

    /// `div beta(x) = B''(x)`.
    pub fn div_beta(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        let s = 1.0 - u * u;
        if s <= 0.0 {
            0.0
        } else {
            let g = (-1.0 / s).exp();
            let u2 = u * u;
            self.amplitude / (self.width * self.width)
                * g
                * (4.0 * u2 / (s * s * s * s) - 2.0 / (s * s) - 8.0 * u2 / (s * s * s))
        }
    }
}

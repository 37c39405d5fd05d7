//! Integral functionals of a density relative to the (possibly unnormalized)
//! equilibrium weight `q = exp(-2 Psi)`: relative entropy, Fisher
//! information, internal energy, Gibbs entropy, and the free energy that
//! combines them. All integrals are trapezoid sums on the cell-center grid.

use crate::error::{EntroflowError, Result};
use crate::fokker_planck::{likelihood_field, GridDensity, LikelihoodField};
use crate::numerics::{richardson_centered, richardson_onesided, trapezoid_uniform};
use crate::perturbation::Perturbation;
use crate::potentials::GibbsReference;
use crate::wasserstein::SlopeTable;

/// `H(p | q) = Int p (log p - log q)`, with `0 log 0 = 0`. Since `q` carries
/// no normalization this can take any sign.
pub fn relative_entropy(density: &GridDensity, reference: &GibbsReference) -> f64 {
    let integrand: Vec<f64> = density
        .values
        .iter()
        .zip(&reference.log_q_values)
        .map(|(&p, &lq)| if p > 0.0 { p * (p.ln() - lq) } else { 0.0 })
        .collect();
    trapezoid_uniform(&integrand, density.grid.h())
}

/// `Int Psi p`.
pub fn internal_energy(density: &GridDensity, reference: &GibbsReference) -> f64 {
    let integrand: Vec<f64> = density
        .values
        .iter()
        .zip(&reference.log_q_values)
        .map(|(&p, &lq)| p * (-0.5 * lq))
        .collect();
    trapezoid_uniform(&integrand, density.grid.h())
}

/// `Int p log p`, with `0 log 0 = 0`.
pub fn gibbs_entropy(density: &GridDensity) -> f64 {
    let integrand: Vec<f64> = density
        .values
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .collect();
    trapezoid_uniform(&integrand, density.grid.h())
}

/// `F = Int Psi p + (1/2) Int p log p`; twice this equals the relative
/// entropy against `exp(-2 Psi)`.
pub fn free_energy(density: &GridDensity, reference: &GibbsReference) -> f64 {
    internal_energy(density, reference) + 0.5 * gibbs_entropy(density)
}

/// `I(p | q) = Int |(log(p/q))'|^2 p` over cells where the field is defined.
pub fn fisher_information_from_field(field: &LikelihoodField, density: &GridDensity) -> f64 {
    let integrand: Vec<f64> = (0..density.grid.n_cells)
        .map(|i| {
            if field.mask[i] {
                let g = field.grad_log_l[i];
                g * g * density.values[i]
            } else {
                0.0
            }
        })
        .collect();
    trapezoid_uniform(&integrand, density.grid.h())
}

pub fn fisher_information(density: &GridDensity, reference: &GibbsReference) -> f64 {
    let field = likelihood_field(density, reference);
    fisher_information_from_field(&field, density)
}

/// Difference quotients of relative entropy against the `t0` slice over a
/// halving offset ladder, with the same slice-matching and extrapolation
/// rules as `wasserstein::slope_w2`: centered quotients and the even-order
/// ladder when both sides are stored, one-sided otherwise.
pub fn slope_entropy(
    flow: &[GridDensity],
    reference: &GibbsReference,
    t0: f64,
    offsets: &[f64],
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
    let find = |t: f64| {
        flow.iter()
            .find(|d| (d.time - t).abs() <= 1e-9)
            .ok_or_else(|| EntroflowError::InsufficientFlow(format!("no slice at t = {t}")))
    };
    let h_center = relative_entropy(find(t0)?, reference);
    let two_sided = offsets.iter().all(|&d| find(t0 - d).is_ok());
    let mut rows = Vec::with_capacity(offsets.len());
    for &d in offsets {
        let h_right = relative_entropy(find(t0 + d)?, reference);
        let q = if two_sided {
            let h_left = relative_entropy(find(t0 - d)?, reference);
            (h_right - h_left) / (2.0 * d)
        } else {
            (h_right - h_center) / d
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

/// Pointwise velocity of the mass flow, `v = -(1/2) (log(p/q))' - beta`,
/// zero on masked cells.
pub fn velocity_field(
    density: &GridDensity,
    reference: &GibbsReference,
    beta: Option<&Perturbation>,
) -> Vec<f64> {
    let field = likelihood_field(density, reference);
    (0..density.grid.n_cells)
        .map(|i| {
            if field.mask[i] {
                let extra = beta.map_or(0.0, |b| b.beta(density.grid.center(i)));
                -0.5 * field.grad_log_l[i] - extra
            } else {
                0.0
            }
        })
        .collect()
}

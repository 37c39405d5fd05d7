//! Slope analysis of gradient perturbations of the dissipative flow.
//!
//! With `a` the score of the current density against the Gibbs weight and
//! `b` the perturbing drift field, the perturbed flow dissipates entropy at
//! rate `1/2 <a, a+2b>` while moving at metric speed `1/2 ||a+2b||`, both in
//! `L^2(p)`. Dissipation per unit displacement is therefore maximal for the
//! unperturbed flow, with equality exactly when `a+2b` is a nonnegative
//! multiple of `a`.

use serde::Serialize;

use crate::error::Result;
use crate::fokker_planck::{likelihood_field, solve, GridDensity, LikelihoodField};
use crate::functionals::slope_entropy;
use crate::grid::Grid;
use crate::numerics::trapezoid_uniform;
use crate::perturbation::Perturbation;
use crate::potentials::{gibbs_reference, Potential};
use crate::wasserstein::slope_w2;

/// Quantile resolution for Wasserstein slopes.
const W2_POINTS: usize = 1 << 20;

/// The paired fields `a` (score) and `b` (perturbing drift) sampled at cell
/// centers, with the density they are weighted by. Masked score cells carry
/// `a = 0`, consistent with the Fisher integrals.
#[derive(Debug, Clone)]
pub struct AbFields {
    pub grid: Grid,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub weight: Vec<f64>,
}

impl AbFields {
    /// `L^2(p)` pairing `Int f g p`.
    pub fn pair(&self, f: &[f64], g: &[f64]) -> f64 {
        let integrand: Vec<f64> = f
            .iter()
            .zip(g)
            .zip(&self.weight)
            .map(|((&fi, &gi), &wi)| fi * gi * wi)
            .collect();
        trapezoid_uniform(&integrand, self.grid.h())
    }

    pub fn a_plus_2b(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(&a, &b)| a + 2.0 * b).collect()
    }
}

/// Samples `a = (log l)'` from the likelihood field and `b = beta` at the
/// cell centers of `p_t0`'s grid.
pub fn compute_ab(
    p_t0: &GridDensity,
    field: &LikelihoodField,
    beta: &Perturbation,
) -> AbFields {
    let grid = p_t0.grid;
    let b: Vec<f64> = (0..grid.n_cells).map(|i| beta.beta(grid.center(i))).collect();
    AbFields {
        grid,
        a: field.grad_log_l.clone(),
        b,
        weight: p_t0.values.clone(),
    }
}

/// Relative tolerances frozen for the slope comparisons.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeTolerances {
    pub entropy_rel: f64,
    pub w2_rel: f64,
    pub ratio_rel: f64,
}

impl Default for SlopeTolerances {
    fn default() -> Self {
        SlopeTolerances {
            entropy_rel: 0.03,
            w2_rel: 0.03,
            ratio_rel: 0.05,
        }
    }
}

/// Right-sided finite-difference slopes measured from actual flows started
/// at the common density: the perturbed pair and, for the dissipation-per-
/// displacement comparison, the unperturbed pair.
#[derive(Debug, Clone, Serialize)]
pub struct FdSlopes {
    pub offsets: Vec<f64>,
    pub entropy_slope: f64,
    pub w2_slope: f64,
    pub entropy_slope_unp: f64,
    pub w2_slope_unp: f64,
    /// Difference of dissipation-per-displacement ratios,
    /// `(-dH/dW)_unperturbed - (-dH/dW)_perturbed`.
    pub ratio_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub a_norm_sq: f64,
    /// `<a, b>`.
    pub ab_inner: f64,
    /// `<a, a+2b>`.
    pub inner: f64,
    pub norm_a2b_sq: f64,
    pub entropy_slope_pert: f64,
    pub w2_slope_pert: f64,
    /// `||a|| - <a, (a+2b)/||a+2b||>`, the slope-ratio deficit; nonnegative
    /// by Cauchy-Schwarz.
    pub gap: f64,
    /// Set when `a+2b` vanishes identically and the gap formula is void.
    pub degenerate: bool,
    pub fd: Option<FdSlopes>,
    pub tolerances: SlopeTolerances,
}

impl SlopeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Evaluates every pairing-level quantity of the slope comparison; the
/// finite-difference block is left empty.
pub fn analytic_slopes(ab: &AbFields) -> SlopeReport {
    let a2b = ab.a_plus_2b();
    let a_norm_sq = ab.pair(&ab.a, &ab.a);
    let ab_inner = ab.pair(&ab.a, &ab.b);
    let inner = ab.pair(&ab.a, &a2b);
    let norm_a2b_sq = ab.pair(&a2b, &a2b);
    let scale = a_norm_sq.max(4.0 * ab.pair(&ab.b, &ab.b));
    let degenerate = norm_a2b_sq <= 1e-24 * scale.max(1e-300);
    let gap = if degenerate {
        0.0
    } else {
        a_norm_sq.sqrt() - inner / norm_a2b_sq.sqrt()
    };
    SlopeReport {
        a_norm_sq,
        ab_inner,
        inner,
        norm_a2b_sq,
        entropy_slope_pert: -0.5 * inner,
        w2_slope_pert: 0.5 * norm_a2b_sq.sqrt(),
        gap,
        degenerate,
        fd: None,
        tolerances: SlopeTolerances::default(),
    }
}

/// Runs the perturbed and unperturbed equations from the common `p_t0` and
/// measures right-sided entropy and Wasserstein difference quotients over a
/// halving offset ladder with one-sided extrapolation.
pub fn empirical_slopes(
    pot: &Potential,
    beta: &Perturbation,
    p_t0: &GridDensity,
    t0: f64,
    offsets: &[f64],
    dt_max: f64,
) -> Result<FdSlopes> {
    assert!(
        (p_t0.time - t0).abs() <= 1e-9,
        "density carries time {} but slopes requested at {t0}",
        p_t0.time
    );
    beta.check_support_inside(&p_t0.grid)?;
    let mut times = vec![t0];
    times.extend(offsets.iter().rev().map(|&d| t0 + d));
    let per_flow = solve(p_t0, pot, Some(beta), &times, dt_max)?;
    let unp_flow = solve(p_t0, pot, None, &times, dt_max)?;
    let reference = gibbs_reference(pot, &p_t0.grid);
    let e_per = slope_entropy(&per_flow, &reference, t0, offsets)?;
    let e_unp = slope_entropy(&unp_flow, &reference, t0, offsets)?;
    let w_per = slope_w2(&per_flow, t0, offsets, W2_POINTS)?;
    let w_unp = slope_w2(&unp_flow, t0, offsets, W2_POINTS)?;
    Ok(FdSlopes {
        offsets: offsets.to_vec(),
        entropy_slope: e_per.slope,
        w2_slope: w_per.slope,
        entropy_slope_unp: e_unp.slope,
        w2_slope_unp: w_unp.slope,
        ratio_gap: (-e_unp.slope / w_unp.slope) - (-e_per.slope / w_per.slope),
    })
}

/// Full comparison at `t0`: analytic pairings from the snapshot plus the
/// finite-difference block from actual flows.
pub fn slope_report(
    pot: &Potential,
    beta: &Perturbation,
    p_t0: &GridDensity,
    t0: f64,
    offsets: &[f64],
    dt_max: f64,
) -> Result<SlopeReport> {
    let reference = gibbs_reference(pot, &p_t0.grid);
    let field = likelihood_field(p_t0, &reference);
    let ab = compute_ab(p_t0, &field, beta);
    let mut report = analytic_slopes(&ab);
    report.fd = Some(empirical_slopes(pot, beta, p_t0, t0, offsets, dt_max)?);
    Ok(report)
}

/// Checks `E_p[div beta - <beta, 2 Psi'>] = -<a, b>` by quadrature on the
/// snapshot's grid; returns `(lhs, rhs, lhs - rhs)`. Continuum equality is
/// integration by parts against the compactly supported `beta`; discretely
/// the residual carries the score's central-difference error, which vanishes
/// where `log p` is quadratic.
pub fn integration_by_parts_check(
    p_t0: &GridDensity,
    beta: &Perturbation,
    pot: &Potential,
) -> Result<(f64, f64, f64)> {
    beta.check_support_inside(&p_t0.grid)?;
    let grid = p_t0.grid;
    let reference = gibbs_reference(pot, &grid);
    let field = likelihood_field(p_t0, &reference);
    let lhs_integrand: Vec<f64> = (0..grid.n_cells)
        .map(|i| {
            let x = grid.center(i);
            (beta.div_beta(x) - 2.0 * beta.beta(x) * pot.dpsi(x)) * p_t0.values[i]
        })
        .collect();
    let lhs = trapezoid_uniform(&lhs_integrand, grid.h());
    let rhs_integrand: Vec<f64> = (0..grid.n_cells)
        .map(|i| field.grad_log_l[i] * beta.beta(grid.center(i)) * p_t0.values[i])
        .collect();
    let rhs = -trapezoid_uniform(&rhs_integrand, grid.h());
    Ok((lhs, rhs, lhs - rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{gibbs_density, Potential};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn ou_fixture() -> (GridDensity, Potential, Perturbation) {
        let grid = Grid::new(-8.0, 8.0, 4096).unwrap();
        let pot = Potential::quadratic();
        let p = GridDensity::gaussian(grid, 0.5, 1.0, 0.6).unwrap();
        let bump = Perturbation::new(1.0, 0.5, 0.3);
        (p, pot, bump)
    }

    fn fields_for(p: &GridDensity, pot: &Potential, bump: &Perturbation) -> AbFields {
        let reference = gibbs_reference(pot, &p.grid);
        let field = likelihood_field(p, &reference);
        compute_ab(p, &field, bump)
    }

    #[test]
    fn pairings_match_quadrature_oracle() {
        let (p, pot, bump) = ou_fixture();
        let ab = fields_for(&p, &pot, &bump);
        let report = analytic_slopes(&ab);
        // frozen high-precision quadrature values for this fixture
        assert_relative_eq!(report.a_norm_sq, 4.217777777777778, max_relative = 1e-8);
        assert_relative_eq!(report.ab_inner, 2.928223934951768e-2, max_relative = 1e-8);
        assert_relative_eq!(report.norm_a2b_sq, 4.502410538704035, max_relative = 1e-8);
        assert_relative_eq!(report.inner, 4.276342256476814, max_relative = 1e-8);
        assert_relative_eq!(report.gap, 3.837554821332345e-2, max_relative = 1e-6);
        assert_relative_eq!(
            report.entropy_slope_pert,
            -2.138171128238407,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            report.w2_slope_pert,
            1.060944218456375,
            max_relative = 1e-8
        );
        assert!(!report.degenerate);
    }

    #[test]
    fn consistency_chain_and_fisher_agreement() {
        let (p, pot, bump) = ou_fixture();
        let ab = fields_for(&p, &pot, &bump);
        let report = analytic_slopes(&ab);
        let recombined = report.a_norm_sq + 2.0 * report.ab_inner;
        assert_abs_diff_eq!(report.inner, recombined, epsilon = 1e-12 * report.inner.abs());
        let reference = gibbs_reference(&pot, &p.grid);
        let i_p = crate::functionals::fisher_information(&p, &reference);
        assert_abs_diff_eq!(report.a_norm_sq, i_p, epsilon = 1e-12 * i_p);
    }

    #[test]
    fn gibbs_score_vanishes() {
        let grid = Grid::new(-8.0, 8.0, 2048).unwrap();
        let pot = Potential::quadratic();
        let reference = gibbs_reference(&pot, &grid);
        let p = GridDensity::from_unnormalized(grid, 0.0, gibbs_density(&reference).unwrap())
            .unwrap();
        let bump = Perturbation::new(0.5, 1.0, 0.4);
        let ab = fields_for(&p, &pot, &bump);
        let report = analytic_slopes(&ab);
        assert!(report.a_norm_sq < 1e-18);
        assert!(report.gap.abs() < 1e-9);
        // stationary expectation of the divergence identity is zero on both
        // sides
        let (lhs, rhs, gap) = integration_by_parts_check(&p, &bump, &pot).unwrap();
        assert!(lhs.abs() < 1e-8, "lhs {lhs:.2e}");
        assert!(rhs.abs() < 1e-8, "rhs {rhs:.2e}");
        assert!(gap.abs() < 1e-8);
    }

    #[test]
    fn zero_perturbation_reduces_to_unperturbed_slopes() {
        let (p, pot, _) = ou_fixture();
        let bump = Perturbation::new(1.0, 0.5, 0.0);
        let ab = fields_for(&p, &pot, &bump);
        let report = analytic_slopes(&ab);
        assert_eq!(report.ab_inner, 0.0);
        assert_relative_eq!(
            report.entropy_slope_pert,
            -0.5 * report.a_norm_sq,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            report.w2_slope_pert,
            0.5 * report.a_norm_sq.sqrt(),
            max_relative = 1e-14
        );
        assert!(report.gap.abs() <= 1e-12 * report.a_norm_sq.sqrt());
    }

    #[test]
    fn degenerate_cancellation_is_flagged() {
        let grid = Grid::new(-2.0, 2.0, 128).unwrap();
        let b: Vec<f64> = (0..128).map(|i| (grid.center(i)).sin()).collect();
        let a: Vec<f64> = b.iter().map(|&v| -2.0 * v).collect();
        let ab = AbFields {
            grid,
            a,
            b,
            weight: vec![0.25; 128],
        };
        let report = analytic_slopes(&ab);
        assert!(report.degenerate);
        assert_eq!(report.gap, 0.0);
        assert_eq!(report.w2_slope_pert, 0.0);
    }

    #[test]
    fn collinear_construction_has_zero_gap() {
        // with p proportional to exp(B/lambda - 2 Psi) the score is exactly
        // B'/lambda, so b = lambda * a up to the central-difference error of
        // log p, which is pure B/lambda here (the quadratic part differences
        // exactly)
        let grid = Grid::new(-8.0, 8.0, 4096).unwrap();
        let pot = Potential::quadratic();
        let bump = Perturbation::new(0.5, 1.5, 0.4);
        for lambda in [0.7, 1.5] {
            let values: Vec<f64> = (0..grid.n_cells)
                .map(|i| {
                    let x = grid.center(i);
                    (bump.potential(x) / lambda - 2.0 * pot.psi(x)).exp()
                })
                .collect();
            let p = GridDensity::from_unnormalized(grid, 0.0, values).unwrap();
            let ab = fields_for(&p, &pot, &bump);
            let report = analytic_slopes(&ab);
            assert!(
                report.gap.abs() <= 1e-8,
                "lambda {lambda}: gap {:.3e}",
                report.gap
            );
        }
        // a negative multiple with 1 + 2 lambda < 0 flips a+2b against a and
        // the deficit becomes maximal instead
        let lambda = -0.6;
        let values: Vec<f64> = (0..grid.n_cells)
            .map(|i| {
                let x = grid.center(i);
                (bump.potential(x) / lambda - 2.0 * pot.psi(x)).exp()
            })
            .collect();
        let p = GridDensity::from_unnormalized(grid, 0.0, values).unwrap();
        let ab = fields_for(&p, &pot, &bump);
        let report = analytic_slopes(&ab);
        assert_relative_eq!(
            report.gap,
            2.0 * report.a_norm_sq.sqrt(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn random_bumps_never_beat_the_flow() {
        let grid = Grid::new(-4.0, 4.0, 1024).unwrap();
        let pot = Potential::double_well(1.0);
        let p0 = GridDensity::gaussian(grid, 0.0, 1.0, 0.25).unwrap();
        let flow = solve(&p0, &pot, None, &[0.0, 0.5], 1e-3).unwrap();
        let p = &flow[1];
        let reference = gibbs_reference(&pot, &grid);
        let field = likelihood_field(p, &reference);
        let mut rng = ChaCha12Rng::seed_from_u64(2718);
        for _ in 0..100 {
            let center = rng.gen_range(-2.0..2.0);
            let width = rng.gen_range(0.3..1.5);
            let amplitude = rng.gen_range(-0.8..0.8);
            let bump = Perturbation::new(center, width, amplitude);
            let ab = compute_ab(p, &field, &bump);
            let report = analytic_slopes(&ab);
            assert!(
                report.gap >= -1e-10,
                "bump ({center:.3}, {width:.3}, {amplitude:.3}): gap {:.3e}",
                report.gap
            );
        }
    }

    #[test]
    fn ibp_gap_small_on_gaussian_fixture() {
        let (p, pot, bump) = ou_fixture();
        let (lhs, rhs, gap) = integration_by_parts_check(&p, &bump, &pot).unwrap();
        // log p quadratic: the discrete score is exact and the residual is
        // pure quadrature against the bump's steep edge layers, far below
        // the 1e-6 budget
        assert!(gap.abs() <= 1e-8, "lhs {lhs:.6e} rhs {rhs:.6e} gap {gap:.3e}");
        assert_relative_eq!(lhs, -2.928223934951768e-2, max_relative = 1e-7);
    }

    #[test]
    fn ibp_gap_small_on_evolved_double_well() {
        let grid = Grid::new(-3.0, 3.0, 4096).unwrap();
        let pot = Potential::double_well(1.0);
        let p0 = GridDensity::gaussian(grid, 0.0, 1.0, 0.25).unwrap();
        let flow = solve(&p0, &pot, None, &[0.0, 0.5], 1e-3).unwrap();
        let bump = Perturbation::new(1.0, 0.5, 0.3);
        let (lhs, rhs, gap) = integration_by_parts_check(&flow[1], &bump, &pot).unwrap();
        assert!(
            gap.abs() <= 1e-6,
            "lhs {lhs:.6e} rhs {rhs:.6e} gap {gap:.3e}"
        );
    }

    #[test]
    fn support_outside_grid_rejected() {
        let (p, pot, _) = ou_fixture();
        let bump = Perturbation::new(7.8, 0.5, 0.3);
        assert!(integration_by_parts_check(&p, &bump, &pot).is_err());
    }

    #[test]
    fn empirical_slopes_match_analytic() {
        let (p, pot, bump) = ou_fixture();
        let offsets = [0.01, 0.005, 0.0025];
        let report = slope_report(&pot, &bump, &p, 0.5, &offsets, 1e-4).unwrap();
        let fd = report.fd.as_ref().unwrap();
        assert_relative_eq!(
            fd.entropy_slope,
            report.entropy_slope_pert,
            max_relative = report.tolerances.entropy_rel
        );
        assert_relative_eq!(
            fd.w2_slope,
            report.w2_slope_pert,
            max_relative = report.tolerances.w2_rel
        );
        assert_relative_eq!(
            fd.ratio_gap,
            report.gap,
            max_relative = report.tolerances.ratio_rel
        );
        let json = report.to_json();
        assert!(json.contains("\"fd\"") && json.contains("\"ratio_gap\""));
    }
}

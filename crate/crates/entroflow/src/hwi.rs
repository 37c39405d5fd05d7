//! Relative entropy along Wasserstein geodesics: the one-sided slope at the
//! left endpoint, displacement-convexity diagnostics, and the HWI
//! interpolation inequality in its standard and sharpened (inner-product)
//! forms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EntroflowError, Result};
use crate::fokker_planck::{likelihood_field, GridDensity};
use crate::functionals::{fisher_information_from_field, relative_entropy};
use crate::grid::Grid;
use crate::numerics::{richardson_onesided, trapezoid_uniform};
use crate::potentials::{GibbsReference, Potential};
use crate::wasserstein::{displacement_interpolation, optimal_map};

fn check_same_grid(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if a != b {
        return Err(EntroflowError::InvalidGrid(format!(
            "{what} must share one grid, got [{}, {}] x {} vs [{}, {}] x {}",
            a.x_min, a.x_max, a.n_cells, b.x_min, b.x_max, b.n_cells
        )));
    }
    Ok(())
}

/// `∫ (log l)'(x) γ(x) p(x) dx` with the score taken from a likelihood field,
/// so cells below the mass floor contribute zero.
fn score_displacement_inner(
    p0: &GridDensity,
    reference: &GibbsReference,
    gamma: &[f64],
) -> f64 {
    let field = likelihood_field(p0, reference);
    let integrand: Vec<f64> = field
        .grad_log_l
        .iter()
        .zip(gamma)
        .zip(&p0.values)
        .map(|((&g, &c), &p)| g * c * p)
        .collect();
    trapezoid_uniform(&integrand, p0.grid.h())
}

/// `H(P_t | Q)` sampled at `n_t + 1` uniform parameters of the constant-speed
/// geodesic from `p0` to `p1`.
///
/// Every sample, the endpoints included, goes through the same pushforward
/// and re-gridding; the re-gridding bias then varies smoothly in `t` and
/// largely cancels out of difference quotients and second differences.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicProfile {
    pub t: Vec<f64>,
    pub entropy: Vec<f64>,
    /// Transport cost between the endpoints, `L²(p0)` norm of the
    /// monotone-rearrangement displacement.
    pub w2: f64,
}

impl GeodesicProfile {
    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    /// `(t_j, (f_{j-1} - 2 f_j + f_{j+1}) / dt²)` at the interior nodes.
    pub fn second_differences(&self) -> Vec<(f64, f64)> {
        let dt = self.dt();
        (1..self.t.len() - 1)
            .map(|j| {
                let d2 = self.entropy[j - 1] - 2.0 * self.entropy[j] + self.entropy[j + 1];
                (self.t[j], d2 / (dt * dt))
            })
            .collect()
    }

    pub fn min_second_difference(&self) -> (f64, f64) {
        self.second_differences()
            .into_iter()
            .fold((f64::NAN, f64::INFINITY), |acc, (t, d)| {
                if d < acc.1 {
                    (t, d)
                } else {
                    acc
                }
            })
    }
}

pub fn geodesic_entropy_profile(
    p0: &GridDensity,
    p1: &GridDensity,
    reference: &GibbsReference,
    n_t: usize,
) -> Result<GeodesicProfile> {
    assert!(n_t >= 2, "profile needs at least two intervals");
    check_same_grid(&p0.grid, &p1.grid, "geodesic endpoints")?;
    check_same_grid(&p0.grid, &reference.grid, "endpoint and reference")?;
    for (name, d) in [("left", p0), ("right", p1)] {
        let h = relative_entropy(d, reference);
        if !h.is_finite() {
            return Err(EntroflowError::InvalidDensity(format!(
                "{name} endpoint has non-finite relative entropy {h}"
            )));
        }
    }
    let map = optimal_map(p0, p1);
    let w2 = map.displacement_norm(p0);
    let mut t = Vec::with_capacity(n_t + 1);
    let mut entropy = Vec::with_capacity(n_t + 1);
    for j in 0..=n_t {
        let tj = j as f64 / n_t as f64;
        let pt = displacement_interpolation(p0, p1, tj)?;
        t.push(tj);
        entropy.push(relative_entropy(&pt, reference));
    }
    Ok(GeodesicProfile { t, entropy, w2 })
}

/// Uniform displacement convexity of the entropy profile: the interior
/// discrete second differences stay above `kappa · W²` up to `slack`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub kappa: f64,
    pub w2: f64,
    pub dt: f64,
    /// `kappa · W²`, the claimed pointwise lower bound on `f''`.
    pub floor: f64,
    pub min_second_difference: f64,
    pub argmin_t: f64,
    /// `min f'' - floor`; negative values measure the worst violation.
    pub margin: f64,
    pub slack: f64,
    pub pass: bool,
}

impl ConvexityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("convexity report serializes")
    }
}

pub fn convexity_report(profile: &GeodesicProfile, kappa: f64, slack: f64) -> ConvexityReport {
    let floor = kappa * profile.w2 * profile.w2;
    let (argmin_t, min_d2) = profile.min_second_difference();
    let margin = min_d2 - floor;
    ConvexityReport {
        kappa,
        w2: profile.w2,
        dt: profile.dt(),
        floor,
        min_second_difference: min_d2,
        argmin_t,
        margin,
        slack,
        pass: margin >= -slack,
    }
}

/// Coefficient `c` that explains a negative margin as `c · dt²` worth of
/// discretization error. A genuine (continuum) violation makes the fitted
/// `c` grow like `dt⁻²` under refinement instead of stabilizing.
pub fn fitted_slack_coefficient(margin: f64, dt: f64) -> f64 {
    (-margin).max(0.0) / (dt * dt)
}

/// One-sided entropy slope at the left geodesic endpoint against its
/// inner-product target `∫ (log l_0)' γ p_0 dx`.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeAtZero {
    pub offsets: Vec<f64>,
    pub quotients: Vec<f64>,
    pub measured: f64,
    pub target: f64,
}

pub fn entropy_slope_at_zero(
    p0: &GridDensity,
    p1: &GridDensity,
    reference: &GibbsReference,
    offsets: &[f64],
) -> Result<SlopeAtZero> {
    check_same_grid(&p0.grid, &p1.grid, "geodesic endpoints")?;
    check_same_grid(&p0.grid, &reference.grid, "endpoint and reference")?;
    if offsets.len() < 2 {
        return Err(EntroflowError::BadTimeGrid(
            "slope extrapolation needs at least two offsets".into(),
        ));
    }
    for w in offsets.windows(2) {
        if w[1] <= 0.0 || (w[0] / w[1] - 2.0).abs() > 1e-9 {
            return Err(EntroflowError::BadTimeGrid(format!(
                "offsets must halve: got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if offsets[0] >= 1.0 {
        return Err(EntroflowError::BadTimeGrid(format!(
            "largest offset {} leaves the geodesic parameter range",
            offsets[0]
        )));
    }
    let map = optimal_map(p0, p1);
    let target = score_displacement_inner(p0, reference, &map.displacement());
    // The t = 0 entropy comes from the same pushforward as the offset ones,
    // so the re-gridding bias enters each quotient only through its variation
    // over [0, delta], not through its absolute size.
    let f0 = relative_entropy(&displacement_interpolation(p0, p1, 0.0)?, reference);
    let mut quotients = Vec::with_capacity(offsets.len());
    for &d in offsets {
        let fd = relative_entropy(&displacement_interpolation(p0, p1, d)?, reference);
        quotients.push((fd - f0) / d);
    }
    let measured = richardson_onesided(&quotients);
    Ok(SlopeAtZero {
        offsets: offsets.to_vec(),
        quotients,
        measured,
        target,
    })
}

/// Residual of `f(1) - f(0) = f'(0⁺) + ∫₀¹ (1-t) f''(t) dt`, the Taylor
/// identity behind the interpolation inequality, with `f''` taken from the
/// discrete profile and the slope supplied externally. The second-difference
/// samples are extrapolated linearly to the two end nodes before quadrature.
pub fn taylor_residual(profile: &GeodesicProfile, slope_at_zero: f64) -> f64 {
    let d2 = profile.second_differences();
    let m = d2.len();
    assert!(m >= 3, "taylor residual needs at least five profile nodes");
    let first = 2.0 * d2[0].1 - d2[1].1;
    let last = 2.0 * d2[m - 1].1 - d2[m - 2].1;
    let mut integrand = Vec::with_capacity(m + 2);
    integrand.push((1.0 - profile.t[0]) * first);
    for &(t, v) in &d2 {
        integrand.push((1.0 - t) * v);
    }
    integrand.push((1.0 - profile.t[profile.t.len() - 1]) * last);
    let integral = trapezoid_uniform(&integrand, profile.dt());
    let drop = profile.entropy[profile.entropy.len() - 1] - profile.entropy[0];
    drop - slope_at_zero - integral
}

/// Both forms of the HWI inequality for one density pair.
///
/// `lhs = H₀ - H₁`; the sharpened bound replaces `W √I₀` by the (signed)
/// inner product `-⟨score, displacement⟩`, so by Cauchy-Schwarz it is never
/// looser than the standard bound. The `W` entering both bounds is the
/// trapezoid `L²(p0)` norm of the displacement, evaluated with the same
/// weights as the inner product and the information, which preserves that
/// ordering at the discrete level.
#[derive(Debug, Clone, Serialize)]
pub struct HwiReport {
    pub h0: f64,
    pub h1: f64,
    pub w2: f64,
    pub i0: f64,
    pub kappa: f64,
    /// `⟨(log l_0)', γ⟩` in `L²(p0)`.
    pub inner: f64,
    pub lhs: f64,
    pub rhs_sharp: f64,
    pub rhs_std: f64,
    pub slack_sharp: f64,
    pub slack_std: f64,
    pub tol: f64,
    pub pass: bool,
}

impl HwiReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("HWI report serializes")
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum HwiOutcome {
    Report(HwiReport),
    /// The inequality presupposes finite endpoint entropies.
    NotApplicable { h0: f64, h1: f64 },
}

impl HwiOutcome {
    pub fn report(&self) -> Option<&HwiReport> {
        match self {
            HwiOutcome::Report(r) => Some(r),
            HwiOutcome::NotApplicable { .. } => None,
        }
    }
}

pub fn hwi_check(
    p0: &GridDensity,
    p1: &GridDensity,
    pot: &Potential,
    reference: &GibbsReference,
) -> Result<HwiOutcome> {
    check_same_grid(&p0.grid, &p1.grid, "density pair")?;
    check_same_grid(&p0.grid, &reference.grid, "pair and reference")?;
    let h0 = relative_entropy(p0, reference);
    let h1 = relative_entropy(p1, reference);
    if !h0.is_finite() || !h1.is_finite() {
        return Ok(HwiOutcome::NotApplicable { h0, h1 });
    }
    let map = optimal_map(p0, p1);
    let gamma = map.displacement();
    let w = map.displacement_norm(p0);
    let field = likelihood_field(p0, reference);
    let i0 = fisher_information_from_field(&field, p0);
    let integrand: Vec<f64> = field
        .grad_log_l
        .iter()
        .zip(&gamma)
        .zip(&p0.values)
        .map(|((&g, &c), &p)| g * c * p)
        .collect();
    let inner = trapezoid_uniform(&integrand, p0.grid.h());
    let kappa = pot.curvature_lower_bound(&p0.grid);
    let lhs = h0 - h1;
    let curvature_term = 0.5 * kappa * w * w;
    let rhs_sharp = -inner - curvature_term;
    let rhs_std = w * i0.sqrt() - curvature_term;
    let tol = 1e-3 * (1.0 + lhs.abs());
    Ok(HwiOutcome::Report(HwiReport {
        h0,
        h1,
        w2: w,
        i0,
        kappa,
        inner,
        lhs,
        rhs_sharp,
        rhs_std,
        slack_sharp: rhs_sharp - lhs,
        slack_std: rhs_std - lhs,
        tol,
        pass: lhs <= rhs_sharp + tol && lhs <= rhs_std + tol,
    }))
}

/// Smallest density value kept after truncating a random mixture to the
/// grid; keeps scores and entropies defined everywhere.
pub const PAIR_DENSITY_FLOOR: f64 = 1e-15;

fn random_mixture(grid: &Grid, rng: &mut ChaCha12Rng) -> GridDensity {
    let span = grid.x_max - grid.x_min;
    let lo = grid.x_min + 0.3 * span;
    let hi = grid.x_max - 0.3 * span;
    let n_comp = rng.gen_range(1..=3);
    let mut comps = Vec::with_capacity(n_comp);
    for _ in 0..n_comp {
        let weight = rng.gen_range(0.2..1.0);
        let mean = rng.gen_range(lo..hi);
        let sigma = rng.gen_range(span / 64.0..span / 16.0);
        comps.push((weight, mean, sigma));
    }
    let values: Vec<f64> = grid
        .centers()
        .iter()
        .map(|&x| {
            let mut v = 0.0;
            for &(w, m, s) in &comps {
                let z = (x - m) / s;
                v += w * (-0.5 * z * z).exp() / s;
            }
            v.max(PAIR_DENSITY_FLOOR)
        })
        .collect();
    GridDensity::from_unnormalized(*grid, 0.0, values)
        .expect("floored mixture has positive mass")
}

/// Deterministic random density pair: mixtures of one to three truncated
/// Gaussians, floored and renormalized. Each `pair_id` owns an RNG stream.
pub fn random_density_pair(grid: &Grid, seed: u64, pair_id: u64) -> (GridDensity, GridDensity) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(pair_id);
    let p0 = random_mixture(grid, &mut rng);
    let p1 = random_mixture(grid, &mut rng);
    (p0, p1)
}

#[derive(Debug, Clone, Serialize)]
pub struct HwiSuiteRow {
    pub pair_id: u64,
    pub lhs: f64,
    pub rhs_sharp: f64,
    pub rhs_std: f64,
    pub slack_sharp: f64,
    pub slack_std: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HwiSuiteReport {
    pub seed: u64,
    pub rows: Vec<HwiSuiteRow>,
    pub violations: usize,
    pub pass: bool,
}

impl HwiSuiteReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,lhs,rhs_sharp,rhs_std,slack_sharp,slack_std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.pair_id, r.lhs, r.rhs_sharp, r.rhs_std, r.slack_sharp, r.slack_std
            ));
        }
        out
    }
}

/// Runs the HWI check over `n_pairs` seeded random pairs in parallel.
pub fn hwi_suite(
    pot: &Potential,
    reference: &GibbsReference,
    n_pairs: u64,
    seed: u64,
) -> Result<HwiSuiteReport> {
    let rows: Vec<HwiSuiteRow> = (0..n_pairs)
        .into_par_iter()
        .map(|pair_id| {
            let (p0, p1) = random_density_pair(&reference.grid, seed, pair_id);
            match hwi_check(&p0, &p1, pot, reference)? {
                HwiOutcome::Report(r) => Ok(HwiSuiteRow {
                    pair_id,
                    lhs: r.lhs,
                    rhs_sharp: r.rhs_sharp,
                    rhs_std: r.rhs_std,
                    slack_sharp: r.slack_sharp,
                    slack_std: r.slack_std,
                    pass: r.pass,
                }),
                HwiOutcome::NotApplicable { h0, h1 } => Err(EntroflowError::InvalidDensity(
                    format!("generated pair {pair_id} has entropies {h0}, {h1}"),
                )),
            }
        })
        .collect::<Result<_>>()?;
    let violations = rows.iter().filter(|r| !r.pass).count();
    Ok(HwiSuiteReport {
        seed,
        rows,
        violations: violations,
        pass: violations == 0,
    })
}

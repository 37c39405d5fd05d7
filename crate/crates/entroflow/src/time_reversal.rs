//! Trajectorial backward-martingale machinery.
//!
//! Along each simulated path the relative entropy process
//! `log l(t, X(t))`, its cumulative Fisher compensator `F`, and the
//! candidate backward martingale `M = (log l - log l(T, X(T))) - F` are
//! tabulated on the recording grid, indexed by backward time `s = T - t`.
//! Statistical tests then probe the martingale property of `M`, its
//! quadratic variation, and the conditional entropy dissipation rates.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EntroflowError, Result};
use crate::fokker_planck::{likelihood_field, FlowInterpolant, GridDensity};
use crate::langevin::PathEnsemble;
use crate::numerics::{interp_linear, richardson_onesided};
use crate::perturbation::Perturbation;
use crate::potentials::{gibbs_reference, Potential};
use crate::stats::{equal_probability_bins, mean, standard_error};

/// Fraction of paths allowed to leave the grid before construction fails.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-4;

/// Tolerance for matching recording times against stored flow slices.
const TIME_MATCH_TOL: f64 = 1e-9;

/// Backward-time processes evaluated along a simulated ensemble.
///
/// Rows are paths, columns are backward times `s` (column 0 is the terminal
/// forward time, where `M = 0` exactly). Matrices are row-major
/// `[path * n_s + j]`.
#[derive(Debug, Clone)]
pub struct TrajectorialProcesses {
    /// Backward times, increasing from 0; the forward label is `t_final - s`.
    pub s_grid: Vec<f64>,
    pub t_final: f64,
    /// Retained paths.
    pub n_paths: usize,
    /// Paths dropped because a position left the grid.
    pub excluded: usize,
    pub perturbed: bool,
    /// `X(t_final - s_j)` per retained path.
    pub positions: Vec<f64>,
    /// Candidate backward martingale `M(t_final - s_j)`.
    pub m: Vec<f64>,
    /// Cumulative Fisher compensator `F(t_final - s_j)`.
    pub f_cum: Vec<f64>,
    /// `|grad log l|^2` at `(t_final - s_j, X(t_final - s_j))`.
    pub grad_sq: Vec<f64>,
}

impl TrajectorialProcesses {
    pub fn n_s(&self) -> usize {
        self.s_grid.len()
    }

    /// Index of the stored backward time `s`, matched within 1e-9.
    pub fn index_of_s(&self, s: f64) -> Result<usize> {
        self.s_grid
            .iter()
            .position(|&v| (v - s).abs() <= TIME_MATCH_TOL)
            .ok_or_else(|| {
                EntroflowError::InsufficientFlow(format!(
                    "backward time {s:.6} is not a stored column"
                ))
            })
    }

    /// Index of the stored forward time `t = t_final - s`.
    pub fn index_of_forward(&self, t: f64) -> Result<usize> {
        self.index_of_s(self.t_final - t)
    }

    /// Entropy increment `log l(t_final - s_j, X) - log l(t_final, X(t_final))`.
    pub fn entropy_increment(&self, path: usize, j: usize) -> f64 {
        let i = path * self.n_s() + j;
        self.m[i] + self.f_cum[i]
    }

    /// Ensemble mean of `F` at the stored column `j`.
    pub fn mean_f(&self, j: usize) -> f64 {
        let nt = self.n_s();
        let sum: f64 = (0..self.n_paths).map(|p| self.f_cum[p * nt + j]).sum();
        sum / self.n_paths as f64
    }

    /// Ensemble mean and standard error of `F` at the earliest forward time.
    pub fn mean_f_initial(&self) -> (f64, f64) {
        let nt = self.n_s();
        let vals: Vec<f64> = (0..self.n_paths)
            .map(|p| self.f_cum[p * nt + nt - 1])
            .collect();
        (mean(&vals), standard_error(&vals))
    }
}

/// Evaluates the processes for `ensemble` against the stored `flow`.
///
/// The compensator integrand is `1/2 |grad log l|^2`, plus the drift
/// correction `2 <beta, grad Psi> - div beta` when the dynamics carry a
/// perturbation. Paths that leave the grid are excluded and counted; more
/// than [`MAX_EXCLUDED_FRACTION`] of them is an error.
pub fn build_processes(
    ensemble: &PathEnsemble,
    flow: &[GridDensity],
    pot: &Potential,
    beta: Option<&Perturbation>,
) -> Result<TrajectorialProcesses> {
    build_impl(ensemble, flow, pot, beta, true)
}

/// Negative control for [`martingale_test`]: builds the processes with the
/// drift correction deliberately omitted from the compensator, so under
/// perturbed dynamics the candidate `M` is not a martingale and binned
/// increments must show systematic bias.
pub fn build_processes_corrupted(
    ensemble: &PathEnsemble,
    flow: &[GridDensity],
    pot: &Potential,
    beta: Option<&Perturbation>,
) -> Result<TrajectorialProcesses> {
    build_impl(ensemble, flow, pot, beta, false)
}

fn build_impl(
    ensemble: &PathEnsemble,
    flow: &[GridDensity],
    pot: &Potential,
    beta: Option<&Perturbation>,
    drift_correction: bool,
) -> Result<TrajectorialProcesses> {
    let nt = ensemble.t_grid.len();
    if nt < 2 {
        return Err(EntroflowError::BadTimeGrid(
            "ensemble must record at least two times".into(),
        ));
    }
    let mut matched: Vec<GridDensity> = Vec::with_capacity(nt);
    for &t in &ensemble.t_grid {
        let slice = flow
            .iter()
            .find(|d| (d.time - t).abs() <= TIME_MATCH_TOL)
            .ok_or_else(|| {
                EntroflowError::InsufficientFlow(format!(
                    "no stored density at recording time {t:.6}"
                ))
            })?;
        matched.push(slice.clone());
    }
    let grid = matched[0].grid;
    let interp = FlowInterpolant::new(&matched)?;
    let t_final = *ensemble.t_grid.last().unwrap();
    let mut s_grid: Vec<f64> = ensemble
        .t_grid
        .iter()
        .rev()
        .map(|&t| t_final - t)
        .collect();
    s_grid[0] = 0.0;

    let n_paths = ensemble.n_paths;
    let mut positions = vec![0.0; n_paths * nt];
    let mut m = vec![0.0; n_paths * nt];
    let mut f_cum = vec![0.0; n_paths * nt];
    let mut grad_sq = vec![0.0; n_paths * nt];
    let t_grid = &ensemble.t_grid;
    let s_ref = &s_grid;
    let left_grid: Vec<bool> = positions
        .par_chunks_mut(nt)
        .zip(m.par_chunks_mut(nt))
        .zip(f_cum.par_chunks_mut(nt))
        .zip(grad_sq.par_chunks_mut(nt))
        .enumerate()
        .map(|(path, (((p_row, m_row), f_row), g_row))| {
            let mut log_l = vec![0.0; nt];
            let mut integrand = vec![0.0; nt];
            for j in 0..nt {
                let k = nt - 1 - j;
                let x = ensemble.position(path, k);
                if !(grid.x_min..=grid.x_max).contains(&x) {
                    return true;
                }
                let (lp, dlp) = interp.eval(t_grid[k], x);
                let (psi, dpsi, _) = pot.eval(x);
                let g = dlp + 2.0 * dpsi;
                log_l[j] = lp + 2.0 * psi;
                g_row[j] = g * g;
                p_row[j] = x;
                let mut b = 0.5 * g * g;
                if drift_correction {
                    if let Some(bump) = beta {
                        b += 2.0 * bump.beta(x) * dpsi - bump.div_beta(x);
                    }
                }
                integrand[j] = b;
            }
            for j in 1..nt {
                let ds = s_ref[j] - s_ref[j - 1];
                f_row[j] = f_row[j - 1] + 0.5 * ds * (integrand[j - 1] + integrand[j]);
            }
            for j in 0..nt {
                m_row[j] = (log_l[j] - log_l[0]) - f_row[j];
            }
            false
        })
        .collect();

    let excluded = left_grid.iter().filter(|&&b| b).count();
    let mut retained = n_paths;
    if excluded > 0 {
        if excluded as f64 / n_paths as f64 >= MAX_EXCLUDED_FRACTION {
            return Err(EntroflowError::ExcludedPaths {
                excluded,
                n_paths,
                budget: MAX_EXCLUDED_FRACTION,
            });
        }
        let mut w = 0;
        for r in 0..n_paths {
            if left_grid[r] {
                continue;
            }
            if w != r {
                for mat in [&mut positions, &mut m, &mut f_cum, &mut grad_sq] {
                    mat.copy_within(r * nt..(r + 1) * nt, w * nt);
                }
            }
            w += 1;
        }
        for mat in [&mut positions, &mut m, &mut f_cum, &mut grad_sq] {
            mat.truncate(w * nt);
        }
        retained = w;
    }

    Ok(TrajectorialProcesses {
        s_grid,
        t_final,
        n_paths: retained,
        excluded,
        perturbed: beta.is_some(),
        positions,
        m,
        f_cum,
        grad_sq,
    })
}

/// Statistical acceptance policy for binned z-scores: flag at the two-sided
/// 1% level, hard-fail any |z| above 4, tolerate flags on at most 5% of
/// bins, merge bins holding fewer than 100 paths. The thresholds are
/// artifact policy with frozen defaults, not consequences of the theory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MartingalePolicy {
    pub z_flag: f64,
    pub z_hard: f64,
    pub max_flag_fraction: f64,
    pub min_bin_count: usize,
}

impl Default for MartingalePolicy {
    fn default() -> Self {
        MartingalePolicy {
            z_flag: 2.81,
            z_hard: 4.0,
            max_flag_fraction: 0.05,
            min_bin_count: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BinZRow {
    pub x_center: f64,
    pub count: usize,
    pub mean: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub s_from: f64,
    pub s_to: f64,
    pub bins: Vec<BinZRow>,
    pub merged: usize,
    pub flagged: usize,
    pub max_abs_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QvComparison {
    pub s: f64,
    pub empirical: f64,
    pub target: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleTestReport {
    pub policy: MartingalePolicy,
    pub pairs: Vec<PairReport>,
    /// Filled by callers that also run [`quadratic_variation_test`].
    pub qv: Option<QvComparison>,
    pub pass: bool,
}

impl MartingaleTestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,s_from,s_to,bin,x_center,count,mean,se,z\n");
        for (pi, pair) in self.pairs.iter().enumerate() {
            for (bi, b) in pair.bins.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{pi},{},{},{bi},{:.17e},{},{:.17e},{:.17e},{:.17e}",
                    pair.s_from, pair.s_to, b.x_center, b.count, b.mean, b.se, b.z
                );
            }
        }
        out
    }
}

/// Tests the backward-martingale property of `M` with [`MartingalePolicy`]
/// defaults: for each pair `s < s'` the increments `M(T-s') - M(T-s)` are
/// binned on `X(T-s)` and their conditional means compared against zero.
pub fn martingale_test(
    proc: &TrajectorialProcesses,
    s_pairs: &[(f64, f64)],
    n_bins: usize,
) -> Result<MartingaleTestReport> {
    martingale_test_with_policy(proc, s_pairs, n_bins, MartingalePolicy::default())
}

pub fn martingale_test_with_policy(
    proc: &TrajectorialProcesses,
    s_pairs: &[(f64, f64)],
    n_bins: usize,
    policy: MartingalePolicy,
) -> Result<MartingaleTestReport> {
    assert!(
        proc.n_paths >= 10_000,
        "martingale test needs at least 1e4 paths, got {}",
        proc.n_paths
    );
    assert!(n_bins >= 1);
    let nt = proc.n_s();
    let mut pairs = Vec::with_capacity(s_pairs.len());
    let mut all_pass = true;
    for &(s_from, s_to) in s_pairs {
        assert!(s_from < s_to, "pairs must be increasing in backward time");
        let j_from = proc.index_of_s(s_from)?;
        let j_to = proc.index_of_s(s_to)?;
        let xs: Vec<f64> = (0..proc.n_paths)
            .map(|p| proc.positions[p * nt + j_from])
            .collect();
        let assignment = equal_probability_bins(&xs, n_bins, policy.min_bin_count);
        let mut bins = Vec::with_capacity(assignment.bins.len());
        let mut flagged = 0usize;
        let mut max_abs_z = 0.0f64;
        for members in &assignment.bins {
            let incs: Vec<f64> = members
                .iter()
                .map(|&p| proc.m[p * nt + j_to] - proc.m[p * nt + j_from])
                .collect();
            let bin_mean = mean(&incs);
            let se = standard_error(&incs);
            let z = if se > 0.0 { bin_mean / se } else { 0.0 };
            let states: Vec<f64> = members.iter().map(|&p| xs[p]).collect();
            if z.abs() > policy.z_flag {
                flagged += 1;
            }
            max_abs_z = max_abs_z.max(z.abs());
            bins.push(BinZRow {
                x_center: mean(&states),
                count: members.len(),
                mean: bin_mean,
                se,
                z,
            });
        }
        let pass = flagged as f64 <= policy.max_flag_fraction * bins.len() as f64
            && max_abs_z <= policy.z_hard;
        all_pass &= pass;
        pairs.push(PairReport {
            s_from,
            s_to,
            bins,
            merged: assignment.merged,
            flagged,
            max_abs_z,
            pass,
        });
    }
    Ok(MartingaleTestReport {
        policy,
        pairs,
        qv: None,
        pass: all_pass,
    })
}

/// Compares the empirical quadratic variation of `M` over `[0, s]` against
/// its compensator target `int_0^s |grad log l|^2 du`, as ensemble means.
pub fn quadratic_variation_test(proc: &TrajectorialProcesses, s: f64) -> Result<QvComparison> {
    let j = proc.index_of_s(s)?;
    let nt = proc.n_s();
    let mut emp = 0.0;
    let mut tgt = 0.0;
    for p in 0..proc.n_paths {
        let m_row = &proc.m[p * nt..(p + 1) * nt];
        let g_row = &proc.grad_sq[p * nt..(p + 1) * nt];
        let mut qv = 0.0;
        let mut t = 0.0;
        for i in 0..j {
            let d = m_row[i + 1] - m_row[i];
            qv += d * d;
            let ds = proc.s_grid[i + 1] - proc.s_grid[i];
            t += 0.5 * ds * (g_row[i] + g_row[i + 1]);
        }
        emp += qv;
        tgt += t;
    }
    let n = proc.n_paths as f64;
    let empirical = emp / n;
    let target = tgt / n;
    let relative_gap = if target > 0.0 {
        (empirical - target).abs() / target
    } else {
        empirical.abs()
    };
    Ok(QvComparison {
        s,
        empirical,
        target,
        relative_gap,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateBinRow {
    pub x_center: f64,
    pub count: usize,
    /// Binned quotient means, one per offset (largest first).
    pub per_offset: Vec<f64>,
    /// Richardson extrapolation of `per_offset`.
    pub measured: f64,
    pub target: f64,
    /// Conservative standard error of `measured` (quadrature combination of
    /// the per-offset bin standard errors with the extrapolation weights).
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateTestReport {
    pub t0: f64,
    pub offsets: Vec<f64>,
    pub n_bins_effective: usize,
    pub bins: Vec<RateBinRow>,
    /// Probability-weighted mean |measured - target|.
    pub aggregate_deviation: f64,
    /// Probability-weighted mean |target|.
    pub mean_target: f64,
    /// `aggregate_deviation / mean_target`, or the absolute deviation when
    /// the target vanishes identically.
    pub relative_deviation: f64,
}

impl RateTestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,x_center,count,measured,target,se\n");
        for (bi, b) in self.bins.iter().enumerate() {
            let _ = writeln!(
                out,
                "{bi},{:.17e},{},{:.17e},{:.17e},{:.17e}",
                b.x_center, b.count, b.measured, b.target, b.se
            );
        }
        out
    }
}

/// Largest bin count not exceeding `n_bins` that keeps every
/// equal-probability bin at or above `min_count` members.
fn effective_bins(n_paths: usize, n_bins: usize, min_count: usize) -> usize {
    let mut nb = n_bins.max(1);
    while nb > 1 && n_paths / nb < min_count {
        nb /= 2;
    }
    nb
}

/// Weights the iterated one-sided Richardson scheme assigns to each sample.
fn richardson_weights(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            richardson_onesided(&e)
        })
        .collect()
}

fn validate_offsets(offsets: &[f64]) {
    assert!(offsets.len() >= 2, "extrapolation needs at least two offsets");
    for w in offsets.windows(2) {
        assert!(
            w[0] > 0.0 && (w[1] - 0.5 * w[0]).abs() <= 1e-9 * w[0],
            "offsets must be positive and halve, got {} then {}",
            w[0],
            w[1]
        );
    }
}

struct BinnedQuotients {
    counts: Vec<usize>,
    x_centers: Vec<f64>,
    /// `[offset][bin]` quotient means.
    means: Vec<Vec<f64>>,
    /// `[offset][bin]` standard errors.
    ses: Vec<Vec<f64>>,
}

/// Bins the per-path quotients for each offset on the conditioning state
/// `X(t0 + offset)`. Bin index `b` covers the same quantile range at every
/// offset, so extrapolation across offsets is taken bin-wise. Centers and
/// counts come from the smallest offset.
fn bin_quotients(
    proc: &TrajectorialProcesses,
    js: &[usize],
    nb: usize,
    quotient: impl Fn(usize, usize, usize) -> f64,
) -> BinnedQuotients {
    let nt = proc.n_s();
    let n_offsets = js.len();
    let mut means = vec![vec![0.0; nb]; n_offsets];
    let mut ses = vec![vec![0.0; nb]; n_offsets];
    let mut counts = vec![0usize; nb];
    let mut x_centers = vec![0.0; nb];
    for (k, &jk) in js.iter().enumerate() {
        let xs: Vec<f64> = (0..proc.n_paths)
            .map(|p| proc.positions[p * nt + jk])
            .collect();
        let assignment = equal_probability_bins(&xs, nb, 1);
        for (b, members) in assignment.bins.iter().enumerate() {
            let vals: Vec<f64> = members.iter().map(|&p| quotient(p, k, jk)).collect();
            means[k][b] = mean(&vals);
            ses[k][b] = standard_error(&vals);
            if k == n_offsets - 1 {
                counts[b] = members.len();
                let states: Vec<f64> = members.iter().map(|&p| xs[p]).collect();
                x_centers[b] = mean(&states);
            }
        }
    }
    BinnedQuotients {
        counts,
        x_centers,
        means,
        ses,
    }
}

fn assemble_rate_report(
    t0: f64,
    offsets: &[f64],
    binned: BinnedQuotients,
    n_paths: usize,
    target_at: impl Fn(f64) -> f64,
) -> RateTestReport {
    let nb = binned.counts.len();
    let n_offsets = offsets.len();
    let weights = richardson_weights(n_offsets);
    let mut bins = Vec::with_capacity(nb);
    let mut aggregate = 0.0;
    let mut mean_target = 0.0;
    for b in 0..nb {
        let per_offset: Vec<f64> = (0..n_offsets).map(|k| binned.means[k][b]).collect();
        let measured = richardson_onesided(&per_offset);
        let se = (0..n_offsets)
            .map(|k| (weights[k] * binned.ses[k][b]).powi(2))
            .sum::<f64>()
            .sqrt();
        let target = target_at(binned.x_centers[b]);
        let w = binned.counts[b] as f64 / n_paths as f64;
        aggregate += w * (measured - target).abs();
        mean_target += w * target.abs();
        bins.push(RateBinRow {
            x_center: binned.x_centers[b],
            count: binned.counts[b],
            per_offset,
            measured,
            target,
            se,
        });
    }
    let relative_deviation = if mean_target > 0.0 {
        aggregate / mean_target
    } else {
        aggregate
    };
    RateTestReport {
        t0,
        offsets: offsets.to_vec(),
        n_bins_effective: nb,
        bins,
        aggregate_deviation: aggregate,
        mean_target,
        relative_deviation,
    }
}

/// Conditional entropy dissipation rate at `t0`: binned means of the
/// backward difference quotients of the entropy process, conditioned on
/// `X(t0 + offset)` and extrapolated over halving offsets, against the
/// analytic rate from the flow snapshot at `t0`.
///
/// Unperturbed target: `1/2 |grad log l(t0, x)|^2`. Perturbed target adds
/// the drift correction `2 <beta, grad Psi> - div beta` at the bin center.
pub fn trajectorial_rate_test(
    proc: &TrajectorialProcesses,
    snapshot: &GridDensity,
    pot: &Potential,
    beta: Option<&Perturbation>,
    t0: f64,
    offsets: &[f64],
    n_bins: usize,
) -> Result<RateTestReport> {
    assert!(t0 >= 0.05, "rate limits are tested away from the initial time");
    validate_offsets(offsets);
    assert_eq!(
        beta.is_some(),
        proc.perturbed,
        "perturbation presence must match the ensemble dynamics"
    );
    assert!(
        (snapshot.time - t0).abs() <= TIME_MATCH_TOL,
        "snapshot must be the stored density at t0"
    );
    let j0 = proc.index_of_forward(t0)?;
    let js: Vec<usize> = offsets
        .iter()
        .map(|&d| proc.index_of_forward(t0 + d))
        .collect::<Result<_>>()?;

    let reference = gibbs_reference(pot, &snapshot.grid);
    let field = likelihood_field(snapshot, &reference);
    let centers: Vec<f64> = (0..snapshot.grid.n_cells)
        .map(|i| snapshot.grid.center(i))
        .collect();

    let nb = effective_bins(proc.n_paths, n_bins, MartingalePolicy::default().min_bin_count);
    let nt = proc.n_s();
    let rel = |p: usize, j: usize| proc.m[p * nt + j] + proc.f_cum[p * nt + j];
    let binned = bin_quotients(proc, &js, nb, |p, k, jk| {
        (rel(p, j0) - rel(p, jk)) / offsets[k]
    });
    Ok(assemble_rate_report(t0, offsets, binned, proc.n_paths, |x| {
        let g = interp_linear(&centers, &field.grad_log_l, x);
        let mut target = 0.5 * g * g;
        if let Some(bump) = beta {
            target += 2.0 * bump.beta(x) * pot.dpsi(x) - bump.div_beta(x);
        }
        target
    }))
}

/// Rate of the log-likelihood-ratio between the perturbed and unperturbed
/// flows along perturbed paths: binned means of
/// `(log p_beta - log p)(t0 + offset, X(t0 + offset)) / offset`
/// extrapolated over halving offsets, against the analytic limit
/// `div beta + <beta, grad log p(t0, .)>` at the bin center. Both flows
/// must start from the same density at `t0`.
pub fn likelihood_ratio_rate_test(
    proc: &TrajectorialProcesses,
    unperturbed_flow: &[GridDensity],
    perturbed_flow: &[GridDensity],
    beta: &Perturbation,
    t0: f64,
    offsets: &[f64],
    n_bins: usize,
) -> Result<RateTestReport> {
    assert!(proc.perturbed, "ensemble must carry the perturbed dynamics");
    validate_offsets(offsets);
    let unp = FlowInterpolant::new(unperturbed_flow)?;
    let per = FlowInterpolant::new(perturbed_flow)?;
    let js: Vec<usize> = offsets
        .iter()
        .map(|&d| proc.index_of_forward(t0 + d))
        .collect::<Result<_>>()?;

    let nb = effective_bins(proc.n_paths, n_bins, MartingalePolicy::default().min_bin_count);
    let nt = proc.n_s();
    let binned = bin_quotients(proc, &js, nb, |p, k, jk| {
        let x = proc.positions[p * nt + jk];
        let t = t0 + offsets[k];
        (per.log_p_at(t, x) - unp.log_p_at(t, x)) / offsets[k]
    });
    Ok(assemble_rate_report(t0, offsets, binned, proc.n_paths, |x| {
        beta.div_beta(x) + beta.beta(x) * unp.dlog_p_at(t0, x)
    }))
}

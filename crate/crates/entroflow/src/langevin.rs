//! Euler-Maruyama ensembles for the overdamped Langevin SDE, its
//! drift-perturbed variant, and the time-reversed diffusion whose drift is
//! read off stored flow snapshots. Each path owns its own RNG stream keyed
//! by (seed, path index), so results are bit-identical no matter how the
//! paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{EntroflowError, Result};
use crate::fokker_planck::{FlowInterpolant, GridDensity};
use crate::perturbation::Perturbation;
use crate::potentials::Potential;
use crate::wasserstein::EdgeCdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// time axis is backward time s = T - t
    Backward,
}

/// A simulated ensemble, positions recorded at the times in `t_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub t_grid: Vec<f64>,
    /// row-major: positions[path * t_grid.len() + k]
    pub positions: Vec<f64>,
    pub seed: u64,
    pub direction: Direction,
}

impl PathEnsemble {
    pub fn position(&self, path: usize, k: usize) -> f64 {
        self.positions[path * self.t_grid.len() + k]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let nt = self.t_grid.len();
        &self.positions[path * nt..(path + 1) * nt]
    }

    /// Marginal sample at time index `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.position(p, k)).collect()
    }

    /// Z-scores of the empirical initial mean and variance against a target
    /// law; both should stay within 4 under correct sampling.
    pub fn initial_law_zscores(&self, target_mean: f64, target_var: f64) -> (f64, f64) {
        let x0 = self.column(0);
        let n = x0.len() as f64;
        let m = crate::stats::mean(&x0);
        let v = crate::stats::variance(&x0);
        let z_mean = (m - target_mean) / (target_var / n).sqrt();
        let z_var = (v - target_var) / (target_var * (2.0 / (n - 1.0)).sqrt());
        (z_mean, z_var)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("path_id,t,x\n");
        for p in 0..self.n_paths {
            for (k, &t) in self.t_grid.iter().enumerate() {
                s.push_str(&format!("{p},{:.17e},{:.17e}\n", t, self.position(p, k)));
            }
        }
        s
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let nt = self.t_grid.len();
        let mut out = Vec::with_capacity(5 + 1 + 24 + 8 * (nt + self.positions.len()));
        out.extend_from_slice(b"ENSF1");
        out.push(match self.direction {
            Direction::Forward => 0,
            Direction::Backward => 1,
        });
        out.extend_from_slice(&(self.n_paths as u64).to_le_bytes());
        out.extend_from_slice(&(nt as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for &t in &self.t_grid {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for &x in &self.positions {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| EntroflowError::Format(format!("ensemble binary: {msg}"));
        if bytes.len() < 30 || &bytes[..5] != b"ENSF1" {
            return Err(fail("bad magic or truncated header"));
        }
        let direction = match bytes[5] {
            0 => Direction::Forward,
            1 => Direction::Backward,
            d => return Err(fail(&format!("unknown direction tag {d}"))),
        };
        let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let n_paths = u64_at(6) as usize;
        let nt = u64_at(14) as usize;
        let seed = u64_at(22);
        let expect = 30 + 8 * (nt + n_paths * nt);
        if bytes.len() != expect {
            return Err(fail(&format!(
                "length {} does not match header ({expect})",
                bytes.len()
            )));
        }
        let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let t_grid: Vec<f64> = (0..nt).map(|k| f64_at(30 + 8 * k)).collect();
        let base = 30 + 8 * nt;
        let positions: Vec<f64> = (0..n_paths * nt).map(|k| f64_at(base + 8 * k)).collect();
        Ok(PathEnsemble {
            n_paths,
            t_grid,
            positions,
            seed,
            direction,
        })
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Inverse-CDF samples from a grid density.
pub fn sample_from_density(density: &GridDensity, n: usize, seed: u64) -> Vec<f64> {
    let cdf = EdgeCdf::from_density(density);
    let mut rng = path_rng(seed, 0);
    (0..n).map(|_| cdf.quantile(rng.gen::<f64>())).collect()
}

fn validate_record_times(t_grid: &[f64], dt_sim: f64) -> Result<()> {
    if t_grid.is_empty() {
        return Err(EntroflowError::BadTimeGrid("empty record grid".into()));
    }
    if dt_sim <= 0.0 {
        return Err(EntroflowError::BadTimeGrid(format!("dt_sim = {dt_sim}")));
    }
    for w in t_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(EntroflowError::BadTimeGrid(format!(
                "record times not increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if dt_sim > w[1] - w[0] + 1e-12 {
            return Err(EntroflowError::BadTimeGrid(format!(
                "dt_sim {dt_sim} exceeds record spacing {}",
                w[1] - w[0]
            )));
        }
    }
    Ok(())
}

/// Runs one path through the recording grid, sub-stepping each interval
/// uniformly with steps no larger than dt_sim.
fn run_path(
    row: &mut [f64],
    mut x: f64,
    t_grid: &[f64],
    dt_sim: f64,
    rng: &mut ChaCha12Rng,
    path: usize,
    mut drift: impl FnMut(f64, f64) -> f64,
) -> Result<()> {
    row[0] = x;
    let mut step_count = 0usize;
    let mut t = t_grid[0];
    for k in 1..t_grid.len() {
        let span = t_grid[k] - t_grid[k - 1];
        let n_sub = ((span / dt_sim - 1e-12).ceil()).max(1.0) as usize;
        let dt = span / n_sub as f64;
        let sqrt_dt = dt.sqrt();
        for _ in 0..n_sub {
            let z: f64 = rng.sample(StandardNormal);
            x += drift(x, t) * dt + sqrt_dt * z;
            t += dt;
            step_count += 1;
            if !x.is_finite() {
                return Err(EntroflowError::SimulationDiverged {
                    path,
                    step: step_count,
                });
            }
        }
        t = t_grid[k];
        row[k] = x;
    }
    Ok(())
}

/// Forward ensemble with drift `-(Psi' + beta)` and unit diffusion,
/// initial positions drawn i.i.d. from `init`.
pub fn simulate_forward(
    pot: &Potential,
    beta: Option<&Perturbation>,
    init: &GridDensity,
    n_paths: usize,
    t_grid: &[f64],
    dt_sim: f64,
    seed: u64,
) -> Result<PathEnsemble> {
    validate_record_times(t_grid, dt_sim)?;
    let cdf = EdgeCdf::from_density(init);
    let nt = t_grid.len();
    let mut positions = vec![0.0; n_paths * nt];
    positions
        .par_chunks_mut(nt)
        .enumerate()
        .map(|(pid, row)| {
            let mut rng = path_rng(seed, pid as u64);
            let x0 = cdf.quantile(rng.gen::<f64>());
            run_path(row, x0, t_grid, dt_sim, &mut rng, pid, |x, _| {
                -pot.dpsi(x) - beta.map_or(0.0, |b| b.beta(x))
            })
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(PathEnsemble {
        n_paths,
        t_grid: t_grid.to_vec(),
        positions,
        seed,
        direction: Direction::Forward,
    })
}

/// Time-reversed ensemble: starts from the terminal law of `flow` and steps
/// in backward time s with drift `+((log p)'(T-s, x) + Psi'(x))`. Positions
/// are recorded at every stored flow time, expressed as backward times.
pub fn simulate_time_reversed(
    flow: &[GridDensity],
    pot: &Potential,
    n_paths: usize,
    dt_sim: f64,
    seed: u64,
) -> Result<PathEnsemble> {
    let interp = FlowInterpolant::new(flow)?;
    let gap = interp.max_gap();
    if gap > 10.0 * dt_sim + 1e-12 {
        return Err(EntroflowError::FlowTooCoarse {
            gap,
            max_gap: 10.0 * dt_sim,
        });
    }
    let big_t = interp.time_range().1;
    let s_grid: Vec<f64> = flow.iter().rev().map(|d| big_t - d.time).collect();
    // flow slices may be spaced closer than dt_sim; run_path caps the step
    // at the slice spacing, so only ordering needs validating here
    validate_record_times(&s_grid, dt_sim.min(s_grid[1] - s_grid[0]))?;
    let terminal = flow.last().unwrap();
    let cdf = EdgeCdf::from_density(terminal);
    let nt = s_grid.len();
    let mut positions = vec![0.0; n_paths * nt];
    positions
        .par_chunks_mut(nt)
        .enumerate()
        .map(|(pid, row)| {
            let mut rng = path_rng(seed, pid as u64);
            let x0 = cdf.quantile(rng.gen::<f64>());
            run_path(row, x0, &s_grid, dt_sim, &mut rng, pid, |x, s| {
                interp.dlog_p_at(big_t - s, x) + pot.dpsi(x)
            })
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(PathEnsemble {
        n_paths,
        t_grid: s_grid,
        positions,
        seed,
        direction: Direction::Backward,
    })
}

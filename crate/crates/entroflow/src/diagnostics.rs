//! Scalar functionals tabulated along a solved density flow: entropy,
//! information, energies, transport distance to the initial slice, and the
//! finite-difference entropy slope next to its dissipation target.

use serde::Serialize;

use crate::error::{EntroflowError, Result};
use crate::fokker_planck::GridDensity;
use crate::functionals::{
    fisher_information, free_energy, gibbs_entropy, internal_energy, relative_entropy,
};
use crate::potentials::GibbsReference;
use crate::wasserstein::w2;

/// Quantile resolution for the per-slice transport distances.
const W2_POINTS: usize = 1 << 18;

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// `H(P_t | Q)`.
    pub entropy: f64,
    /// `I(P_t | Q)`.
    pub information: f64,
    /// Free energy; equals half the relative entropy up to the partition
    /// constant.
    pub free_energy: f64,
    /// `∫ Psi p`.
    pub internal_energy: f64,
    /// `-∫ p log p`.
    pub gibbs_entropy: f64,
    pub w2_to_initial: f64,
    /// Finite-difference `dH/dt`: centered in the interior, one-sided at the
    /// two ends.
    pub dh_dt: f64,
    /// `-I/2`, the dissipation identity's value for `dH/dt`.
    pub target: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSeries {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsSeries {
    pub fn from_flow(flow: &[GridDensity], reference: &GibbsReference) -> Result<Self> {
        if flow.len() < 2 {
            return Err(EntroflowError::BadTimeGrid(
                "diagnostics need at least two flow slices".into(),
            ));
        }
        for w in flow.windows(2) {
            if w[1].time <= w[0].time {
                return Err(EntroflowError::BadTimeGrid(format!(
                    "flow times must increase strictly, got {} then {}",
                    w[0].time, w[1].time
                )));
            }
        }
        let n = flow.len();
        let entropy: Vec<f64> = flow
            .iter()
            .map(|d| relative_entropy(d, reference))
            .collect();
        let rows = (0..n)
            .map(|i| {
                let d = &flow[i];
                let info = fisher_information(d, reference);
                let dh_dt = if i == 0 {
                    (entropy[1] - entropy[0]) / (flow[1].time - flow[0].time)
                } else if i == n - 1 {
                    (entropy[n - 1] - entropy[n - 2]) / (flow[n - 1].time - flow[n - 2].time)
                } else {
                    (entropy[i + 1] - entropy[i - 1]) / (flow[i + 1].time - flow[i - 1].time)
                };
                DiagnosticsRow {
                    t: d.time,
                    entropy: entropy[i],
                    information: info,
                    free_energy: free_energy(d, reference),
                    internal_energy: internal_energy(d, reference),
                    gibbs_entropy: gibbs_entropy(d),
                    w2_to_initial: if i == 0 {
                        0.0
                    } else {
                        w2(&flow[0], d, W2_POINTS)
                    },
                    dh_dt,
                    target: -0.5 * info,
                }
            })
            .collect();
        Ok(DiagnosticsSeries { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,entropy,information,free_energy,internal_energy,gibbs_entropy,w2_to_initial,dh_dt,neg_half_information\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.t,
                r.entropy,
                r.information,
                r.free_energy,
                r.internal_energy,
                r.gibbs_entropy,
                r.w2_to_initial,
                r.dh_dt,
                r.target
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics series serializes")
    }
}

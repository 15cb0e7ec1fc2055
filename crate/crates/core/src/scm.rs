//! Soft committee machine with two hidden units learning a drifting
//! two-unit teacher in the small learning-rate limit.
//!
//! With spherical inputs the projections `(h1, h2, b1, b2)` are zero-mean
//! Gaussian with covariance `[[Q, R], [R^T, I]]`. The error signal is
//! `rho_i = (tau - y) g'(h_i)`, so all averages are sums of
//! `<g'(h_i) v g(w)>` terms evaluated by `gauss::triple_average`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{curvature_average, pair_average, prime_pair_average, Activation};
use crate::state::OrderParameterState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmModel {
    pub activation: Activation,
    /// Drift strength per unit of rescaled time: the per-example strength
    /// divided by `eta`.
    pub delta: f64,
    /// Weight decay per unit of rescaled time, likewise.
    pub gamma: f64,
}

impl ScmModel {
    pub fn new(activation: Activation, delta: f64, gamma: f64) -> Self {
        Self {
            activation,
            delta,
            gamma,
        }
    }

    pub fn stationary(activation: Activation) -> Self {
        Self::new(activation, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// `F_im = <rho_i b_m>` and `G_ik = <rho_i h_k + rho_k h_i>`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScmDrives {
    pub f: [[f64; 2]; 2],
    pub g: [[f64; 2]; 2],
}

/// Covariance of `(h1, h2, b1, b2)` for orthonormal teachers.
pub fn projection_covariance(state: &OrderParameterState) -> [[f64; 4]; 4] {
    let r = &state.r;
    [
        [state.q11, state.q12, r[0][0], r[0][1]],
        [state.q12, state.q22, r[1][0], r[1][1]],
        [r[0][0], r[1][0], 1.0, 0.0],
        [r[0][1], r[1][1], 0.0, 1.0],
    ]
}

/// Relative tolerance of the joint positivity check.
pub const DET_TOL: f64 = 1e-6;

/// Positive semi-definiteness of the projection covariance, via the Schur
/// complement `Q - R R^T` of the identity teacher block.
fn check_consistent(state: &OrderParameterState) -> Result<()> {
    if !state.is_finite() {
        return Err(Error::InconsistentState("non-finite order parameter".into()));
    }
    let r = &state.r;
    let p11 = state.q11 - r[0][0] * r[0][0] - r[0][1] * r[0][1];
    let p22 = state.q22 - r[1][0] * r[1][0] - r[1][1] * r[1][1];
    let p12 = state.q12 - r[0][0] * r[1][0] - r[0][1] * r[1][1];
    // relative tolerance on the determinant: trajectories may approach a
    // rank-deficient complement, where integration error is of this order
    let tol = 1e-10;
    let scale = p11.abs().max(p22.abs()).max(tol);
    if p11 < -tol || p22 < -tol || p12 * p12 - p11 * p22 > tol + DET_TOL * scale * scale {
        return Err(Error::InconsistentState(format!(
            "projection covariance not PSD (Schur complement {p11}, {p12}, {p22})"
        )));
    }
    Ok(())
}

fn wrap(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::InconsistentState(msg),
        other => other,
    }
}

pub fn scm_drives(state: &OrderParameterState, activation: Activation) -> Result<ScmDrives> {
    check_consistent(state)?;
    drives_unchecked(state, activation)
}

/// Closed-form drives without the joint positivity check. The formulas
/// only need the pairwise covariances to be valid, which lets finite
/// differences straddle the boundary of the consistent region.
pub(crate) fn drives_unchecked(state: &OrderParameterState, activation: Activation) -> Result<ScmDrives> {
    let c = projection_covariance(state);
    // pair[i][w] = (<g''(h_i) g(x_w)>, <g'(h_i) g'(x_w)>) for x_w in (h1, h2, b1, b2)
    let mut pair = [[(0.0, 0.0); 4]; 2];
    for i in 0..2 {
        for w in 0..4 {
            let (cuu, cuw, cww) = (c[i][i], c[i][w], c[w][w]);
            pair[i][w] = match activation {
                // analytic as long as the smoothed determinant is positive
                Activation::Erf => {
                    let det = (1.0 + cuu) * (1.0 + cww) - cuw * cuw;
                    if !(det > 0.0) {
                        return Err(Error::InconsistentState(format!("erf determinant {det}")));
                    }
                    let prime = 2.0 / PI / det.sqrt();
                    (-cuw / (1.0 + cuu) * prime, prime)
                }
                Activation::Relu => (
                    curvature_average(activation, cuu, cuw, cww).map_err(wrap)?,
                    prime_pair_average(activation, cuu, cuw, cww).map_err(wrap)?,
                ),
            };
        }
    }
    // <g'(h_i) x_v g(x_w)>
    let triple = |i: usize, v: usize, w: usize| {
        let (curv, prime) = pair[i][w];
        c[i][v] * curv + c[v][w] * prime
    };
    // <rho_i x_v> with targets at indices 2, 3 and students at 0, 1
    let rho = |i: usize, v: usize| triple(i, v, 2) + triple(i, v, 3) - triple(i, v, 0) - triple(i, v, 1);

    let mut d = ScmDrives::default();
    for i in 0..2 {
        for m in 0..2 {
            d.f[i][m] = rho(i, 2 + m);
        }
    }
    let a = [[rho(0, 0), rho(0, 1)], [rho(1, 0), rho(1, 1)]];
    for i in 0..2 {
        for k in 0..2 {
            d.g[i][k] = a[i][k] + a[k][i];
        }
    }
    Ok(d)
}

/// Rescaled-time derivative under teacher drift and weight decay:
/// `dR/da = F - (delta + gamma) R`, `dQ/da = G - 2 gamma Q`.
pub fn scm_ode_rhs(state: &OrderParameterState, model: &ScmModel) -> Result<OrderParameterState> {
    check_consistent(state)?;
    rhs_unchecked(state, model)
}

pub(crate) fn rhs_unchecked(state: &OrderParameterState, model: &ScmModel) -> Result<OrderParameterState> {
    let d = drives_unchecked(state, model.activation)?;
    let shrink_r = model.delta + model.gamma;
    let mut out = OrderParameterState::zero();
    for i in 0..2 {
        for m in 0..2 {
            out.r[i][m] = d.f[i][m] - shrink_r * state.r[i][m];
        }
    }
    out.q11 = d.g[0][0] - 2.0 * model.gamma * state.q11;
    out.q12 = d.g[0][1] - 2.0 * model.gamma * state.q12;
    out.q22 = d.g[1][1] - 2.0 * model.gamma * state.q22;
    Ok(out)
}

/// Generalization error `1/2 <(y - tau)^2>` for orthonormal teachers.
pub fn eps_g_scm(state: &OrderParameterState, activation: Activation) -> Result<f64> {
    let c = projection_covariance(state);
    let mut total = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let sign = if (a < 2) == (b < 2) { 1.0 } else { -1.0 };
            total += sign * pair_average(activation, c[a][a], c[a][b], c[b][b])?;
        }
    }
    // slightly inconsistent states near perfect learning give tiny negatives
    Ok((0.5 * total).max(0.0))
}

/// Initial specialization `R11 = R22` used to break the student symmetry.
pub const DEFAULT_SPECIALIZATION: f64 = 1e-3;

/// `Q11 = Q22 = 0.5`, `Q12 = 0.49`, `R11 = R22 = specialization`, `R12 = R21 = 0`.
pub fn initial_state(specialization: f64) -> OrderParameterState {
    OrderParameterState::new([[specialization, 0.0], [0.0, specialization]], 0.5, 0.49, 0.5)
}

pub fn specialization(state: &OrderParameterState) -> (f64, f64) {
    state.specialization()
}

//! LVQ1 with two prototypes on a two-cluster Gaussian mixture.
//!
//! Inside cluster `m` the projections `(h1, h2, b1, b2)` are Gaussian with
//! mean `lambda (R_1m, R_2m, delta_1m, delta_2m)` and covariance
//! `v_m [[Q, R], [R^T, I]]`. The winner indicator of prototype 1 is
//! `Theta(x)` with `x = d2 - d1 = Q22 - Q11 + 2 (h1 - h2)`, a scalar Gaussian,
//! so every average entering the ODE is a first moment of the form
//! `<u Theta(+-x)>`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gauss::{cdf, Indicator};
use crate::schedule::{Limit, PriorSchedule};
use crate::state::OrderParameterState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvqModel {
    /// Offset of the cluster centers, `<xi>_m = lambda B_m`.
    pub lambda: f64,
    pub v1: f64,
    pub v2: f64,
    pub eta: f64,
    /// Weight decay rate.
    pub gamma: f64,
    pub schedule: PriorSchedule,
}

impl Default for LvqModel {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            v1: 0.4,
            v2: 0.4,
            eta: 1.0,
            gamma: 0.0,
            schedule: PriorSchedule::default(),
        }
    }
}

impl LvqModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("v1", self.v1),
            ("v2", self.v2),
            ("eta", self.eta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and > 0")));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma = {} must be >= 0", self.gamma)));
        }
        self.schedule.validate()
    }

    pub fn variance(&self, cluster: usize) -> f64 {
        if cluster == 0 {
            self.v1
        } else {
            self.v2
        }
    }
}

/// Cluster-conditional averages of the LVQ1 modulation functions
/// `f_i = Theta(d_other - d_i) Psi(i, sigma)`.
///
/// Indices: `[m]` cluster, `[i]` prototype, `[n]` characteristic vector,
/// `[k]` projection `h_k`; all zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LvqDrives {
    /// `<f_i>_m`
    pub f: [[f64; 2]; 2],
    /// `<b_n f_i>_m` stored as `[m][n][i]`
    pub bf: [[[f64; 2]; 2]; 2],
    /// `<h_k f_i>_m` stored as `[m][k][i]`
    pub hf: [[[f64; 2]; 2]; 2],
    /// `<f_i^2>_m`
    pub f_sq: [[f64; 2]; 2],
    /// `<f_1 f_2>_m`, identically zero
    pub f_cross: [f64; 2],
}

fn prototype_gap(state: &OrderParameterState) -> Result<f64> {
    let gap = state.q11 - 2.0 * state.q12 + state.q22;
    if gap > 0.0 && gap.is_finite() {
        Ok(gap)
    } else {
        Err(Error::DegeneratePrototypes(gap))
    }
}

/// All averages needed by the LVQ1 order-parameter ODE.
pub fn lvq1_drives(state: &OrderParameterState, p1: f64, lambda: f64, v1: f64, v2: f64) -> Result<LvqDrives> {
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(domain(format!("prior p1 = {p1} outside (0, 1)")));
    }
    let gap = match prototype_gap(state) {
        Ok(g) => g,
        Err(Error::DegeneratePrototypes(_)) => return Err(Error::DegenerateIndicator),
        Err(e) => return Err(e),
    };
    let r = &state.r;
    let mut d = LvqDrives::default();
    for m in 0..2 {
        let v = if m == 0 { v1 } else { v2 };
        // x = d2 - d1 decides for prototype 1
        let mu_x = state.q22 - state.q11 + 2.0 * lambda * (r[0][m] - r[1][m]);
        let var_x = 4.0 * v * gap;
        let cov_hx = [2.0 * v * (state.q11 - state.q12), 2.0 * v * (state.q12 - state.q22)];
        let cov_bx = [2.0 * v * (r[0][0] - r[1][0]), 2.0 * v * (r[0][1] - r[1][1])];
        let mu_h = [lambda * r[0][m], lambda * r[1][m]];
        let mu_b = [if m == 0 { lambda } else { 0.0 }, if m == 1 { lambda } else { 0.0 }];
        let winners = [Indicator::new(mu_x, var_x)?, Indicator::new(-mu_x, var_x)?];
        debug_assert!(winners[0].mass + winners[1].mass <= 1.0 + 1e-12);
        for (i, ind) in winners.iter().enumerate() {
            let sign_x = if i == 0 { 1.0 } else { -1.0 };
            let psi = if i == m { 1.0 } else { -1.0 };
            d.f[m][i] = psi * ind.mass;
            d.f_sq[m][i] = ind.mass;
            for n in 0..2 {
                d.bf[m][n][i] = psi * ind.moment(mu_b[n], sign_x * cov_bx[n]);
            }
            for k in 0..2 {
                d.hf[m][k][i] = psi * ind.moment(mu_h[k], sign_x * cov_hx[k]);
            }
        }
        // Theta(x) Theta(-x) = 0 almost surely
        d.f_cross[m] = 0.0;
    }
    Ok(d)
}

/// Time derivative of the order parameters for LVQ1 with learning rate
/// `eta`, weight decay `gamma` and class prior `p1(alpha)`.
pub fn lvq_ode_rhs(state: &OrderParameterState, alpha: f64, model: &LvqModel) -> Result<OrderParameterState> {
    lvq_ode_rhs_limit(state, alpha, Limit::Exact, model)
}

pub fn lvq_ode_rhs_limit(
    state: &OrderParameterState,
    alpha: f64,
    limit: Limit,
    model: &LvqModel,
) -> Result<OrderParameterState> {
    let p1 = model.schedule.prior_at_limit(alpha, limit)?;
    let drives = lvq1_drives(state, p1, model.lambda, model.v1, model.v2)?;
    Ok(assemble(state, &drives, p1, model))
}

fn assemble(state: &OrderParameterState, d: &LvqDrives, p1: f64, model: &LvqModel) -> OrderParameterState {
    let p = [p1, 1.0 - p1];
    let v = [model.v1, model.v2];
    let avg_f = |i: usize| p[0] * d.f[0][i] + p[1] * d.f[1][i];
    let avg_bf = |n: usize, i: usize| p[0] * d.bf[0][n][i] + p[1] * d.bf[1][n][i];
    let avg_hf = |k: usize, i: usize| p[0] * d.hf[0][k][i] + p[1] * d.hf[1][k][i];
    let (eta, gamma) = (model.eta, model.gamma);

    let mut out = OrderParameterState::zero();
    for i in 0..2 {
        for n in 0..2 {
            let f_in = avg_bf(n, i) - state.r[i][n] * avg_f(i);
            out.r[i][n] = eta * f_in - gamma * state.r[i][n];
        }
    }
    let dq = |i: usize, k: usize| {
        let g1 = avg_hf(i, k) + avg_hf(k, i) - state.q(i, k) * (avg_f(i) + avg_f(k));
        let g2 = if i == k {
            (0..2).map(|m| v[m] * p[m] * d.f_sq[m][i]).sum::<f64>()
        } else {
            (0..2).map(|m| v[m] * p[m] * d.f_cross[m]).sum::<f64>()
        };
        eta * g1 + eta * eta * g2 - 2.0 * gamma * state.q(i, k)
    };
    out.q11 = dq(0, 0);
    out.q12 = dq(0, 1);
    out.q22 = dq(1, 1);
    out
}

/// Class-wise misclassification rates `(eps_1, eps_2)`.
///
/// `eps_k = <Theta(d_k - d_other)>_k`; inside cluster `k` the argument has
/// mean `Q_kk - Q_oo - 2 lambda (R_kk - R_ok)` and standard deviation
/// `2 sqrt(v_k) sqrt(Q11 - 2 Q12 + Q22)`.
pub fn class_errors(state: &OrderParameterState, lambda: f64, v1: f64, v2: f64) -> Result<(f64, f64)> {
    let gap = prototype_gap(state)?;
    let eps = |k: usize, v: f64| {
        let o = 1 - k;
        let num = state.q(k, k) - state.q(o, o) - 2.0 * lambda * (state.r[k][k] - state.r[o][k]);
        cdf(num / (2.0 * v.sqrt() * gap.sqrt()))
    };
    Ok((eps(0, v1), eps(1, v2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMeasures {
    pub eps_g: f64,
    pub eps_ref: f64,
    pub eps_track: f64,
}

/// Weighted, class-balanced and tracking errors. `p1_eval` is the current
/// prior, so `eps_g` and `eps_track` coincide.
pub fn error_measures(eps1: f64, eps2: f64, p1_eval: f64) -> Result<ErrorMeasures> {
    for (name, v) in [("eps1", eps1), ("eps2", eps2), ("p1", p1_eval)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let weighted = p1_eval * eps1 + (1.0 - p1_eval) * eps2;
    Ok(ErrorMeasures {
        eps_g: weighted,
        eps_ref: 0.5 * (eps1 + eps2),
        eps_track: weighted,
    })
}

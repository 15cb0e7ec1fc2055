//! Fixed-step RK4 integration of the order-parameter ODEs.
//!
//! Nodes are placed exactly on every sample time and every schedule
//! breakpoint, and each step evaluates the right-hand side with one-sided
//! limits at its ends, so jumps in the prior never fall inside a step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lvq::{class_errors, error_measures, lvq_ode_rhs_limit, LvqModel};
use crate::schedule::Limit;
use crate::scm::{eps_g_scm, scm_ode_rhs, ScmModel};
use crate::state::{OrderParameterState, STATE_DIM, STATE_LABELS};

/// A system of order-parameter ODEs together with its observables.
pub trait Dynamics {
    /// Short human-readable model description stored in trajectory metadata.
    fn descriptor(&self) -> String;

    fn observable_names(&self) -> &'static [&'static str];

    fn rhs(&self, t: f64, limit: Limit, state: &OrderParameterState) -> Result<OrderParameterState>;

    /// Appends one value per entry of `observable_names` to `out`.
    fn observe(&self, t: f64, state: &OrderParameterState, out: &mut Vec<f64>) -> Result<()>;

    /// Times at which the right-hand side is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub const LVQ_OBSERVABLES: [&str; 5] = ["eps_g", "eps1", "eps2", "eps_ref", "eps_track"];
pub const SCM_OBSERVABLES: [&str; 3] = ["eps_g", "S1", "S2"];

impl Dynamics for LvqModel {
    fn descriptor(&self) -> String {
        format!(
            "lvq1 lambda={} v1={} v2={} eta={} gamma={} schedule={:?}",
            self.lambda, self.v1, self.v2, self.eta, self.gamma, self.schedule
        )
    }

    fn observable_names(&self) -> &'static [&'static str] {
        &LVQ_OBSERVABLES
    }

    fn rhs(&self, t: f64, limit: Limit, state: &OrderParameterState) -> Result<OrderParameterState> {
        lvq_ode_rhs_limit(state, t, limit, self)
    }

    fn observe(&self, t: f64, state: &OrderParameterState, out: &mut Vec<f64>) -> Result<()> {
        let (e1, e2) = class_errors(state, self.lambda, self.v1, self.v2)?;
        let m = error_measures(e1, e2, self.schedule.prior_at(t)?)?;
        out.extend_from_slice(&[m.eps_g, e1, e2, m.eps_ref, m.eps_track]);
        Ok(())
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.schedule.breakpoints()
    }
}

impl Dynamics for ScmModel {
    fn descriptor(&self) -> String {
        format!(
            "scm activation={} delta={} gamma={}",
            self.activation, self.delta, self.gamma
        )
    }

    fn observable_names(&self) -> &'static [&'static str] {
        &SCM_OBSERVABLES
    }

    fn rhs(&self, _t: f64, _limit: Limit, state: &OrderParameterState) -> Result<OrderParameterState> {
        scm_ode_rhs(state, self)
    }

    fn observe(&self, _t: f64, state: &OrderParameterState, out: &mut Vec<f64>) -> Result<()> {
        let (s1, s2) = state.specialization();
        out.extend_from_slice(&[eps_g_scm(state, self.activation)?, s1, s2]);
        Ok(())
    }
}

/// Autonomous dynamics given by a closure, without observables.
pub struct Autonomous<F>(pub F);

impl<F> Dynamics for Autonomous<F>
where
    F: Fn(&OrderParameterState) -> Result<OrderParameterState>,
{
    fn descriptor(&self) -> String {
        "autonomous".into()
    }

    fn observable_names(&self) -> &'static [&'static str] {
        &[]
    }

    fn rhs(&self, _t: f64, _limit: Limit, state: &OrderParameterState) -> Result<OrderParameterState> {
        (self.0)(state)
    }

    fn observe(&self, _t: f64, _state: &OrderParameterState, _out: &mut Vec<f64>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub method: Method,
    /// Maximal step size.
    pub step: f64,
    /// Spacing of stored samples.
    pub sample_stride: f64,
    /// Tolerance of the Gram-consistency check applied after every step.
    pub gram_tol: f64,
}

impl IntegratorSettings {
    pub fn new(step: f64, sample_stride: f64) -> Self {
        Self {
            method: Method::Rk4,
            step,
            sample_stride,
            gram_tol: 1e-6,
        }
    }

    /// Defaults for LVQ in units of `alpha`.
    pub fn lvq() -> Self {
        Self::new(0.01, 0.01)
    }

    /// Defaults for the SCM in units of rescaled time.
    pub fn scm() -> Self {
        Self::new(0.001, 0.01)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("step", self.step), ("sample_stride", self.sample_stride)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and > 0")));
            }
        }
        if !(self.gram_tol.is_finite() && self.gram_tol >= 0.0) {
            return Err(Error::Config(format!("gram_tol = {} must be >= 0", self.gram_tol)));
        }
        Ok(())
    }
}

/// Sampled learning curve: times, states, observables and, for averaged
/// simulations, standard errors of every state and observable column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<OrderParameterState>,
    pub observable_names: Vec<String>,
    /// One row per sample, aligned with `observable_names`.
    pub observables: Vec<Vec<f64>>,
    /// One row per sample: the seven state columns then the observables.
    pub sem: Option<Vec<Vec<f64>>>,
    pub model: String,
    pub settings: Option<IntegratorSettings>,
}

impl Trajectory {
    pub fn new(model: String, names: &[&str]) -> Self {
        Self {
            observable_names: names.iter().map(|s| s.to_string()).collect(),
            model,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, state: OrderParameterState, obs: Vec<f64>) {
        self.times.push(t);
        self.states.push(state);
        self.observables.push(obs);
    }

    pub fn observable_index(&self, name: &str) -> Option<usize> {
        self.observable_names.iter().position(|n| n == name)
    }

    /// Column of a state component or observable by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if name == "time" {
            return Some(self.times.clone());
        }
        if let Some(c) = STATE_LABELS.iter().position(|l| *l == name) {
            return Some(self.states.iter().map(|s| s.to_array()[c]).collect());
        }
        let j = self.observable_index(name)?;
        Some(self.observables.iter().map(|row| row[j]).collect())
    }

    pub fn eps_g(&self) -> Option<Vec<f64>> {
        self.column("eps_g")
    }

    /// Standard-error column, when present.
    pub fn sem_column(&self, name: &str) -> Option<Vec<f64>> {
        let sem = self.sem.as_ref()?;
        let j = match STATE_LABELS.iter().position(|l| *l == name) {
            Some(c) => c,
            None => STATE_DIM + self.observable_index(name)?,
        };
        Some(sem.iter().map(|row| row[j]).collect())
    }

    /// Linear interpolation of a named column at time `t`; `None` outside the
    /// sampled range.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let col = self.column(name)?;
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if t < first - 1e-9 || t > last + 1e-9 {
            return None;
        }
        let j = self.times.partition_point(|&x| x < t);
        if j == 0 {
            return Some(col[0]);
        }
        if j == self.times.len() {
            return col.last().copied();
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        Some(col[j - 1] + w * (col[j] - col[j - 1]))
    }

    pub fn last_state(&self) -> Option<&OrderParameterState> {
        self.states.last()
    }

    /// Header names in CSV column order.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["time".to_string()];
        h.extend(STATE_LABELS.iter().map(|s| s.to_string()));
        h.extend(self.observable_names.iter().cloned());
        if self.sem.is_some() {
            h.extend(STATE_LABELS.iter().map(|s| format!("sem_{s}")));
            h.extend(self.observable_names.iter().map(|s| format!("sem_{s}")));
        }
        h
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut r = Vec::with_capacity(1 + STATE_DIM + 2 * self.observable_names.len());
        r.push(self.times[i]);
        r.extend_from_slice(&self.states[i].to_array());
        r.extend_from_slice(&self.observables[i]);
        if let Some(sem) = &self.sem {
            r.extend_from_slice(&sem[i]);
        }
        r
    }
}

fn rk4_step<D: Dynamics + ?Sized>(
    dynamics: &D,
    t: f64,
    h: f64,
    y: &OrderParameterState,
) -> Result<OrderParameterState> {
    let k1 = dynamics.rhs(t, Limit::Right, y)?;
    let k2 = dynamics.rhs(t + 0.5 * h, Limit::Exact, &y.plus(&k1.scaled(0.5 * h)))?;
    let k3 = dynamics.rhs(t + 0.5 * h, Limit::Exact, &y.plus(&k2.scaled(0.5 * h)))?;
    let k4 = dynamics.rhs(t + h, Limit::Left, &y.plus(&k3.scaled(h)))?;
    let incr = k1.plus(&k2.scaled(2.0)).plus(&k3.scaled(2.0)).plus(&k4);
    Ok(y.plus(&incr.scaled(h / 6.0)))
}

/// Sample times `t_start + j * stride` below `t_end`, followed by `t_end`.
fn sample_times(t_start: f64, t_end: f64, stride: f64) -> Vec<f64> {
    let span = t_end - t_start;
    let n = (span / stride * (1.0 - 1e-12)).ceil() as usize;
    let mut out: Vec<f64> = (0..n).map(|j| t_start + j as f64 * stride).collect();
    if out.last().is_none_or(|&last| t_end - last > 1e-9 * stride) {
        out.push(t_end);
    } else if let Some(last) = out.last_mut() {
        *last = t_end;
    }
    out
}

fn diverged(time: f64, reason: String, partial: Trajectory) -> Error {
    Error::IntegrationDiverged {
        time,
        reason,
        partial: Box::new(partial),
    }
}

/// Integrates from `t = 0` to `t_end`.
pub fn integrate<D: Dynamics + ?Sized>(
    dynamics: &D,
    init: &OrderParameterState,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    integrate_from(dynamics, init, 0.0, t_end, settings)
}

/// Integrates from `t_start` to `t_end`, sampling on the grid anchored at
/// `t_start`.
pub fn integrate_from<D: Dynamics + ?Sized>(
    dynamics: &D,
    init: &OrderParameterState,
    t_start: f64,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    if !(t_end > t_start) || !t_end.is_finite() || !(t_start >= 0.0) {
        return Err(Error::Config(format!(
            "integration interval [{t_start}, {t_end}] is empty or invalid"
        )));
    }
    init.validate()?;

    let mut traj = Trajectory::new(dynamics.descriptor(), dynamics.observable_names());
    traj.settings = Some(*settings);

    let mut breaks: Vec<f64> = dynamics
        .breakpoints()
        .into_iter()
        .filter(|&b| b > t_start && b < t_end)
        .collect();
    breaks.sort_by(f64::total_cmp);
    let mut next_break = 0;

    let samples = sample_times(t_start, t_end, settings.sample_stride);
    let mut y = *init;
    let mut t = t_start;

    let record = |traj: &mut Trajectory, t: f64, y: &OrderParameterState| -> Result<()> {
        let mut obs = Vec::with_capacity(traj.observable_names.len());
        dynamics.observe(t, y, &mut obs)?;
        traj.push(t, *y, obs);
        Ok(())
    };
    if let Err(e) = record(&mut traj, t, &y) {
        return Err(diverged(t, e.to_string(), traj));
    }

    for &target in &samples[1..] {
        // hard nodes inside this sample interval
        let mut nodes = Vec::new();
        while next_break < breaks.len() && breaks[next_break] < target {
            if breaks[next_break] > t {
                nodes.push(breaks[next_break]);
            }
            next_break += 1;
        }
        nodes.push(target);

        for &b in &nodes {
            let n = ((b - t) / settings.step * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = (b - t) / n as f64;
            let a = t;
            for k in 0..n {
                let tk = a + k as f64 * h;
                let t_next = if k + 1 == n { b } else { a + (k + 1) as f64 * h };
                match rk4_step(dynamics, tk, t_next - tk, &y) {
                    Ok(next) => y = next,
                    Err(e) => return Err(diverged(tk, e.to_string(), traj)),
                }
                if let Err(e) = y.check_gram(settings.gram_tol) {
                    return Err(diverged(t_next, e.to_string(), traj));
                }
            }
            t = b;
        }
        if let Err(e) = record(&mut traj, t, &y) {
            return Err(diverged(t, e.to_string(), traj));
        }
    }
    Ok(traj)
}

/// Result of integrating towards a stationary state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxed {
    pub time: f64,
    pub state: OrderParameterState,
    /// Norm of the right-hand side at `state`.
    pub residual: f64,
    pub converged: bool,
}

/// Integrates with fixed step `step` until the right-hand-side norm drops
/// below `tol` or `t_max` is reached. The residual is checked every
/// `check_every` units of time.
pub fn integrate_until_stationary<D: Dynamics + ?Sized>(
    dynamics: &D,
    init: &OrderParameterState,
    t_max: f64,
    step: f64,
    tol: f64,
) -> Result<Relaxed> {
    let mut y = *init;
    let mut t = 0.0;
    let check = (1.0 / step).round().max(1.0) as usize;
    let mut k = 0usize;
    loop {
        if k.is_multiple_of(check) {
            let residual = dynamics.rhs(t, Limit::Exact, &y)?.norm();
            if residual < tol || t >= t_max {
                return Ok(Relaxed {
                    time: t,
                    state: y,
                    residual,
                    converged: residual < tol,
                });
            }
        }
        y = rk4_step(dynamics, t, step, &y)?;
        y.check_gram(1e-6)?;
        k += 1;
        t = k as f64 * step;
    }
}

/// Outcome of the plateau detection on a learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlateauOutcome {
    /// Plateau entered at `t0` and left at `t_p`.
    Plateau { t0: f64, t_p: f64 },
    /// The error never came within the band around the plateau level.
    NoPlateau,
    /// The plateau was entered but specialization never built up.
    NoEscape { t0: f64 },
}

impl PlateauOutcome {
    pub fn length(&self) -> Option<f64> {
        match *self {
            PlateauOutcome::Plateau { t0, t_p } => Some(t_p - t0),
            _ => None,
        }
    }
}

pub const PLATEAU_BAND: f64 = 1e-4;
pub const ESCAPE_FRACTION: f64 = 0.2;
/// Final specializations below this count as unspecialized.
pub const MIN_FINAL_SPECIALIZATION: f64 = 1e-6;

fn interpolate(t0: f64, t1: f64, y0: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        t1
    } else {
        t0 + (t1 - t0) * ((level - y0) / (y1 - y0)).clamp(0.0, 1.0)
    }
}

/// Start and end of the plateau: `t0` is the first time `eps_g` lies within
/// `PLATEAU_BAND` of `eps_plateau`, `t_p` the first later time at which
/// every `S_i` reaches `ESCAPE_FRACTION * s_final[i]`. Crossings are located
/// by linear interpolation between samples.
pub fn plateau_bounds(traj: &Trajectory, eps_plateau: f64, s_final: (f64, f64)) -> Result<PlateauOutcome> {
    let missing = |n: &str| Error::Config(format!("trajectory lacks the {n} observable"));
    let eps = traj.eps_g().ok_or_else(|| missing("eps_g"))?;
    let s1 = traj.column("S1").ok_or_else(|| missing("S1"))?;
    let s2 = traj.column("S2").ok_or_else(|| missing("S2"))?;
    let times = &traj.times;

    let inside = |e: f64| (e - eps_plateau).abs() < PLATEAU_BAND;
    let Some(i0) = eps.iter().position(|&e| inside(e)) else {
        return Ok(PlateauOutcome::NoPlateau);
    };
    let t0 = if i0 == 0 {
        times[0]
    } else {
        let prev = eps[i0 - 1];
        let level = if prev > eps_plateau {
            eps_plateau + PLATEAU_BAND
        } else {
            eps_plateau - PLATEAU_BAND
        };
        interpolate(times[i0 - 1], times[i0], prev, eps[i0], level)
    };

    // an unspecialized final state means the plateau is never left
    if s_final.0.max(s_final.1) < MIN_FINAL_SPECIALIZATION {
        return Ok(PlateauOutcome::NoEscape { t0 });
    }
    let thr = [ESCAPE_FRACTION * s_final.0, ESCAPE_FRACTION * s_final.1];
    let reached = |j: usize| s1[j] >= thr[0] && s2[j] >= thr[1];
    let Some(j) = (i0..times.len()).find(|&j| reached(j)) else {
        return Ok(PlateauOutcome::NoEscape { t0 });
    };
    if j == i0 {
        return Ok(PlateauOutcome::Plateau { t0, t_p: t0 });
    }
    let mut t_p = times[j - 1];
    for (s, level) in [(&s1, thr[0]), (&s2, thr[1])] {
        if s[j - 1] < level {
            t_p = t_p.max(interpolate(times[j - 1], times[j], s[j - 1], s[j], level));
        }
    }
    Ok(PlateauOutcome::Plateau { t0, t_p: t_p.max(t0) })
}

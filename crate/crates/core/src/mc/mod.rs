//! Finite-N Monte Carlo simulation of LVQ1 and SCM training.
//!
//! Every run owns its vectors and a ChaCha8 stream `(seed, run index)`, so
//! results do not depend on scheduling. Runs are averaged per sample time;
//! committee-machine runs are first relabelled so that student 1 ends up
//! aligned with teacher 1.

mod train;
mod vectors;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::gauss::Activation;
use crate::lvq::LvqModel;
use crate::ode::{Dynamics, Trajectory};
use crate::schedule::PriorSchedule;
use crate::scm::ScmModel;
use crate::state::{OrderParameterState, STATE_DIM};

pub use train::{sample_input, train_step, Target};
pub use vectors::{drift_teachers, init_vectors, measure, random_frame, DriftBuffer, VectorState};

/// Rescaled time at which committee-machine runs export their state for
/// seeding ODE integrations.
pub const HANDOFF_TIME: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase", deny_unknown_fields)]
pub enum SimSystem {
    Lvq {
        lambda: f64,
        v1: f64,
        v2: f64,
        schedule: PriorSchedule,
    },
    Scm {
        activation: Activation,
        /// Per-step drift: `B_m(mu) . B_m(mu-1) = 1 - delta / N`.
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub system: SimSystem,
    /// Input dimension.
    pub n: usize,
    pub eta: f64,
    /// Per-step weight decay, `w <- (1 - gamma/N) w`.
    pub gamma: f64,
    pub runs: usize,
    /// Number of examples per run.
    pub steps: u64,
    pub seed: u64,
    pub sample_every: u64,
    /// Initial order parameters; defaults to `default_init`.
    #[serde(default)]
    pub init: Option<OrderParameterState>,
    /// Keep every individual run in the output.
    #[serde(default)]
    pub keep_runs: bool,
}

/// Unit-norm prototypes orthogonal to everything for LVQ; `R = 0`,
/// `Q11 = Q22 = 0.5`, `Q12 = 0.49` for the SCM.
pub fn default_init(system: &SimSystem) -> OrderParameterState {
    match system {
        SimSystem::Lvq { .. } => OrderParameterState::new([[0.0; 2]; 2], 1.0, 0.0, 1.0),
        SimSystem::Scm { .. } => OrderParameterState::new([[0.0; 2]; 2], 0.5, 0.49, 0.5),
    }
}

/// ODE model matching a simulation in the thermodynamic limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitModel {
    Lvq(LvqModel),
    Scm(ScmModel),
}

impl LimitModel {
    pub fn as_dynamics(&self) -> &dyn Dynamics {
        match self {
            LimitModel::Lvq(m) => m,
            LimitModel::Scm(m) => m,
        }
    }
}

impl SimConfig {
    /// Committee-machine config from rescaled rates: `delta = eta * delta~`,
    /// `gamma = eta * gamma~`, with `alpha_max` in rescaled time.
    pub fn scm(activation: Activation, n: usize, eta: f64, delta_r: f64, gamma_r: f64, alpha_max: f64) -> Self {
        let per_unit = n as f64 / eta;
        Self {
            system: SimSystem::Scm {
                activation,
                delta: eta * delta_r,
            },
            n,
            eta,
            gamma: eta * gamma_r,
            runs: 10,
            steps: (alpha_max * per_unit).round() as u64,
            seed: 0,
            sample_every: (0.5 * per_unit).round().max(1.0) as u64,
            init: None,
            keep_runs: false,
        }
    }

    /// LVQ config for a model, with `alpha_max` in units of `P / N`.
    pub fn lvq(model: &LvqModel, n: usize, alpha_max: f64) -> Self {
        Self {
            system: SimSystem::Lvq {
                lambda: model.lambda,
                v1: model.v1,
                v2: model.v2,
                schedule: model.schedule,
            },
            n,
            eta: model.eta,
            gamma: model.gamma,
            runs: 100,
            steps: (alpha_max * n as f64).round() as u64,
            seed: 0,
            sample_every: n as u64,
            init: None,
            keep_runs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n < 4 {
            return cfg(format!("n = {} must be at least 4", self.n));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return cfg(format!("eta = {} must be > 0", self.eta));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0 && self.gamma < self.n as f64) {
            return cfg(format!("gamma = {} must lie in [0, N)", self.gamma));
        }
        if self.runs == 0 || self.steps == 0 || self.sample_every == 0 {
            return cfg("runs, steps and sample_every must be at least 1".into());
        }
        match self.system {
            SimSystem::Lvq {
                lambda,
                v1,
                v2,
                schedule,
            } => {
                for (name, v) in [("lambda", lambda), ("v1", v1), ("v2", v2)] {
                    if !(v.is_finite() && v > 0.0) {
                        return cfg(format!("{name} = {v} must be > 0"));
                    }
                }
                schedule.validate()?;
            }
            SimSystem::Scm { delta, .. } => {
                if !(delta.is_finite() && delta >= 0.0 && delta / (self.n as f64) < 1.0) {
                    return cfg(format!("delta = {delta} needs 0 <= delta/N < 1"));
                }
            }
        }
        if let Some(init) = &self.init {
            init.validate()?;
        }
        Ok(())
    }

    /// Learning time per example: `1/N` (LVQ) or `eta/N` (SCM).
    pub fn time_per_step(&self) -> f64 {
        match self.system {
            SimSystem::Lvq { .. } => 1.0 / self.n as f64,
            SimSystem::Scm { .. } => self.eta / self.n as f64,
        }
    }

    pub fn limit_model(&self) -> LimitModel {
        match self.system {
            SimSystem::Lvq {
                lambda,
                v1,
                v2,
                schedule,
            } => LimitModel::Lvq(LvqModel {
                lambda,
                v1,
                v2,
                eta: self.eta,
                gamma: self.gamma,
                schedule,
            }),
            SimSystem::Scm { activation, delta } => {
                LimitModel::Scm(ScmModel::new(activation, delta / self.eta, self.gamma / self.eta))
            }
        }
    }

    /// Step indices at which order parameters are recorded.
    pub fn sample_steps(&self) -> Vec<u64> {
        let mut out: Vec<u64> = (0..=self.steps / self.sample_every)
            .map(|k| k * self.sample_every)
            .collect();
        if *out.last().unwrap() != self.steps {
            out.push(self.steps);
        }
        out
    }
}

/// Averaged simulation result.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub mean: Trajectory,
    pub runs: Option<Vec<Trajectory>>,
    /// Mean committee-machine state at `HANDOFF_TIME`.
    pub handoff: Option<OrderParameterState>,
}

struct RunRecord {
    states: Vec<OrderParameterState>,
    handoff: Option<OrderParameterState>,
}

/// Simulate a single run and return the measured states at `sample_steps`.
fn simulate(config: &SimConfig, run: usize) -> Result<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run as u64);
    let init = config.init.unwrap_or_else(|| default_init(&config.system));
    let mut v = init_vectors(config.n, &init, &mut rng)?;
    let samples = config.sample_steps();
    let dt = config.time_per_step();
    let handoff_step = match config.system {
        SimSystem::Scm { .. } => Some((HANDOFF_TIME / dt).round() as u64),
        SimSystem::Lvq { .. } => None,
    };
    let (schedule, delta) = match config.system {
        SimSystem::Lvq { schedule, .. } => (Some(schedule), 0.0),
        SimSystem::Scm { delta, .. } => (None, delta),
    };

    let mut xi = Vec::with_capacity(config.n);
    let mut buf = DriftBuffer::default();
    let mut states = Vec::with_capacity(samples.len());
    let mut handoff = None;
    let mut next = 0;
    for step in 0..=config.steps {
        if Some(step) == handoff_step {
            handoff = Some(measure(&v));
        }
        if samples.get(next) == Some(&step) {
            let s = measure(&v);
            if !s.is_finite() {
                return Err(Error::NonFinite { run, step });
            }
            states.push(s);
            next += 1;
        }
        if step == config.steps {
            break;
        }
        let p1 = match schedule {
            Some(s) => s.prior_unchecked(step as f64 / config.n as f64, crate::schedule::Limit::Exact),
            None => 0.5,
        };
        let target = sample_input(&config.system, p1, &v, &mut rng, &mut xi);
        train_step(&config.system, &mut v, &xi, target, config.eta, config.gamma);
        drift_teachers(&mut v, delta, &mut rng, &mut buf)?;
    }

    if matches!(config.system, SimSystem::Scm { .. }) {
        let last = *states.last().unwrap();
        if last.canonical() != last {
            states.iter_mut().for_each(|s| *s = s.swap_students());
            handoff = handoff.map(|h| h.swap_students());
        }
    }
    Ok(RunRecord { states, handoff })
}

fn observe_all(dynamics: &dyn Dynamics, times: &[f64], states: &[OrderParameterState]) -> Result<Vec<Vec<f64>>> {
    times
        .iter()
        .zip(states)
        .map(|(&t, s)| {
            let mut obs = Vec::with_capacity(dynamics.observable_names().len());
            dynamics.observe(t, s, &mut obs)?;
            Ok(obs)
        })
        .collect()
}

/// Execute all runs and average them.
pub fn run(config: &SimConfig, execution: Execution) -> Result<SimOutput> {
    config.validate()?;
    let limit = config.limit_model();
    let dynamics = limit.as_dynamics();
    let names = dynamics.observable_names();
    let descriptor = format!(
        "mc n={} runs={} seed={} {}",
        config.n,
        config.runs,
        config.seed,
        dynamics.descriptor()
    );
    let times: Vec<f64> = config
        .sample_steps()
        .iter()
        .map(|&k| k as f64 * config.time_per_step())
        .collect();

    let indices: Vec<usize> = (0..config.runs).collect();
    let records = exec::map(execution, &indices, |&run| simulate(config, run))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    // per run, per sample: seven state components followed by observables
    let width = STATE_DIM + names.len();
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::with_capacity(records.len());
    let mut per_run = Vec::new();
    for rec in &records {
        let obs = observe_all(dynamics, &times, &rec.states)?;
        rows.push(
            rec.states
                .iter()
                .zip(&obs)
                .map(|(s, o)| s.to_array().iter().chain(o).copied().collect())
                .collect(),
        );
        if config.keep_runs {
            let mut t = Trajectory::new(descriptor.clone(), names);
            for ((&time, s), o) in times.iter().zip(&rec.states).zip(obs) {
                t.push(time, *s, o);
            }
            per_run.push(t);
        }
    }

    let runs = rows.len() as f64;
    let mut mean = Trajectory::new(descriptor, names);
    let mut sem = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut mu = vec![0.0; width];
        for r in &rows {
            mu.iter_mut().zip(&r[k]).for_each(|(m, x)| *m += x / runs);
        }
        let se: Vec<f64> = (0..width)
            .map(|j| {
                if rows.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = rows.iter().map(|r| (r[k][j] - mu[j]).powi(2)).sum();
                (ss / (runs - 1.0) / runs).sqrt()
            })
            .collect();
        let state = OrderParameterState::from_array(mu[..STATE_DIM].try_into().unwrap());
        mean.push(t, state, mu[STATE_DIM..].to_vec());
        sem.push(se);
    }
    mean.sem = Some(sem);

    let handoff = if records.iter().all(|r| r.handoff.is_some()) && !records.is_empty() {
        let mut acc = [0.0; STATE_DIM];
        for r in &records {
            let a = r.handoff.unwrap().to_array();
            acc.iter_mut().zip(a).for_each(|(x, y)| *x += y / runs);
        }
        Some(OrderParameterState::from_array(&acc))
    } else {
        None
    };

    Ok(SimOutput {
        mean,
        runs: config.keep_runs.then_some(per_run),
        handoff,
    })
}

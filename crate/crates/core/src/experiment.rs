//! Named scenarios, strict TOML configuration and job orchestration.
//!
//! A configuration describes one model, optionally swept over `delta` or
//! `gamma`, together with integration, simulation and scan settings. Every
//! runner writes its data files and a `manifest.toml` holding the fully
//! resolved configuration, which can be passed back in to repeat the run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::gauss::Activation;
use crate::lvq::LvqModel;
use crate::mc::{self, default_init, SimConfig, SimOutput, HANDOFF_TIME};
use crate::ode::{integrate_from, Dynamics, IntegratorSettings, PlateauOutcome, Trajectory};
use crate::output::{save_table, save_trajectory};
use crate::schedule::PriorSchedule;
use crate::scm::{initial_state, ScmModel, DEFAULT_SPECIALIZATION};
use crate::stability::{self, StabilityReport, SCAN_COLUMNS};
use crate::state::OrderParameterState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Lvq {
        lambda: f64,
        v1: f64,
        v2: f64,
        eta: f64,
        gamma: f64,
        schedule: PriorSchedule,
    },
    /// Rates per unit of rescaled time.
    Scm {
        activation: Activation,
        delta: f64,
        gamma: f64,
    },
}

impl ModelConfig {
    pub fn lvq(model: &LvqModel) -> Self {
        ModelConfig::Lvq {
            lambda: model.lambda,
            v1: model.v1,
            v2: model.v2,
            eta: model.eta,
            gamma: model.gamma,
            schedule: model.schedule,
        }
    }

    pub fn scm(model: &ScmModel) -> Self {
        ModelConfig::Scm {
            activation: model.activation,
            delta: model.delta,
            gamma: model.gamma,
        }
    }

    pub fn as_lvq(&self) -> Option<LvqModel> {
        match *self {
            ModelConfig::Lvq {
                lambda,
                v1,
                v2,
                eta,
                gamma,
                schedule,
            } => Some(LvqModel {
                lambda,
                v1,
                v2,
                eta,
                gamma,
                schedule,
            }),
            ModelConfig::Scm { .. } => None,
        }
    }

    pub fn as_scm(&self) -> Option<ScmModel> {
        match *self {
            ModelConfig::Scm {
                activation,
                delta,
                gamma,
            } => Some(ScmModel::new(activation, delta, gamma)),
            ModelConfig::Lvq { .. } => None,
        }
    }

    fn is_scm(&self) -> bool {
        matches!(self, ModelConfig::Scm { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match (self.as_lvq(), self.as_scm()) {
            (Some(m), _) => m.validate(),
            (_, Some(m)) => m.validate(),
            _ => unreachable!(),
        }
    }

    fn set(&mut self, parameter: &str, value: f64) -> Result<()> {
        match (self, parameter) {
            (ModelConfig::Scm { delta, .. }, "delta") => *delta = value,
            (ModelConfig::Scm { gamma, .. } | ModelConfig::Lvq { gamma, .. }, "gamma") => *gamma = value,
            (m, p) => {
                return Err(Error::Config(format!(
                    "cannot sweep `{p}` for the {} model",
                    if m.is_scm() { "scm" } else { "lvq" }
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_stride: Option<f64>,
    /// Symmetry-breaking `R11 = R22` of the default committee-machine start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<OrderParameterState>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Learning rate of committee-machine simulations; LVQ uses `model.eta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
    /// Spacing of recorded samples in learning time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_stride: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_runs: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Stability scan over the product `deltas x gammas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanLine {
    pub label: String,
    pub deltas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Also measure plateau lengths on ODE learning curves.
    #[serde(default)]
    pub plateau: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub ode: OdeSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scan: Vec<ScanLine>,
}

/// One model instance of a (possibly swept) configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    /// Empty without a sweep, otherwise e.g. `delta_0.01`.
    pub label: String,
    pub model: ModelConfig,
}

impl Job {
    fn file(&self, stem: &str, ext: &str) -> String {
        if self.label.is_empty() {
            format!("{stem}.{ext}")
        } else {
            format!("{stem}_{}.{ext}", self.label)
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} must be finite and > 0")))
    }
}

impl ExperimentConfig {
    /// Fill every unset option with its default.
    pub fn resolve(mut self) -> Result<Self> {
        let scm = self.model.is_scm();
        let ode = &mut self.ode;
        let t_end = *ode.t_end.get_or_insert(300.0);
        ode.step.get_or_insert(if scm {
            IntegratorSettings::scm().step
        } else {
            IntegratorSettings::lvq().step
        });
        ode.sample_stride.get_or_insert(0.01);
        if scm {
            ode.specialization.get_or_insert(DEFAULT_SPECIALIZATION);
        } else if ode.specialization.is_some() {
            return Err(Error::Config("ode.specialization applies to the scm model only".into()));
        }
        let mc = &mut self.mc;
        mc.n.get_or_insert(if scm { 500 } else { 100 });
        if scm {
            mc.eta.get_or_insert(0.05);
        } else if mc.eta.is_some() {
            return Err(Error::Config(
                "mc.eta applies to the scm model; LVQ uses model.eta".into(),
            ));
        }
        mc.runs.get_or_insert(if scm { 10 } else { 100 });
        mc.alpha_max.get_or_insert(t_end);
        mc.sample_stride.get_or_insert(if scm { 0.5 } else { 1.0 });
        mc.keep_runs.get_or_insert(false);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid scenario name `{}`", self.name)));
        }
        self.model.validate()?;
        // TOML integers are signed
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        for (name, v) in [
            ("ode.t_end", self.ode.t_end),
            ("ode.step", self.ode.step),
            ("ode.sample_stride", self.ode.sample_stride),
            ("mc.eta", self.mc.eta),
            ("mc.alpha_max", self.mc.alpha_max),
            ("mc.sample_stride", self.mc.sample_stride),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if let Some(s) = self.ode.specialization {
            if !(s.is_finite() && s.abs() < 0.5) {
                return Err(Error::Config(format!(
                    "ode.specialization = {s} must lie in (-0.5, 0.5)"
                )));
            }
        }
        if let Some(init) = &self.ode.init {
            init.validate()?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values is empty".into()));
            }
            for &v in &sweep.values {
                self.model.clone().set(&sweep.parameter, v)?;
            }
        }
        for line in &self.scan {
            if !self.model.is_scm() {
                return Err(Error::Config("scans need the scm model".into()));
            }
            if line.deltas.is_empty() || line.gammas.is_empty() {
                return Err(Error::Config(format!("scan `{}` has an empty grid", line.label)));
            }
            if line
                .deltas
                .iter()
                .chain(&line.gammas)
                .any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return Err(Error::Config(format!("scan `{}` needs finite values >= 0", line.label)));
            }
        }
        Ok(())
    }

    pub fn jobs(&self) -> Result<Vec<Job>> {
        match &self.sweep {
            None => Ok(vec![Job {
                label: String::new(),
                model: self.model,
            }]),
            Some(sweep) => sweep
                .values
                .iter()
                .map(|&v| {
                    let mut model = self.model;
                    model.set(&sweep.parameter, v)?;
                    Ok(Job {
                        label: format!("{}_{v}", sweep.parameter),
                        model,
                    })
                })
                .collect(),
        }
    }

    pub fn integrator(&self) -> IntegratorSettings {
        IntegratorSettings::new(self.ode.step.unwrap(), self.ode.sample_stride.unwrap())
    }

    /// Initial state of ODE integrations not seeded by a simulation.
    pub fn ode_init(&self) -> OrderParameterState {
        match (&self.ode.init, self.model.is_scm()) {
            (Some(s), _) => *s,
            (None, true) => initial_state(self.ode.specialization.unwrap_or(DEFAULT_SPECIALIZATION)),
            (None, false) => OrderParameterState::new([[0.0; 2]; 2], 1.0, 0.0, 1.0),
        }
    }

    /// Simulation settings for one job.
    pub fn sim_config(&self, job: &Job) -> SimConfig {
        let n = self.mc.n.unwrap();
        let alpha_max = self.mc.alpha_max.unwrap();
        let mut cfg = match (job.model.as_lvq(), job.model.as_scm()) {
            (Some(m), _) => SimConfig::lvq(&m, n, alpha_max),
            (_, Some(m)) => SimConfig::scm(m.activation, n, self.mc.eta.unwrap(), m.delta, m.gamma, alpha_max),
            _ => unreachable!(),
        };
        cfg.runs = self.mc.runs.unwrap();
        cfg.seed = self.seed;
        cfg.sample_every = (self.mc.sample_stride.unwrap() / cfg.time_per_step()).round().max(1.0) as u64;
        cfg.keep_runs = self.mc.keep_runs.unwrap();
        cfg
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

fn dynamics(model: &ModelConfig) -> Box<dyn Dynamics + Send + Sync> {
    match (model.as_lvq(), model.as_scm()) {
        (Some(m), _) => Box::new(m),
        (_, Some(m)) => Box::new(m),
        _ => unreachable!(),
    }
}

fn scm_config(name: &str, activation: Activation, delta: f64, gamma: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seed: 0,
        model: ModelConfig::Scm {
            activation,
            delta,
            gamma,
        },
        ode: OdeSection::default(),
        mc: McSection::default(),
        sweep: None,
        scan: Vec::new(),
    }
}

fn lvq_config(name: &str, schedule: PriorSchedule, t_end: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seed: 0,
        model: ModelConfig::lvq(&LvqModel {
            schedule,
            ..LvqModel::default()
        }),
        ode: OdeSection {
            t_end: Some(t_end),
            ..Default::default()
        },
        mc: McSection::default(),
        sweep: None,
        scan: Vec::new(),
    }
}

fn grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
        .collect()
}

/// Preset names with one-line descriptions.
pub const PRESETS: [(&str, &str); 8] = [
    ("fig1", "LVQ1, linear prior ramp alpha_o=20, alpha_end=200, p_max=0.8"),
    ("fig1-alt", "LVQ1, linear prior ramp with alpha_o=25"),
    ("fig2", "LVQ1, sudden prior switch at alpha_o=100, p_max=0.75"),
    ("fig3", "LVQ1, oscillating prior T=50, p_max=0.8"),
    ("fig4a", "Erf SCM learning curves, delta in {0, 0.01, 0.02, 0.05}"),
    ("fig4b", "ReLU SCM learning curves, delta in {0, 0.05, 0.1, 0.3}"),
    ("fig5", "Erf SCM plateau/final error and plateau length scans"),
    ("fig6", "ReLU SCM plateau/final error and plateau length scans"),
];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let linear = |alpha_o| PriorSchedule::Linear {
        alpha_o,
        alpha_end: 200.0,
        p_max: 0.8,
    };
    let cfg = match name {
        "fig1" => lvq_config(name, linear(20.0), 300.0),
        "fig1-alt" => lvq_config(name, linear(25.0), 300.0),
        "fig2" => lvq_config(
            name,
            PriorSchedule::Sudden {
                alpha_o: 100.0,
                p_max: 0.75,
            },
            200.0,
        ),
        "fig3" => lvq_config(
            name,
            PriorSchedule::Oscillating {
                period: 50.0,
                p_max: 0.8,
            },
            200.0,
        ),
        "fig4a" | "fig4b" => {
            let (act, deltas, t_end) = if name == "fig4a" {
                (Activation::Erf, vec![0.0, 0.01, 0.02, 0.05], 300.0)
            } else {
                (Activation::Relu, vec![0.0, 0.05, 0.1, 0.3], 100.0)
            };
            let mut c = scm_config(name, act, 0.0, 0.0);
            c.ode.t_end = Some(t_end);
            c.sweep = Some(Sweep {
                parameter: "delta".into(),
                values: deltas,
            });
            c
        }
        "fig5" | "fig6" => {
            let (act, delta, drift, decay, horizon) = if name == "fig5" {
                (Activation::Erf, 0.03, grid(0.0, 0.1, 41), grid(0.0, 0.04, 41), 3000.0)
            } else {
                (Activation::Relu, 0.2, grid(0.0, 0.3, 31), grid(0.0, 1.4, 29), 1000.0)
            };
            let mut c = scm_config(name, act, delta, 0.0);
            c.ode.t_end = Some(horizon);
            c.ode.step = Some(0.01);
            c.ode.sample_stride = Some(0.05);
            c.scan = vec![
                ScanLine {
                    label: "drift".into(),
                    deltas: drift,
                    gammas: vec![0.0],
                    plateau: true,
                },
                ScanLine {
                    label: "decay".into(),
                    deltas: vec![delta],
                    gammas: decay,
                    plateau: true,
                },
            ];
            c
        }
        _ => return None,
    };
    Some(cfg)
}

fn available() -> String {
    PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
}

/// Load a preset by name or a TOML file by path.
pub fn load(spec: &str) -> Result<ExperimentConfig> {
    if let Some(cfg) = preset(spec) {
        return Ok(cfg);
    }
    let path = Path::new(spec);
    if path.is_file() {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        return parse(&text);
    }
    Err(Error::Config(format!(
        "unknown scenario `{spec}`; available presets: {}",
        available()
    )))
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Apply `key.path=value` overrides; values are TOML literals, anything
/// unparsable is taken as a string. The result is re-validated strictly.
pub fn apply_overrides(cfg: ExperimentConfig, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut doc = toml::Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    for (key, raw) in overrides {
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("invalid override key `{key}`")));
        }
        let mut node = &mut doc;
        for part in &parts[..parts.len() - 1] {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}` does not name a table entry")))?;
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not name a table entry")))?;
        table.insert(parts[parts.len() - 1].to_string(), parse_literal(raw));
    }
    doc.try_into::<ExperimentConfig>()
        .map_err(|e| Error::Config(format!("invalid override: {e}")))
}

/// Write the manifest: the resolved config preceded by a comment naming the
/// command that produced the directory.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = dir.join("manifest.toml");
    let text = format!(
        "# {} {} {command}\n{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        cfg.to_toml()?
    );
    fs::write(&path, text)?;
    Ok(path)
}

/// Files written and lines to report by a runner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// ODE learning curve of one job from `init` at `t_start`.
pub fn ode_trajectory(
    cfg: &ExperimentConfig,
    job: &Job,
    init: &OrderParameterState,
    t_start: f64,
) -> Result<Trajectory> {
    let dynamics = dynamics(&job.model);
    let settings = cfg.integrator();
    integrate_from(dynamics.as_ref(), init, t_start, cfg.ode.t_end.unwrap(), &settings)
}

pub fn run_ode(cfg: &ExperimentConfig, dir: &Path, execution: Execution) -> Result<RunSummary> {
    let cfg = cfg.clone().resolve()?;
    prepare(dir)?;
    let jobs = cfg.jobs()?;
    let init = cfg.ode_init();
    let trajs = exec::map(execution, &jobs, |job| ode_trajectory(&cfg, job, &init, 0.0));
    let mut summary = RunSummary::default();
    for (job, traj) in jobs.iter().zip(trajs) {
        let traj = traj?;
        let path = dir.join(job.file("ode", "csv"));
        save_trajectory(&path, &traj)?;
        let eps = traj.eps_g().unwrap_or_default();
        summary.lines.push(format!(
            "{}: {} samples, final eps_g = {:.6}",
            job.file("ode", "csv"),
            traj.len(),
            eps.last().copied().unwrap_or(f64::NAN)
        ));
        summary.files.push(path);
    }
    summary.files.push(write_manifest(dir, "ode", &cfg)?);
    Ok(summary)
}

fn save_sim(dir: &Path, job: &Job, out: &SimOutput, summary: &mut RunSummary) -> Result<()> {
    let path = dir.join(job.file("mc", "csv"));
    save_trajectory(&path, &out.mean)?;
    summary.files.push(path);
    if let Some(runs) = &out.runs {
        for (k, t) in runs.iter().enumerate() {
            let stem = format!("mc_run{k:03}");
            let path = dir.join(job.file(&stem, "csv"));
            save_trajectory(&path, t)?;
            summary.files.push(path);
        }
    }
    Ok(())
}

pub fn run_mc(cfg: &ExperimentConfig, dir: &Path, execution: Execution) -> Result<RunSummary> {
    let cfg = cfg.clone().resolve()?;
    prepare(dir)?;
    let mut summary = RunSummary::default();
    for job in cfg.jobs()? {
        let out = mc::run(&cfg.sim_config(&job), execution)?;
        save_sim(dir, &job, &out, &mut summary)?;
        let eps = out.mean.eps_g().unwrap_or_default();
        summary.lines.push(format!(
            "{}: final eps_g = {:.6}",
            job.file("mc", "csv"),
            eps.last().copied().unwrap_or(f64::NAN)
        ));
    }
    summary.files.push(write_manifest(dir, "mc", &cfg)?);
    Ok(summary)
}

/// Simulation and ODE prediction sampled on the simulation times.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// Per observable, per sample.
    pub ode: Vec<Vec<f64>>,
    pub mc: Vec<Vec<f64>>,
    pub sem: Vec<Vec<f64>>,
    /// Interval in which either curve is leaving the plateau.
    pub escape_window: Option<(f64, f64)>,
}

impl Comparison {
    pub fn in_window(&self, t: f64) -> bool {
        self.escape_window.is_some_and(|(a, b)| t >= a && t <= b)
    }

    /// Largest `|mc - ode|` outside the escape window, with its time.
    pub fn max_deviation(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.names.iter().position(|n| n == name)?;
        self.times
            .iter()
            .enumerate()
            .filter(|(_, &t)| !self.in_window(t))
            .map(|(k, &t)| ((self.mc[j][k] - self.ode[j][k]).abs(), t))
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Samples outside the window where `|mc - ode| > max(abs_tol, k_sem * sem)`.
    pub fn violations(&self, name: &str, abs_tol: f64, k_sem: f64) -> Vec<(f64, f64, f64)> {
        let Some(j) = self.names.iter().position(|n| n == name) else {
            return Vec::new();
        };
        (0..self.times.len())
            .filter(|&k| !self.in_window(self.times[k]))
            .filter_map(|k| {
                let d = (self.mc[j][k] - self.ode[j][k]).abs();
                let allowed = abs_tol.max(k_sem * self.sem[j][k]);
                (d > allowed).then_some((self.times[k], d, allowed))
            })
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["time".to_string()];
        for n in &self.names {
            h.extend([
                format!("{n}_ode"),
                format!("{n}_mc"),
                format!("sem_{n}"),
                format!("diff_{n}"),
            ]);
        }
        h.push("escape_window".into());
        h
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.times.len())
            .map(|k| {
                let mut r = vec![self.times[k]];
                for j in 0..self.names.len() {
                    r.extend([
                        self.ode[j][k],
                        self.mc[j][k],
                        self.sem[j][k],
                        self.mc[j][k] - self.ode[j][k],
                    ]);
                }
                r.push(if self.in_window(self.times[k]) { 1.0 } else { 0.0 });
                r
            })
            .collect()
    }
}

/// Fractions of the final specialization that open and close the
/// escape window.
pub const WINDOW_OPEN: f64 = 0.1;
pub const WINDOW_CLOSE: f64 = 0.9;

fn min_specialization(traj: &Trajectory) -> Option<Vec<f64>> {
    let (s1, s2) = (traj.column("S1")?, traj.column("S2")?);
    Some(s1.iter().zip(&s2).map(|(a, b)| a.min(*b)).collect())
}

/// From the first time either curve reaches `WINDOW_OPEN` of the final
/// specialization `s_final` to the last time either curve first reaches
/// `WINDOW_CLOSE` of it (unbounded if one never does).
pub fn escape_window(curves: &[&Trajectory], s_final: f64) -> Option<(f64, f64)> {
    if !(s_final > 0.0) {
        return None;
    }
    let first = |traj: &Trajectory, level: f64| -> Option<f64> {
        let s = min_specialization(traj)?;
        s.iter().position(|&v| v >= level * s_final).map(|k| traj.times[k])
    };
    let open = curves
        .iter()
        .filter_map(|t| first(t, WINDOW_OPEN))
        .min_by(f64::total_cmp)?;
    let close = curves
        .iter()
        .map(|t| first(t, WINDOW_CLOSE).unwrap_or(f64::INFINITY))
        .max_by(f64::total_cmp)
        .unwrap_or(f64::INFINITY);
    Some((open, close))
}

/// Simulate one job and integrate the ODE from the matching start: the
/// simulation's state at `HANDOFF_TIME` for the SCM, the common initial
/// state for LVQ.
pub fn compare_job(
    cfg: &ExperimentConfig,
    job: &Job,
    execution: Execution,
) -> Result<(SimOutput, Trajectory, Comparison)> {
    let sim_cfg = cfg.sim_config(job);
    let sim = mc::run(&sim_cfg, execution)?;
    let (ode, s_final) = match job.model.as_scm() {
        Some(model) => {
            let start = sim
                .handoff
                .ok_or_else(|| Error::Config("simulation too short for the ODE hand-off".into()))?;
            let ode = ode_trajectory(cfg, job, &start, HANDOFF_TIME)?;
            let fin = stability::final_state_error(&model)?;
            let (a, b) = fin.state.specialization();
            (ode, if fin.specialized { a.min(b) } else { 0.0 })
        }
        None => {
            let init = sim_cfg.init.unwrap_or_else(|| default_init(&sim_cfg.system));
            (ode_trajectory(cfg, job, &init, 0.0)?, 0.0)
        }
    };
    let names: Vec<String> = sim.mean.observable_names.clone();
    // the hand-off precedes the first simulation sample after t = 0
    let times: Vec<f64> = sim
        .mean
        .times
        .iter()
        .copied()
        .filter(|&t| ode.value_at("eps_g", t).is_some())
        .collect();
    let offset = sim.mean.times.len() - times.len();
    let mut cmp = Comparison {
        times: times.clone(),
        names: names.clone(),
        ode: Vec::new(),
        mc: Vec::new(),
        sem: Vec::new(),
        escape_window: escape_window(&[&ode, &sim.mean], s_final),
    };
    for name in &names {
        cmp.ode
            .push(times.iter().map(|&t| ode.value_at(name, t).unwrap()).collect());
        cmp.mc.push(sim.mean.column(name).unwrap()[offset..].to_vec());
        cmp.sem.push(sim.mean.sem_column(name).unwrap()[offset..].to_vec());
    }
    Ok((sim, ode, cmp))
}

pub fn run_compare(cfg: &ExperimentConfig, dir: &Path, execution: Execution) -> Result<RunSummary> {
    let cfg = cfg.clone().resolve()?;
    prepare(dir)?;
    let mut summary = RunSummary::default();
    for job in cfg.jobs()? {
        let (sim, ode, cmp) = compare_job(&cfg, &job, execution)?;
        save_sim(dir, &job, &sim, &mut summary)?;
        let path = dir.join(job.file("ode", "csv"));
        save_trajectory(&path, &ode)?;
        summary.files.push(path);
        let path = dir.join(job.file("compare", "csv"));
        save_table(&path, &cmp.header(), &cmp.rows())?;
        summary.files.push(path);
        let (dev, at) = cmp.max_deviation("eps_g").unwrap_or((f64::NAN, f64::NAN));
        let window = match cmp.escape_window {
            Some((a, b)) => format!(", escape window [{a}, {b}]"),
            None => String::new(),
        };
        summary.lines.push(format!(
            "{}: max |eps_g(mc) - eps_g(ode)| = {dev:.5} at t = {at}{window}",
            job.file("compare", "csv")
        ));
    }
    summary.files.push(write_manifest(dir, "compare", &cfg)?);
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct ReportOut {
    activation: Activation,
    delta: f64,
    gamma: f64,
    converged: bool,
    residual_norm: f64,
    eps_plateau: f64,
    lambda_s: f64,
    eps_final: f64,
    fixed_point: OrderParameterState,
    /// `[re, im]` pairs.
    eigenvalues: Vec<[f64; 2]>,
    symmetric_eigenvalues: Vec<[f64; 2]>,
}

impl ReportOut {
    fn new(rep: &StabilityReport, eps_final: f64) -> Self {
        let pairs = |v: &[num_complex::Complex64]| v.iter().map(|z| [z.re, z.im]).collect();
        Self {
            activation: rep.model.activation,
            delta: rep.model.delta,
            gamma: rep.model.gamma,
            converged: rep.converged,
            residual_norm: rep.residual_norm,
            eps_plateau: rep.eps_plateau,
            lambda_s: rep.lambda_s,
            eps_final,
            fixed_point: rep.fixed_point,
            eigenvalues: pairs(&rep.eigenvalues),
            symmetric_eigenvalues: pairs(&rep.symmetric_eigenvalues),
        }
    }
}

fn plateau_length(outcome: &PlateauOutcome) -> f64 {
    match outcome {
        PlateauOutcome::Plateau { t0, t_p } => t_p - t0,
        PlateauOutcome::NoEscape { .. } => f64::INFINITY,
        PlateauOutcome::NoPlateau => f64::NAN,
    }
}

fn require_scm(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    if cfg.model.is_scm() {
        Ok(())
    } else {
        Err(Error::Config(format!("`{command}` needs the scm model")))
    }
}

pub fn run_stability(cfg: &ExperimentConfig, dir: &Path, execution: Execution) -> Result<RunSummary> {
    let cfg = cfg.clone().resolve()?;
    require_scm(&cfg, "stability")?;
    prepare(dir)?;
    let mut summary = RunSummary::default();
    let mut reports = toml::Table::new();
    for job in cfg.jobs()? {
        let model = job.model.as_scm().unwrap();
        let rep = stability::find_symmetric_fixed_point(&model)?;
        let fin = stability::final_state_error_with(&model, &rep)?;
        summary.lines.push(format!(
            "{} delta={} gamma={}: eps_plateau = {:.6}, lambda_s = {:.6e}, eps_final = {:.6}{}",
            model.activation,
            model.delta,
            model.gamma,
            rep.eps_plateau,
            rep.lambda_s,
            fin.eps_g,
            if rep.converged { "" } else { " (not converged)" }
        ));
        let key = if job.label.is_empty() {
            "report".to_string()
        } else {
            job.label.clone()
        };
        let value = toml::Value::try_from(ReportOut::new(&rep, fin.eps_g)).map_err(|e| Error::Config(e.to_string()))?;
        reports.insert(key, value);
    }
    let path = dir.join("stability.toml");
    fs::write(
        &path,
        toml::to_string(&reports).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    summary.files.push(path);

    let act = cfg.as_activation();
    let settings = cfg.integrator();
    let t_end = cfg.ode.t_end.unwrap();
    let init = cfg.ode_init();
    for line in &cfg.scan {
        let points: Vec<(f64, f64)> = line
            .deltas
            .iter()
            .flat_map(|&d| line.gammas.iter().map(move |&g| (d, g)))
            .collect();
        let scan = stability::scan(act, &points, execution)?;
        let lengths: Vec<f64> = if line.plateau {
            exec::map(execution, &points, |&(d, g)| {
                stability::plateau_outcome(&ScmModel::new(act, d, g), &init, t_end, &settings)
                    .map(|o| plateau_length(&o))
            })
            .into_iter()
            .collect::<Result<_>>()?
        } else {
            vec![f64::NAN; points.len()]
        };
        let mut header: Vec<String> = SCAN_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.push("plateau_length".into());
        let rows: Vec<Vec<f64>> = scan
            .iter()
            .zip(&lengths)
            .map(|(p, &l)| p.row().iter().copied().chain([l]).collect())
            .collect();
        let path = dir.join(format!("scan_{}.csv", line.label));
        save_table(&path, &header, &rows)?;
        summary
            .lines
            .push(format!("scan `{}`: {} points", line.label, rows.len()));
        summary.files.push(path);
    }
    summary.files.push(write_manifest(dir, "stability", &cfg)?);
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValues {
    pub activation: Activation,
    /// Weight decay at which `delta_c` was located.
    pub gamma: f64,
    pub delta_c: f64,
    /// Drift at which `gamma_c` was located, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
}

/// `delta_c` at the model's weight decay and, for a drifting model,
/// `gamma_c` at its drift.
pub fn critical_values(model: &ScmModel) -> Result<CriticalValues> {
    let delta_c = stability::critical_drift(model.activation, model.gamma)?;
    let (delta, gamma_c) = if model.delta > 0.0 {
        (
            Some(model.delta),
            Some(stability::critical_decay(model.activation, model.delta)?),
        )
    } else {
        (None, None)
    };
    Ok(CriticalValues {
        activation: model.activation,
        gamma: model.gamma,
        delta_c,
        delta,
        gamma_c,
    })
}

pub fn run_critical(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let cfg = cfg.clone().resolve()?;
    require_scm(&cfg, "critical")?;
    prepare(dir)?;
    let mut summary = RunSummary::default();
    let model = cfg.model.as_scm().unwrap();
    let crit = critical_values(&model)?;
    summary.lines.push(format!(
        "{} gamma={}: delta_c = {:.6}",
        crit.activation, crit.gamma, crit.delta_c
    ));
    if let (Some(d), Some(g)) = (crit.delta, crit.gamma_c) {
        summary
            .lines
            .push(format!("{} delta={d}: gamma_c = {g:.6}", crit.activation));
    }
    let path = dir.join("critical.toml");
    fs::write(&path, toml::to_string(&crit).map_err(|e| Error::Config(e.to_string()))?)?;
    summary.files.push(path);
    summary.files.push(write_manifest(dir, "critical", &cfg)?);
    Ok(summary)
}

impl ExperimentConfig {
    fn as_activation(&self) -> Activation {
        match self.model {
            ModelConfig::Scm { activation, .. } => activation,
            ModelConfig::Lvq { .. } => unreachable!("checked by require_scm"),
        }
    }

    /// Default configuration of the `critical` command.
    pub fn critical_default() -> Self {
        scm_config("critical", Activation::Erf, 0.0, 0.0)
    }
}

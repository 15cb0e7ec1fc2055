//! Time-dependent class prior `p1(alpha)` for virtual drift.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Which one-sided value to use when the schedule jumps exactly at the
/// evaluation time. Integrators ask for `Right` at the start of a step and
/// `Left` at its end so that step-aligned jumps are resolved exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Exact,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PriorSchedule {
    Constant {
        p1: f64,
    },
    /// `1/2` before `alpha_o`, linear ramp to `p_max` at `alpha_end`, then held.
    Linear {
        alpha_o: f64,
        alpha_end: f64,
        p_max: f64,
    },
    /// `1 - p_max` for `alpha <= alpha_o`, `p_max` afterwards.
    Sudden {
        alpha_o: f64,
        p_max: f64,
    },
    /// `1/2 + (p_max - 1/2) cos(2 pi alpha / period)`.
    Oscillating {
        period: f64,
        p_max: f64,
    },
}

impl Default for PriorSchedule {
    fn default() -> Self {
        PriorSchedule::Constant { p1: 0.5 }
    }
}

fn open_unit(p: f64, what: &str) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} = {p} must lie in (0, 1)")))
    }
}

impl PriorSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorSchedule::Constant { p1 } => open_unit(p1, "p1"),
            PriorSchedule::Linear {
                alpha_o,
                alpha_end,
                p_max,
            } => {
                open_unit(p_max, "p_max")?;
                if !(alpha_o >= 0.0 && alpha_end > alpha_o && alpha_end.is_finite()) {
                    return Err(Error::Config(format!(
                        "linear schedule needs alpha_end > alpha_o >= 0 (got {alpha_o}, {alpha_end})"
                    )));
                }
                Ok(())
            }
            PriorSchedule::Sudden { alpha_o, p_max } => {
                open_unit(p_max, "p_max")?;
                if !(alpha_o >= 0.0 && alpha_o.is_finite()) {
                    return Err(Error::Config(format!("alpha_o = {alpha_o} must be >= 0")));
                }
                Ok(())
            }
            PriorSchedule::Oscillating { period, p_max } => {
                open_unit(p_max, "p_max")?;
                // the cosine swings between p_max and 1 - p_max
                if !(period > 0.0 && period.is_finite()) {
                    return Err(Error::Config(format!("period = {period} must be > 0")));
                }
                Ok(())
            }
        }
    }

    /// `p1(alpha)`.
    pub fn prior_at(&self, alpha: f64) -> Result<f64> {
        self.prior_at_limit(alpha, Limit::Exact)
    }

    pub fn prior_at_limit(&self, alpha: f64, limit: Limit) -> Result<f64> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(domain(format!("learning time {alpha} must be finite and >= 0")));
        }
        Ok(self.prior_unchecked(alpha, limit))
    }

    pub(crate) fn prior_unchecked(&self, alpha: f64, limit: Limit) -> f64 {
        match *self {
            PriorSchedule::Constant { p1 } => p1,
            PriorSchedule::Linear {
                alpha_o,
                alpha_end,
                p_max,
            } => {
                if alpha < alpha_o {
                    0.5
                } else if alpha >= alpha_end {
                    p_max
                } else {
                    0.5 + (p_max - 0.5) * (alpha - alpha_o) / (alpha_end - alpha_o)
                }
            }
            PriorSchedule::Sudden { alpha_o, p_max } => {
                let after = match limit {
                    Limit::Right => alpha >= alpha_o,
                    Limit::Exact | Limit::Left => alpha > alpha_o,
                };
                if after {
                    p_max
                } else {
                    1.0 - p_max
                }
            }
            PriorSchedule::Oscillating { period, p_max } => 0.5 + (p_max - 0.5) * (2.0 * PI * alpha / period).cos(),
        }
    }

    /// Times at which `p1` or its derivative is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            PriorSchedule::Constant { .. } | PriorSchedule::Oscillating { .. } => vec![],
            PriorSchedule::Linear { alpha_o, alpha_end, .. } => vec![alpha_o, alpha_end],
            PriorSchedule::Sudden { alpha_o, .. } => vec![alpha_o],
        }
    }
}

//! Order-parameter dynamics of on-line learning under concept drift.
//!
//! Two model systems are covered: LVQ1 on a two-cluster Gaussian mixture with
//! time-dependent class priors, and a two-unit soft committee machine
//! learning a drifting teacher. For both, the crate integrates the
//! thermodynamic-limit ODEs, simulates finite-size training, and analyses
//! the plateau fixed point of the committee machine.

pub mod error;
pub mod exec;
pub mod experiment;
pub mod gauss;
pub mod lvq;
pub mod mc;
pub mod ode;
pub mod output;
pub mod quadrature;
pub mod schedule;
pub mod scm;
pub mod stability;
pub mod state;

pub use error::{Error, Result};
pub use gauss::Activation;
pub use lvq::LvqModel;
pub use ode::{integrate, integrate_from, Dynamics, IntegratorSettings, Trajectory};
pub use schedule::PriorSchedule;
pub use scm::ScmModel;
pub use state::OrderParameterState;

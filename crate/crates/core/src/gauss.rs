//! Closed-form expectations over low-dimensional correlated Gaussians.
//!
//! Everything the ODE right-hand sides and the generalization errors need
//! reduces to a handful of identities:
//!
//! * `<g(u) g(v)>` for a zero-mean pair (`pair_average`),
//! * `<g'(u) g'(w)>` and `<g''(u) g(w)>` (`prime_pair_average`,
//!   `curvature_average`), which combine through Gaussian integration by
//!   parts into the three-variable averages `<g'(u) v g(w)>`
//!   (`triple_average`),
//! * `<(a.z + a0) Theta(b.z + b0)>` for a general Gaussian `z`
//!   (`heaviside_moment`).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Tolerance for clamping `asin` arguments that drift past +-1 by round-off.
pub const ASIN_CLAMP_TOL: f64 = 1e-9;
/// Radicands within this distance below zero are treated as zero.
pub const RADICAND_TOL: f64 = 1e-12;

/// Hidden-unit transfer function of the soft committee machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `erf(x / sqrt 2)`
    Erf,
    /// `x Theta(x)`
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Erf => "erf",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Erf => libm::erf(x * FRAC_1_SQRT_2),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative; for ReLU `Theta(0) = 0`.
    #[inline]
    pub fn prime(self, x: f64) -> f64 {
        match self {
            Activation::Erf => SQRT_2_OVER_PI * (-0.5 * x * x).exp(),
            Activation::Relu => heaviside(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "erf" => Ok(Activation::Erf),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!(
                "unknown activation '{other}' (expected erf or relu)"
            ))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `Theta(x)` with `Theta(0) = 0`.
#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn cdf(z: f64) -> f64 {
    if z >= 40.0 {
        1.0
    } else if z <= -40.0 {
        0.0
    } else {
        0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `Phi(z)`, the standard normal distribution function.
pub fn std_normal_cdf(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(domain("std_normal_cdf of NaN"));
    }
    if z.is_infinite() {
        return Err(domain(format!("std_normal_cdf of {z}")));
    }
    Ok(cdf(z))
}

pub fn activation(kind: Activation, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("activation of non-finite {x}")));
    }
    Ok(kind.eval(x))
}

pub fn activation_prime(kind: Activation, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("activation derivative of non-finite {x}")));
    }
    Ok(kind.prime(x))
}

fn clamped_asin(arg: f64) -> Result<f64> {
    if !arg.is_finite() || arg.abs() > 1.0 + ASIN_CLAMP_TOL {
        return Err(domain(format!("asin argument {arg} outside [-1, 1]")));
    }
    Ok(arg.clamp(-1.0, 1.0).asin())
}

fn radicand_sqrt(x: f64) -> Result<f64> {
    if x < -RADICAND_TOL {
        return Err(domain(format!("negative radicand {x}")));
    }
    Ok(x.max(0.0).sqrt())
}

fn check_pair(c11: f64, c12: f64, c22: f64) -> Result<()> {
    if !(c11.is_finite() && c12.is_finite() && c22.is_finite()) {
        return Err(domain("non-finite covariance entry"));
    }
    if c11 < -RADICAND_TOL || c22 < -RADICAND_TOL {
        return Err(domain(format!("negative variance ({c11}, {c22})")));
    }
    let scale = c11.abs().max(c22.abs()).max(1.0);
    if c11 * c22 - c12 * c12 < -RADICAND_TOL * scale * scale {
        return Err(domain(format!(
            "covariance ({c11}, {c12}, {c22}) is not positive semi-definite"
        )));
    }
    Ok(())
}

/// `<g(u) g(v)>` for zero-mean jointly Gaussian `u, v` with
/// `Var u = c11`, `Cov(u, v) = c12`, `Var v = c22`.
pub fn pair_average(kind: Activation, c11: f64, c12: f64, c22: f64) -> Result<f64> {
    check_pair(c11, c12, c22)?;
    match kind {
        Activation::Erf => {
            let arg = c12 / ((1.0 + c11) * (1.0 + c22)).sqrt();
            Ok(2.0 / PI * clamped_asin(arg)?)
        }
        Activation::Relu => {
            let prod = c11 * c22;
            if c11 <= 0.0 || c22 <= 0.0 || prod <= f64::MIN_POSITIVE {
                return Ok(0.0);
            }
            let root = radicand_sqrt(prod - c12 * c12)?;
            let angle = clamped_asin(c12 / prod.sqrt())?;
            Ok(c12 / 4.0 + (root + c12 * angle) / (2.0 * PI))
        }
    }
}

/// `<g'(u) g'(w)>` for a zero-mean pair.
pub fn prime_pair_average(kind: Activation, cuu: f64, cuw: f64, cww: f64) -> Result<f64> {
    check_pair(cuu, cuw, cww)?;
    match kind {
        Activation::Erf => {
            let det = (1.0 + cuu) * (1.0 + cww) - cuw * cuw;
            Ok(2.0 / PI / det.sqrt())
        }
        Activation::Relu => {
            if cuu <= 0.0 || cww <= 0.0 {
                return Err(domain("ReLU derivative average needs positive variances"));
            }
            let angle = clamped_asin(cuw / (cuu * cww).sqrt())?;
            Ok(0.25 + angle / (2.0 * PI))
        }
    }
}

/// `<g''(u) g(w)>` in the distributional sense (`g'' = delta` for ReLU).
pub fn curvature_average(kind: Activation, cuu: f64, cuw: f64, cww: f64) -> Result<f64> {
    check_pair(cuu, cuw, cww)?;
    match kind {
        Activation::Erf => {
            // <g''(u) g(w)> (1 + Cuu) = -Cuw <g'(u) g'(w)>
            Ok(-cuw / (1.0 + cuu) * prime_pair_average(kind, cuu, cuw, cww)?)
        }
        Activation::Relu => {
            if cuu <= 0.0 {
                return Err(domain("ReLU curvature average needs a positive variance"));
            }
            let root = radicand_sqrt(cuu * cww - cuw * cuw)?;
            Ok(root / (2.0 * PI * cuu))
        }
    }
}

/// `<g'(u) v g(w)>` for zero-mean jointly Gaussian `(u, v, w)`.
///
/// Integration by parts in `v` gives
/// `Cov(u, v) <g''(u) g(w)> + Cov(v, w) <g'(u) g'(w)>`; `w` may coincide with
/// `u` (then `cuw = cuu = cww`).
pub fn triple_average(kind: Activation, cuu: f64, cuv: f64, cuw: f64, cvw: f64, cww: f64) -> Result<f64> {
    Ok(cuv * curvature_average(kind, cuu, cuw, cww)? + cvw * prime_pair_average(kind, cuu, cuw, cww)?)
}

/// Mean and covariance of a Gaussian in up to four dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let dim = mean.len();
        if !(1..=4).contains(&dim) {
            return Err(domain(format!("dimension {dim} not in 1..=4")));
        }
        if cov.len() != dim || cov.iter().any(|row| row.len() != dim) {
            return Err(domain("covariance shape does not match the mean"));
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
        Self::from_parts(DVector::from_vec(mean), cov)
    }

    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim || !(1..=4).contains(&dim) {
            return Err(domain("covariance shape does not match the mean"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(domain("non-finite Gaussian parameter"));
        }
        for i in 0..dim {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                    return Err(domain("covariance is not symmetric"));
                }
            }
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 {
            return Err(domain(format!(
                "covariance is not positive semi-definite (eigenvalue {min_eig})"
            )));
        }
        Ok(Self { mean, cov: sym })
    }

    /// Zero-mean Gaussian with the given covariance.
    pub fn centered(cov: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![0.0; cov.len()], cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// `<(a.z + a0) Theta(b.z + b0)>` for `z ~ spec`.
///
/// With `u = a.z + a0` and `x = b.z + b0`:
/// `<u Theta(x)> = mu_u Phi(mu_x / s_x) + Cov(u, x) phi(mu_x / s_x) / s_x`.
pub fn heaviside_moment(a0: f64, a: &[f64], b0: f64, b: &[f64], spec: &GaussianSpec) -> Result<f64> {
    let dim = spec.dim();
    if a.len() != dim || b.len() != dim {
        return Err(domain("coefficient length does not match the Gaussian"));
    }
    let a = DVector::from_column_slice(a);
    let b = DVector::from_column_slice(b);
    let cov_b = spec.cov() * &b;
    let var_x = b.dot(&cov_b);
    if var_x <= 0.0 {
        return Err(Error::DegenerateIndicator);
    }
    let sd_x = var_x.sqrt();
    let mu_u = a.dot(spec.mean()) + a0;
    let mu_x = b.dot(spec.mean()) + b0;
    let cov_ux = a.dot(&cov_b);
    let t = mu_x / sd_x;
    Ok(mu_u * cdf(t) + cov_ux * std_normal_pdf(t) / sd_x)
}

/// Moments of a scalar affine form `x = b.z + b0` and its covariance with a
/// family of affine forms; shared by `heaviside_moment` callers that need
/// many moments with the same indicator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Indicator {
    /// `Phi(mu_x / s_x)`
    pub mass: f64,
    /// `phi(mu_x / s_x) / s_x`
    pub edge: f64,
}

impl Indicator {
    pub fn new(mu_x: f64, var_x: f64) -> Result<Self> {
        if var_x <= 0.0 || !var_x.is_finite() {
            return Err(Error::DegenerateIndicator);
        }
        let sd = var_x.sqrt();
        let t = mu_x / sd;
        Ok(Self {
            mass: cdf(t),
            edge: std_normal_pdf(t) / sd,
        })
    }

    /// `<u Theta(x)>` given `mu_u` and `Cov(u, x)`.
    #[inline]
    pub fn moment(&self, mu_u: f64, cov_ux: f64) -> f64 {
        mu_u * self.mass + cov_ux * self.edge
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_symmetry_and_limits() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert_eq!(std_normal_cdf(40.0).unwrap(), 1.0);
        assert_eq!(std_normal_cdf(55.0).unwrap(), 1.0);
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        for i in 0..=800 {
            let z = -8.0 + 0.02 * i as f64;
            let s = std_normal_cdf(z).unwrap() + std_normal_cdf(-z).unwrap();
            assert!((s - 1.0).abs() <= 1e-14, "z = {z}");
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(activation(Activation::Erf, 0.0).unwrap(), 0.0);
        assert!((activation_prime(Activation::Erf, 0.0).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert_eq!(activation(Activation::Relu, -2.0).unwrap(), 0.0);
        assert_eq!(activation_prime(Activation::Relu, -2.0).unwrap(), 0.0);
        assert_eq!(activation_prime(Activation::Relu, 0.0).unwrap(), 0.0);
        assert_eq!(activation(Activation::Relu, 1.5).unwrap(), 1.5);
        assert!(activation(Activation::Erf, f64::NAN).is_err());
        assert!("tanh".parse::<Activation>().is_err());
    }

    #[test]
    fn pair_average_constants() {
        assert!((pair_average(Activation::Erf, 1.0, 1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((pair_average(Activation::Relu, 1.0, 0.0, 1.0).unwrap() - 0.5 / PI).abs() < 1e-15);
        assert!((pair_average(Activation::Relu, 1.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pair_average(Activation::Relu, 0.0, 0.0, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn pair_average_rejects_bad_covariances() {
        assert!(pair_average(Activation::Erf, 1.0, 1.5, 1.0).is_err());
        assert!(pair_average(Activation::Relu, -1.0, 0.0, 1.0).is_err());
        // round-off just past the boundary is clamped
        let v = pair_average(Activation::Relu, 1.0, 1.0 + 1e-13, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn heaviside_moment_trivial_cases() {
        let spec = GaussianSpec::centered(vec![
            vec![1.0, 0.3, 0.0, 0.1],
            vec![0.3, 2.0, 0.2, 0.0],
            vec![0.0, 0.2, 1.0, 0.0],
            vec![0.1, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let b = [0.5, -0.2, 1.0, 0.3];
        let m = heaviside_moment(1.0, &[0.0; 4], 0.0, &b, &spec).unwrap();
        assert!((m - 0.5).abs() < 1e-15);

        let unit = GaussianSpec::centered(vec![vec![1.0]]).unwrap();
        let m = heaviside_moment(0.0, &[1.0], 0.0, &[1.0], &unit).unwrap();
        assert!((m - INV_SQRT_2PI).abs() < 1e-15);

        assert!(matches!(
            heaviside_moment(0.0, &[1.0], 0.0, &[0.0], &unit),
            Err(Error::DegenerateIndicator)
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(GaussianSpec::centered(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(GaussianSpec::centered(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(GaussianSpec::new(vec![0.0; 5], vec![vec![0.0; 5]; 5]).is_err());
        // rank deficient is fine
        assert!(GaussianSpec::centered(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).is_ok());
    }
}

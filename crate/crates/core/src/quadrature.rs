//! Numerical Gaussian expectations used as independent oracles.
//!
//! `quad_expect` is a tensorized Gauss-Hermite rule in whitened coordinates;
//! it converges fast for smooth integrands. `split_expect` integrates the
//! conditional chain `x_1, x_2 | x_1, ...` one coordinate at a time and
//! splits each one-dimensional integral at `x_j = 0`, so integrands that are
//! smooth inside each orthant (ReLU units, winner indicators expressed in
//! suitable coordinates) are integrated to near machine precision.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};
use crate::gauss::{std_normal_pdf, GaussianSpec};

/// Oracle order used in tests.
pub const ORACLE_ORDER: usize = 60;
/// Order for runtime fallback paths.
pub const RUNTIME_ORDER: usize = 20;

/// Truncation of the standard normal line used by `split_expect`.
const SPLIT_RANGE: f64 = 9.0;

/// Nodes and weights of the `n`-point Gauss-Hermite rule for the standard
/// normal weight, i.e. `sum_k w_k f(x_k) ~ E f(Z)` with `sum_k w_k = 1`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    // Newton iteration on orthonormal physicists' Hermite polynomials.
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let nodes = x.iter().map(|t| t * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().map(|v| v / PI.sqrt()).collect();
    (nodes, weights)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E f(z)` for `z ~ spec`, tensorized Gauss-Hermite of the given order per
/// dimension after whitening with the symmetric square root of the
/// covariance.
pub fn quad_expect<F>(f: F, spec: &GaussianSpec, order: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let v = quad_expect_many(|z, out| out[0] = f(z), 1, spec, order)?;
    Ok(v[0])
}

/// Vector-valued variant of `quad_expect`; `f` writes `n_out` values.
pub fn quad_expect_many<F>(f: F, n_out: usize, spec: &GaussianSpec, order: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    if order < 2 {
        return Err(domain(format!("quadrature order {order} < 2")));
    }
    let root = symmetric_sqrt(spec.cov())?;
    let dim = spec.dim();
    let (nodes, weights) = gauss_hermite(order);
    let mut acc = vec![0.0; n_out];
    let mut out = vec![0.0; n_out];
    let mut idx = vec![0usize; dim];
    let mut y = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    loop {
        let mut weight = 1.0;
        for j in 0..dim {
            y[j] = nodes[idx[j]];
            weight *= weights[idx[j]];
        }
        for r in 0..dim {
            z[r] = spec.mean()[r] + (0..dim).map(|c| root[(r, c)] * y[c]).sum::<f64>();
        }
        f(&z, &mut out);
        for (a, o) in acc.iter_mut().zip(&out) {
            *a += weight * o;
        }
        // odometer increment
        let mut j = 0;
        loop {
            if j == dim {
                return Ok(acc);
            }
            idx[j] += 1;
            if idx[j] < order {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn symmetric_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = cov.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(domain("covariance is not positive semi-definite"));
    }
    let sqrt_l = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&sqrt_l) * v.transpose())
}

/// `E f(x)` for `x ~ spec` by nested conditional quadrature.
///
/// Coordinates flagged in `split` may carry a kink or jump of `f` at
/// `x_j = 0`; each such coordinate is integrated with Gauss-Legendre on both
/// sides of its (conditional) breakpoint over `[-9, 9]` standard deviations.
/// Other coordinates use Gauss-Hermite. The covariance must be positive
/// definite.
pub fn split_expect_many<F>(f: F, n_out: usize, spec: &GaussianSpec, split: &[bool], order: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = spec.dim();
    if split.len() != dim {
        return Err(domain("split mask length does not match the Gaussian"));
    }
    if order < 2 {
        return Err(domain(format!("quadrature order {order} < 2")));
    }
    let chol = spec
        .cov()
        .clone()
        .cholesky()
        .ok_or_else(|| domain("split quadrature needs a positive definite covariance"))?;
    let l = chol.l();
    let rules = Rules {
        hermite: gauss_hermite(order),
        legendre: gauss_legendre(order),
    };
    let mut ctx = Nested {
        f: &f,
        l: &l,
        mean: spec.mean(),
        split,
        rules: &rules,
        x: vec![0.0; dim],
        z: vec![0.0; dim],
        out: vec![0.0; n_out],
        acc: vec![0.0; n_out],
    };
    ctx.level(0, 1.0);
    Ok(ctx.acc)
}

pub fn split_expect<F>(f: F, spec: &GaussianSpec, split: &[bool], order: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    Ok(split_expect_many(|x, out| out[0] = f(x), 1, spec, split, order)?[0])
}

struct Rules {
    hermite: (Vec<f64>, Vec<f64>),
    legendre: (Vec<f64>, Vec<f64>),
}

struct Nested<'a, F> {
    f: &'a F,
    l: &'a DMatrix<f64>,
    mean: &'a DVector<f64>,
    split: &'a [bool],
    rules: &'a Rules,
    x: Vec<f64>,
    z: Vec<f64>,
    out: Vec<f64>,
    acc: Vec<f64>,
}

impl<F: Fn(&[f64], &mut [f64])> Nested<'_, F> {
    fn level(&mut self, j: usize, weight: f64) {
        let dim = self.x.len();
        if j == dim {
            (self.f)(&self.x, &mut self.out);
            for (a, o) in self.acc.iter_mut().zip(&self.out) {
                *a += weight * o;
            }
            return;
        }
        let offset = self.mean[j] + (0..j).map(|k| self.l[(j, k)] * self.z[k]).sum::<f64>();
        let ljj = self.l[(j, j)];
        if self.split[j] {
            let cut = -offset / ljj;
            if cut > -SPLIT_RANGE && cut < SPLIT_RANGE {
                self.interval(j, weight, offset, -SPLIT_RANGE, cut);
                self.interval(j, weight, offset, cut, SPLIT_RANGE);
            } else {
                self.interval(j, weight, offset, -SPLIT_RANGE, SPLIT_RANGE);
            }
        } else {
            let n = self.rules.hermite.0.len();
            for k in 0..n {
                let t = self.rules.hermite.0[k];
                self.z[j] = t;
                self.x[j] = offset + ljj * t;
                self.level(j + 1, weight * self.rules.hermite.1[k]);
            }
        }
    }

    fn interval(&mut self, j: usize, weight: f64, offset: f64, lo: f64, hi: f64) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let ljj = self.l[(j, j)];
        let n = self.rules.legendre.0.len();
        for k in 0..n {
            let t = mid + half * self.rules.legendre.0[k];
            self.z[j] = t;
            self.x[j] = offset + ljj * t;
            let w = half * self.rules.legendre.1[k] * std_normal_pdf(t);
            self.level(j + 1, weight * w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m0 - 1.0).abs() < 1e-14);
        assert!((m2 - 1.0).abs() < 1e-13);
        assert!((m4 - 3.0).abs() < 1e-12);
        let (_, w80) = gauss_hermite(80);
        assert!((w80.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn normalization_and_second_moment() {
        let spec = GaussianSpec::new(
            vec![0.3, -0.1, 0.0],
            vec![vec![1.0, 0.2, 0.1], vec![0.2, 0.5, 0.0], vec![0.1, 0.0, 2.0]],
        )
        .unwrap();
        assert!((quad_expect(|_| 1.0, &spec, 6).unwrap() - 1.0).abs() < 1e-14);
        let centered =
            GaussianSpec::centered(vec![vec![1.0, 0.2, 0.1], vec![0.2, 0.5, 0.0], vec![0.1, 0.0, 2.0]]).unwrap();
        let m = quad_expect(|z| z[0] * z[2], &centered, 4).unwrap();
        assert!((m - 0.1).abs() < 1e-14);
        let s = split_expect(|z| z[0] * z[2], &centered, &[true, false, true], 40).unwrap();
        assert!((s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn split_rule_handles_kinks() {
        // E[max(x,0)] for x ~ N(0, 2) equals sqrt(2 / (2 pi)).
        let spec = GaussianSpec::centered(vec![vec![2.0]]).unwrap();
        let v = split_expect(|x| x[0].max(0.0), &spec, &[true], ORACLE_ORDER).unwrap();
        assert!((v - (1.0 / PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn rank_deficient_whitening() {
        let spec = GaussianSpec::centered(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let v = quad_expect(|z| (z[0] - z[1]).powi(2), &spec, 8).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn low_order_is_rejected() {
        let spec = GaussianSpec::centered(vec![vec![1.0]]).unwrap();
        assert!(quad_expect(|_| 1.0, &spec, 1).is_err());
    }
}

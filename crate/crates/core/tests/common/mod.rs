#![allow(dead_code)]

use driftdyn::gauss::GaussianSpec;
use driftdyn::quadrature::{quad_expect_many, split_expect_many};
use driftdyn::{Activation, OrderParameterState};
use rand::Rng;

/// Valid state with `Q = R R^T + P P^T + floor I`, entries of `R`, `P`
/// uniform in `[-scale, scale]`.
pub fn random_state<R: Rng>(rng: &mut R, scale: f64, floor: f64) -> OrderParameterState {
    let mut u = || rng.random_range(-scale..scale);
    let r = [[u(), u()], [u(), u()]];
    let p = [[u(), u()], [u(), u()]];
    let q = |i: usize, k: usize| {
        r[i][0] * r[k][0] + r[i][1] * r[k][1] + p[i][0] * p[k][0] + p[i][1] * p[k][1] + if i == k { floor } else { 0.0 }
    };
    OrderParameterState::new(r, q(0, 0), q(0, 1), q(1, 1))
}

fn g(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Erf => libm::erf(x / std::f64::consts::SQRT_2),
        Activation::Relu => x.max(0.0),
    }
}

fn g_prime(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Erf => (2.0 / std::f64::consts::PI).sqrt() * (-x * x / 2.0).exp(),
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Numerical `(F, G, eps_g)` of the committee machine at `s`, from the
/// defining averages over `(h1, h2, b1, b2)`.
pub struct ScmOracle {
    pub f: [[f64; 2]; 2],
    pub g: [[f64; 2]; 2],
    pub eps_g: f64,
}

pub fn scm_oracle(s: &OrderParameterState, act: Activation) -> ScmOracle {
    let order = match act {
        Activation::Erf => 32,
        Activation::Relu => 29,
    };
    scm_oracle_order(s, act, order)
}

pub fn scm_oracle_order(s: &OrderParameterState, act: Activation, order: usize) -> ScmOracle {
    let r = &s.r;
    let cov = vec![
        vec![s.q11, s.q12, r[0][0], r[0][1]],
        vec![s.q12, s.q22, r[1][0], r[1][1]],
        vec![r[0][0], r[1][0], 1.0, 0.0],
        vec![r[0][1], r[1][1], 0.0, 1.0],
    ];
    let spec = GaussianSpec::centered(cov).unwrap();
    // outputs: rho_i b_m (4), rho_i h_k (4), squared error (1)
    let integrand = |x: &[f64], out: &mut [f64]| {
        let (h, b) = ([x[0], x[1]], [x[2], x[3]]);
        let err = g(act, b[0]) + g(act, b[1]) - g(act, h[0]) - g(act, h[1]);
        for i in 0..2 {
            let rho = err * g_prime(act, h[i]);
            for m in 0..2 {
                out[2 * i + m] = rho * b[m];
                out[4 + 2 * i + m] = rho * h[m];
            }
        }
        out[8] = 0.5 * err * err;
    };
    let v = match act {
        // smooth integrand: plain tensor Gauss-Hermite
        Activation::Erf => quad_expect_many(integrand, 9, &spec, order).unwrap(),
        // kinks at every coordinate hyperplane
        Activation::Relu => split_expect_many(integrand, 9, &spec, &[true; 4], order).unwrap(),
    };
    let mut o = ScmOracle {
        f: [[0.0; 2]; 2],
        g: [[0.0; 2]; 2],
        eps_g: v[8],
    };
    for i in 0..2 {
        for k in 0..2 {
            o.f[i][k] = v[2 * i + k];
            o.g[i][k] = v[4 + 2 * i + k] + v[4 + 2 * k + i];
        }
    }
    o
}

/// Numerical LVQ1 averages inside cluster `m`, in the layout of
/// `driftdyn::lvq::LvqDrives`: `f[i]`, `bf[n][i]`, `hf[k][i]`, `f_sq[i]`.
pub struct LvqOracle {
    pub f: [f64; 2],
    pub bf: [[f64; 2]; 2],
    pub hf: [[f64; 2]; 2],
    pub f_sq: [f64; 2],
}

/// The winner is decided by `x = d2 - d1 = Q22 - Q11 + 2 h1 - 2 h2`, so the
/// integration runs over `(x, h1, b1, b2)` with `h2 = h1 + (Q22 - Q11 - x)/2`.
pub fn lvq_oracle(s: &OrderParameterState, m: usize, lambda: f64, v: f64) -> LvqOracle {
    use nalgebra::{DMatrix, DVector};
    let r = &s.r;
    let mean_z = DVector::from_vec(vec![
        lambda * r[0][m],
        lambda * r[1][m],
        if m == 0 { lambda } else { 0.0 },
        if m == 1 { lambda } else { 0.0 },
    ]);
    let cov_z = DMatrix::from_row_slice(
        4,
        4,
        &[
            s.q11, s.q12, r[0][0], r[0][1], //
            s.q12, s.q22, r[1][0], r[1][1], //
            r[0][0], r[1][0], 1.0, 0.0, //
            r[0][1], r[1][1], 0.0, 1.0,
        ],
    ) * v;
    // y = T z + c with y = (x, h1, b1, b2)
    let t = DMatrix::from_row_slice(
        4,
        4,
        &[
            2.0, -2.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    );
    let mut mean_y = &t * mean_z;
    mean_y[0] += s.q22 - s.q11;
    let cov_y = &t * cov_z * t.transpose();
    let spec = GaussianSpec::from_parts(mean_y, cov_y).unwrap();
    let (q11, q22) = (s.q11, s.q22);
    let integrand = |y: &[f64], out: &mut [f64]| {
        let (x, h1, b1, b2) = (y[0], y[1], y[2], y[3]);
        let h2 = h1 + (q22 - q11 - x) / 2.0;
        let winner = if x >= 0.0 { 0 } else { 1 };
        let psi = if winner == m { 1.0 } else { -1.0 };
        out.iter_mut().for_each(|o| *o = 0.0);
        out[winner] = psi;
        out[2 + winner] = b1 * psi;
        out[4 + winner] = b2 * psi;
        out[6 + winner] = h1 * psi;
        out[8 + winner] = h2 * psi;
        out[10 + winner] = 1.0;
    };
    let v = split_expect_many(integrand, 12, &spec, &[true, false, false, false], 26).unwrap();
    LvqOracle {
        f: [v[0], v[1]],
        bf: [[v[2], v[3]], [v[4], v[5]]],
        hf: [[v[6], v[7]], [v[8], v[9]]],
        f_sq: [v[10], v[11]],
    }
}

/// `|a - b| <= rel * max(|b|, floor)`.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(floor)
}

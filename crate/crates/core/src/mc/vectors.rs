//! Explicit N-dimensional configurations and teacher drift.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::state::OrderParameterState;

/// Adaptive vectors `w1, w2` and characteristic vectors `B1, B2`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorState {
    pub w: [Vec<f64>; 2],
    pub b: [Vec<f64>; 2],
}

impl VectorState {
    pub fn dim(&self) -> usize {
        self.b[0].len()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Remove the components along the (orthonormal) `basis` and normalize.
fn orthonormalize_against(v: &mut [f64], basis: &[&[f64]]) -> Result<()> {
    // two passes of classical Gram-Schmidt are enough for full precision
    for _ in 0..2 {
        for e in basis {
            let c = dot(v, e);
            v.iter_mut().zip(e.iter()).for_each(|(x, y)| *x -= c * y);
        }
    }
    let norm = dot(v, v).sqrt();
    if !(norm > 1e-8) {
        return Err(Error::Dimension("no orthogonal direction left".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Random orthonormal frame of `k` vectors in `R^n`.
pub fn random_frame<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n < k {
        return Err(Error::Dimension(format!("N = {n} cannot host {k} orthonormal vectors")));
    }
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v = gaussian_vector(n, rng);
        let basis: Vec<&[f64]> = frame.iter().map(|e| e.as_slice()).collect();
        orthonormalize_against(&mut v, &basis)?;
        frame.push(v);
    }
    Ok(frame)
}

/// Build orthonormal `B1, B2` and adaptive vectors realizing `target`
/// exactly: `w_i = sum_m R_im B_m + (L e)_i` where `L L^T = Q - R R^T` and
/// `e3, e4` complete the frame.
pub fn init_vectors<R: Rng>(n: usize, target: &OrderParameterState, rng: &mut R) -> Result<VectorState> {
    if !target.is_finite() {
        return Err(Error::Construction("non-finite target".into()));
    }
    let r = &target.r;
    let p11 = target.q11 - r[0][0] * r[0][0] - r[0][1] * r[0][1];
    let p22 = target.q22 - r[1][0] * r[1][0] - r[1][1] * r[1][1];
    let p12 = target.q12 - r[0][0] * r[1][0] - r[0][1] * r[1][1];
    let tol = 1e-12;
    if p11 < -tol || p22 < -tol || p12 * p12 > p11 * p22 + tol {
        return Err(Error::Construction(format!(
            "target Gram matrix infeasible: Q - R R^T = [[{p11}, {p12}], [{p12}, {p22}]]"
        )));
    }
    let l11 = p11.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { p12 / l11 } else { 0.0 };
    let l22 = (p22 - l21 * l21).max(0.0).sqrt();

    let frame = random_frame(n, 4, rng)?;
    let combine = |c: [f64; 4]| -> Vec<f64> {
        (0..n)
            .map(|j| c[0] * frame[0][j] + c[1] * frame[1][j] + c[2] * frame[2][j] + c[3] * frame[3][j])
            .collect()
    };
    let w1 = combine([r[0][0], r[0][1], l11, 0.0]);
    let w2 = combine([r[1][0], r[1][1], l21, l22]);
    let mut frame = frame.into_iter();
    let b1 = frame.next().unwrap();
    let b2 = frame.next().unwrap();
    Ok(VectorState {
        w: [w1, w2],
        b: [b1, b2],
    })
}

/// All seven inner products.
pub fn measure(state: &VectorState) -> OrderParameterState {
    let (w, b) = (&state.w, &state.b);
    OrderParameterState::new(
        [
            [dot(&w[0], &b[0]), dot(&w[0], &b[1])],
            [dot(&w[1], &b[0]), dot(&w[1], &b[1])],
        ],
        dot(&w[0], &w[0]),
        dot(&w[0], &w[1]),
        dot(&w[1], &w[1]),
    )
}

/// Scratch buffers for `drift_teachers`.
#[derive(Debug, Clone, Default)]
pub struct DriftBuffer {
    zeta: [Vec<f64>; 2],
}

/// One step of teacher drift with per-step overlap `1 - delta / N`.
///
/// Each teacher moves to `(1 - delta/N) B_m + s zeta_m` with `zeta_m` a random
/// unit vector orthogonal to both current teachers, followed by symmetric
/// (Loewdin) re-orthonormalization of the pair.
pub fn drift_teachers<R: Rng>(state: &mut VectorState, delta: f64, rng: &mut R, buf: &mut DriftBuffer) -> Result<()> {
    if delta == 0.0 {
        return Ok(());
    }
    let n = state.dim();
    let keep = 1.0 - delta / n as f64;
    if !(delta > 0.0 && (0.0..1.0).contains(&(delta / n as f64))) {
        return Err(Error::Config(format!("drift delta = {delta} needs 0 <= delta/N < 1")));
    }
    if n < 3 {
        return Err(Error::Dimension(format!(
            "N = {n} leaves no room to drift two teachers"
        )));
    }
    let s = (1.0 - keep * keep).sqrt();
    for m in 0..2 {
        let z = &mut buf.zeta[m];
        z.clear();
        z.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // one projection pass suffices: the residual overlap is at rounding
        // level and is removed by the symmetric re-orthonormalization below
        let (c0, c1) = (dot(z, &state.b[0]), dot(z, &state.b[1]));
        let mut norm2 = 0.0;
        for ((x, b0), b1) in z.iter_mut().zip(&state.b[0]).zip(&state.b[1]) {
            *x -= c0 * b0 + c1 * b1;
            norm2 += *x * *x;
        }
        if !(norm2 > 1e-16) {
            return Err(Error::Dimension("no orthogonal direction left".into()));
        }
        let scale = s / norm2.sqrt();
        let b = &mut state.b[m];
        b.iter_mut().zip(z.iter()).for_each(|(x, y)| *x = keep * *x + scale * y);
    }
    loewdin(&mut state.b);
    Ok(())
}

/// `B <- B G^{-1/2}` with `G` the 2x2 Gram matrix of the pair.
fn loewdin(b: &mut [Vec<f64>; 2]) {
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for (x, y) in b[0].iter().zip(&b[1]) {
        g11 += x * x;
        g12 += x * y;
        g22 += y * y;
    }
    // square root of a 2x2 SPD matrix: (G + sqrt(det) I) / sqrt(tr + 2 sqrt(det))
    let sd = (g11 * g22 - g12 * g12).sqrt();
    let t = (g11 + g22 + 2.0 * sd).sqrt();
    let (a, c, d) = ((g11 + sd) / t, g12 / t, (g22 + sd) / t);
    let det = a * d - c * c;
    let (i11, i12, i22) = (d / det, -c / det, a / det);
    let (b0, b1) = b.split_at_mut(1);
    for (x, y) in b0[0].iter_mut().zip(b1[0].iter_mut()) {
        let (u, v) = (*x, *y);
        *x = i11 * u + i12 * v;
        *y = i12 * u + i22 * v;
    }
}

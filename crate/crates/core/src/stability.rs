//! Symmetric plateau fixed point of the committee-machine ODEs, its
//! linear stability, and the critical drift and decay strengths at which
//! the plateau becomes attracting.
//!
//! The state space splits into the three-dimensional symmetric subspace
//! (`R_im = R`, `Q11 = Q22 = Q`, `Q12 = C`) and its four-dimensional
//! complement. Both are invariant under the permutation symmetries of the
//! dynamics, so the Jacobian at a symmetric point is block diagonal in the
//! basis below, and `lambda_s` is the leading real part of the complement
//! block.

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::gauss::Activation;
use crate::ode::{integrate, integrate_until_stationary, plateau_bounds, IntegratorSettings, PlateauOutcome};
use crate::scm::{eps_g_scm, rhs_unchecked as scm_ode_rhs, ScmModel};
use crate::state::{OrderParameterState, STATE_DIM};

type Mat7 = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Finite-difference step of the full Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Width of the final bisection bracket for critical strengths.
pub const BRACKET_WIDTH: f64 = 1e-4;
const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub model: ScmModel,
    pub fixed_point: OrderParameterState,
    pub eps_plateau: f64,
    /// Spectrum of the full 7x7 Jacobian.
    pub eigenvalues: Vec<Complex64>,
    /// Spectrum restricted to the symmetric subspace.
    pub symmetric_eigenvalues: Vec<Complex64>,
    /// Leading real part among modes outside the symmetric subspace.
    pub lambda_s: f64,
    pub converged: bool,
    pub residual_norm: f64,
}

/// Orthonormal basis adapted to the symmetry: three symmetric directions
/// followed by four complement directions, as columns.
fn symmetry_basis() -> Mat7 {
    let h = 0.5;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    #[rustfmt::skip]
    let cols: [[f64; 7]; 7] = [
        [h, h, h, h, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, r, 0.0, r],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [h, -h, -h, h, 0.0, 0.0, 0.0],
        [h, h, -h, -h, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, r, 0.0, -r],
        [h, -h, h, -h, 0.0, 0.0, 0.0],
    ];
    Mat7::from_fn(|row, col| cols[col][row])
}

fn reduced_rhs(model: &ScmModel, x: &Vector3<f64>) -> Result<Vector3<f64>> {
    let d = scm_ode_rhs(&OrderParameterState::symmetric(x[0], x[1], x[2]), model)?;
    Ok(Vector3::new(d.r[0][0], d.q11, d.q12))
}

/// Newton iteration on `(R, Q, C)` with a central-difference Jacobian and
/// step halving. Returns the final point and residual norm.
fn newton_reduced(model: &ScmModel, start: Vector3<f64>) -> (Vector3<f64>, f64, bool) {
    let mut x = start;
    let Ok(mut f) = reduced_rhs(model, &x) else {
        return (x, f64::INFINITY, false);
    };
    for _ in 0..NEWTON_MAX_ITER {
        if f.norm() < NEWTON_TOL {
            return (x, f.norm(), true);
        }
        let mut jac = Matrix3::zeros();
        let mut ok = true;
        for c in 0..3 {
            let h = 1e-7 * x[c].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            match (reduced_rhs(model, &xp), reduced_rhs(model, &xm)) {
                (Ok(fp), Ok(fm)) => jac.set_column(c, &((fp - fm) / (2.0 * h))),
                _ => ok = false,
            }
        }
        if !ok {
            break;
        }
        let Some(step) = jac.lu().solve(&(-f)) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = x + step * scale;
            if let Ok(ft) = reduced_rhs(model, &trial) {
                if ft.norm() < f.norm() {
                    x = trial;
                    f = ft;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let r = f.norm();
    (x, r, r < NEWTON_TOL * 10.0)
}

/// Newton iteration on the invariant manifold of coinciding students
/// (`C = Q`), where the reduced problem is two-dimensional in `(R, Q)`.
fn newton_coincident(model: &ScmModel, start: Vector3<f64>) -> (Vector3<f64>, f64, bool) {
    let lift = |y: &nalgebra::Vector2<f64>| Vector3::new(y[0], y[1], y[1]);
    let eval = |y: &nalgebra::Vector2<f64>| -> Result<(nalgebra::Vector2<f64>, f64)> {
        let f = reduced_rhs(model, &lift(y))?;
        Ok((nalgebra::Vector2::new(f[0], f[1]), f.norm()))
    };
    let mut y = nalgebra::Vector2::new(start[0], start[1]);
    let Ok((mut f, mut norm)) = eval(&y) else {
        return (lift(&y), f64::INFINITY, false);
    };
    for _ in 0..NEWTON_MAX_ITER {
        if norm < NEWTON_TOL {
            break;
        }
        let mut jac = nalgebra::Matrix2::zeros();
        for c in 0..2 {
            let h = 1e-7 * y[c].abs().max(1.0);
            let (mut yp, mut ym) = (y, y);
            yp[c] += h;
            ym[c] -= h;
            match (eval(&yp), eval(&ym)) {
                (Ok((fp, _)), Ok((fm, _))) => jac.set_column(c, &((fp - fm) / (2.0 * h))),
                _ => return (lift(&y), norm, false),
            }
        }
        let Some(step) = jac.lu().solve(&(-f)) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = y + step * scale;
            if let Ok((ft, nt)) = eval(&trial) {
                if nt < norm {
                    y = trial;
                    f = ft;
                    norm = nt;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (lift(&y), norm, norm < NEWTON_TOL * 10.0)
}

/// Relax within the symmetric subspace from the usual committee-machine
/// initial condition to obtain a Newton starting point.
fn symmetric_seed(model: &ScmModel) -> Result<Vector3<f64>> {
    let h = 0.05;
    let mut x = Vector3::new(0.0, 0.5, 0.49);
    for k in 0..40_000 {
        let k1 = reduced_rhs(model, &x)?;
        if k % 20 == 0 && k1.norm() < 1e-6 {
            break;
        }
        let k2 = reduced_rhs(model, &(x + k1 * (0.5 * h)))?;
        let k3 = reduced_rhs(model, &(x + k2 * (0.5 * h)))?;
        let k4 = reduced_rhs(model, &(x + k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(x)
}

/// Full Jacobian of the 7-dimensional right-hand side by central
/// differences with step `step` in every coordinate.
pub fn jacobian(model: &ScmModel, state: &OrderParameterState, step: f64) -> Result<Mat7> {
    let base = state.to_array();
    let mut jac = Mat7::zeros();
    for c in 0..STATE_DIM {
        let mut p = base;
        let mut m = base;
        p[c] += step;
        m[c] -= step;
        let fp = scm_ode_rhs(&OrderParameterState::from_array(&p), model)?.to_array();
        let fm = scm_ode_rhs(&OrderParameterState::from_array(&m), model)?.to_array();
        for r in 0..STATE_DIM {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * step);
        }
    }
    Ok(jac)
}

fn eigenvalues_of(m: DMatrix<f64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

/// Spectrum of the full Jacobian, its symmetric block and the leading real
/// part of the complement block.
///
/// The coordinate-wise central-difference Jacobian is used whenever every
/// perturbed state is admissible. At plateaus with coinciding students
/// (`Q12 = Q`, which occurs for ReLU under strong weight decay) the ReLU
/// averages are not smooth across the boundary of the consistent region;
/// there the blocks are assembled from derivatives along curves of
/// realizable student vectors instead.
pub fn spectrum(
    model: &ScmModel,
    state: &OrderParameterState,
    step: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>, f64)> {
    let u = symmetry_basis();
    let adapted = match jacobian_checked(model, state, step) {
        Ok(jac) => u.transpose() * jac * u,
        Err(_) => boundary_adapted_jacobian(model, state, step)?,
    };
    let jac = u * adapted * u.transpose();
    let full = eigenvalues_of(DMatrix::from_iterator(7, 7, jac.iter().copied()));
    let sym = eigenvalues_of(DMatrix::from_fn(3, 3, |r, c| adapted[(r, c)]));
    let comp = eigenvalues_of(DMatrix::from_fn(4, 4, |r, c| adapted[(r + 3, c + 3)]));
    let lambda_s = comp.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok((full, sym, lambda_s))
}

/// Coordinate-wise Jacobian that refuses perturbations leaving the
/// consistent region (ReLU only; the Erf averages continue analytically).
fn jacobian_checked(model: &ScmModel, state: &OrderParameterState, step: f64) -> Result<Mat7> {
    if model.activation == Activation::Relu {
        let base = state.to_array();
        for c in 0..STATE_DIM {
            for sign in [-1.0, 1.0] {
                let mut p = base;
                p[c] += sign * step;
                crate::scm::scm_drives(&OrderParameterState::from_array(&p), model.activation)?;
            }
        }
    }
    jacobian(model, state, step)
}

/// Student vectors realizing a symmetric state in the frame
/// `(B1, B2, e3, e4)`.
fn realize(state: &OrderParameterState) -> [[f64; 4]; 2] {
    let r = state.r[0][0];
    let p11 = (state.q11 - 2.0 * r * r).max(0.0);
    let p12 = state.q12 - 2.0 * r * r;
    let a = p11.sqrt();
    let b = if a > 0.0 { p12 / a } else { 0.0 };
    let c = (state.q22 - 2.0 * r * r - b * b).max(0.0).sqrt();
    [[r, r, a, 0.0], [r, r, b, c]]
}

fn overlaps(w: &[[f64; 4]; 2]) -> OrderParameterState {
    let dot = |x: &[f64; 4], y: &[f64; 4]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    OrderParameterState::new(
        [[w[0][0], w[0][1]], [w[1][0], w[1][1]]],
        dot(&w[0], &w[0]),
        dot(&w[0], &w[1]),
        dot(&w[1], &w[1]),
    )
}

/// Derivative of `f` along `h -> f(x + h v)` by central differences, or by a
/// second-order one-sided formula when one side is not admissible.
fn directional<F>(f: F, step: f64) -> Result<[f64; STATE_DIM]>
where
    F: Fn(f64) -> Result<[f64; STATE_DIM]>,
{
    let comb = |terms: &[(f64, &[f64; STATE_DIM])]| {
        let mut out = [0.0; STATE_DIM];
        for (w, v) in terms {
            for (o, x) in out.iter_mut().zip(v.iter()) {
                *o += w * x;
            }
        }
        out
    };
    if let (Ok(p), Ok(m)) = (f(step), f(-step)) {
        return Ok(comb(&[(0.5 / step, &p), (-0.5 / step, &m)]));
    }
    let f0 = f(0.0)?;
    for dir in [1.0, -1.0] {
        if let (Ok(f1), Ok(f2)) = (f(dir * step), f(dir * 2.0 * step)) {
            let s = dir / (2.0 * step);
            return Ok(comb(&[(-3.0 * s, &f0), (4.0 * s, &f1), (-s, &f2)]));
        }
    }
    Err(Error::InconsistentState(
        "no admissible finite-difference stencil".into(),
    ))
}

fn checked_rhs(model: &ScmModel, s: &OrderParameterState) -> Result<[f64; STATE_DIM]> {
    crate::scm::scm_drives(s, model.activation)?;
    Ok(scm_ode_rhs(s, model)?.to_array())
}

fn boundary_adapted_jacobian(model: &ScmModel, state: &OrderParameterState, step: f64) -> Result<Mat7> {
    let u = symmetry_basis();
    let to_adapted = |v: &[f64; STATE_DIM]| u.transpose() * SMatrix::<f64, STATE_DIM, 1>::from_column_slice(v);
    let mut adapted = Mat7::zeros();

    // symmetric block: coordinate directions of (R, Q + C, Q - C) in the
    // symmetric subspace, each provided with its tangent
    let base = state.to_array();
    let sym_dirs: [[f64; STATE_DIM]; 3] = [
        [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 1.0],
    ];
    let mut tangents = Vec::new();
    let mut images = Vec::new();
    for d in &sym_dirs {
        let g = directional(
            |h| {
                let mut p = base;
                for (x, v) in p.iter_mut().zip(d) {
                    *x += h * v;
                }
                checked_rhs(model, &OrderParameterState::from_array(&p))
            },
            step,
        )?;
        tangents.push(to_adapted(d));
        images.push(to_adapted(&g));
    }
    let t = Matrix3::from_fn(|r, c| tangents[c][r]);
    let g = Matrix3::from_fn(|r, c| images[c][r]);
    let t_inv = t
        .try_inverse()
        .ok_or_else(|| Error::InconsistentState("singular symmetric tangents".into()))?;
    let block = g * t_inv;
    for r in 0..3 {
        for c in 0..3 {
            adapted[(r, c)] = block[(r, c)];
        }
    }

    // complement block: antisymmetric and teacher-asymmetric motions of
    // realized student vectors
    let w = realize(state);
    let bm = [0.5, -0.5, 0.0, 0.0];
    let bp = [0.5, 0.5, 0.0, 0.0];
    let half = |v: &[f64; 4], s: f64| v.map(|x| 0.5 * s * x);
    let moves: [([f64; 4], [f64; 4]); 4] = [
        (bm, bm.map(|x| -x)),
        (bp, bp.map(|x| -x)),
        (half(&w[0], 1.0), half(&w[1], -1.0)),
        (bm, bm),
    ];
    let mut tangents = Vec::new();
    let mut images = Vec::new();
    for (e1, e2) in &moves {
        let curve = |h: f64| {
            let mut v = w;
            for k in 0..4 {
                v[0][k] += h * e1[k];
                v[1][k] += h * e2[k];
            }
            overlaps(&v)
        };
        let g = directional(|h| checked_rhs(model, &curve(h)), step)?;
        let tan = directional(|h| Ok(curve(h).to_array()), step)?;
        tangents.push(to_adapted(&tan));
        images.push(to_adapted(&g));
    }
    let t = nalgebra::Matrix4::from_fn(|r, c| tangents[c][r + 3]);
    let g = nalgebra::Matrix4::from_fn(|r, c| images[c][r + 3]);
    let t_inv = t
        .try_inverse()
        .ok_or_else(|| Error::InconsistentState("singular complement tangents".into()))?;
    let block = g * t_inv;
    for r in 0..4 {
        for c in 0..4 {
            adapted[(r + 3, c + 3)] = block[(r, c)];
        }
    }
    Ok(adapted)
}

/// Feasible symmetric point. Coinciding students (`C = Q`) are allowed up
/// to round-off.
fn admissible(x: &Vector3<f64>) -> bool {
    x[1] > 0.0 && x[2] <= x[1] + 1e-9 && x[1] + x[2] >= 4.0 * x[0] * x[0] - 1e-9
}

fn report_at(model: &ScmModel, mut x: Vector3<f64>, residual: f64, converged: bool) -> Result<StabilityReport> {
    x[2] = x[2].min(x[1]);
    let fixed_point = OrderParameterState::symmetric(x[0], x[1], x[2]);
    let full_residual = scm_ode_rhs(&fixed_point, model)?.norm();
    let (eigenvalues, symmetric_eigenvalues, lambda_s) = spectrum(model, &fixed_point, JACOBIAN_STEP)?;
    Ok(StabilityReport {
        model: *model,
        fixed_point,
        eps_plateau: eps_g_scm(&fixed_point, model.activation)?,
        eigenvalues,
        symmetric_eigenvalues,
        lambda_s,
        converged,
        residual_norm: if converged {
            full_residual
        } else {
            residual.max(full_residual)
        },
    })
}

/// Locate the symmetric plateau fixed point and analyse its stability.
pub fn find_symmetric_fixed_point(model: &ScmModel) -> Result<StabilityReport> {
    find_symmetric_fixed_point_near(model, None)
}

/// As `find_symmetric_fixed_point`, starting Newton at `guess` when given.
pub fn find_symmetric_fixed_point_near(
    model: &ScmModel,
    guess: Option<&OrderParameterState>,
) -> Result<StabilityReport> {
    model.validate()?;
    let mut starts = Vec::new();
    if let Some(g) = guess {
        starts.push(Vector3::new(g.r[0][0], g.q11, g.q12));
    }
    starts.push(symmetric_seed(model)?);
    let mut best = (starts[0], f64::INFINITY);
    for s in starts {
        let (x, r, ok) = newton_reduced(model, s);
        if ok && admissible(&x) {
            return report_at(model, x, r, true);
        }
        if r < best.1 {
            best = (x, r);
        }
    }
    // plateau with coinciding students
    if best.0[1] - best.0[2] < 1e-6 * best.0[1].abs().max(1.0) {
        let (x, r, ok) = newton_coincident(model, best.0);
        if ok && admissible(&x) {
            return report_at(model, x, r, true);
        }
    }
    // multi-start fallback
    for &r0 in &[0.05, 0.2, 0.4, 0.6] {
        for &q0 in &[0.1, 0.5, 1.0, 2.0] {
            let (x, r, ok) = newton_reduced(model, Vector3::new(r0, q0, 0.9 * q0));
            if ok && admissible(&x) {
                return report_at(model, x, r, true);
            }
            if r < best.1 {
                best = (x, r);
            }
        }
    }
    report_at(model, best.0, best.1, false)
}

/// Leading specialization eigenvalue at the plateau.
pub fn lambda_s(model: &ScmModel) -> Result<f64> {
    Ok(find_symmetric_fixed_point(model)?.lambda_s)
}

fn converged_report(model: &ScmModel, guess: Option<&OrderParameterState>) -> Result<StabilityReport> {
    let rep = find_symmetric_fixed_point_near(model, guess)?;
    if !rep.converged {
        return Err(Error::InconsistentState(format!(
            "plateau fixed point not found for {:?} (residual {:e})",
            model, rep.residual_norm
        )));
    }
    Ok(rep)
}

/// Bisection on `x` for the sign change of `lambda_s` from positive at `lo`
/// to negative at `hi`. Fixed points are continued from the nearer end.
fn bisect_sign_change(
    make: impl Fn(f64) -> ScmModel,
    mut lo: f64,
    mut hi: f64,
    mut rep_lo: StabilityReport,
) -> Result<f64> {
    while hi - lo > BRACKET_WIDTH {
        let mid = 0.5 * (lo + hi);
        let rep = converged_report(&make(mid), Some(&rep_lo.fixed_point))?;
        if rep.lambda_s > 0.0 {
            lo = mid;
            rep_lo = rep;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Drift strength at which the plateau turns stable, for fixed `gamma`.
/// The initial bracket is `[0, 1]`.
pub fn critical_drift(activation: Activation, gamma: f64) -> Result<f64> {
    let make = |d: f64| ScmModel::new(activation, d, gamma);
    let (lo, hi) = (0.0, 1.0);
    let rep_lo = converged_report(&make(lo), None)?;
    let rep_hi = converged_report(&make(hi), None)?;
    if !(rep_lo.lambda_s > 0.0 && rep_hi.lambda_s < 0.0) {
        return Err(Error::Bracket { lo, hi });
    }
    bisect_sign_change(make, lo, hi, rep_lo)
}

/// Weight decay at which the plateau turns stable, for fixed `delta`. The
/// bracket starts at `[0, 1]` and its upper end is doubled up to 64 until
/// the plateau is stable there.
pub fn critical_decay(activation: Activation, delta: f64) -> Result<f64> {
    let make = |g: f64| ScmModel::new(activation, delta, g);
    let rep_lo = converged_report(&make(0.0), None)?;
    if !(rep_lo.lambda_s > 0.0) {
        return Err(Error::Bracket { lo: 0.0, hi: 0.0 });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut rep_below = rep_lo;
    loop {
        let rep_hi = converged_report(&make(hi), Some(&rep_below.fixed_point))?;
        if rep_hi.lambda_s < 0.0 {
            return bisect_sign_change(make, lo, hi, rep_below);
        }
        if hi >= 64.0 {
            return Err(Error::Bracket { lo: 0.0, hi });
        }
        lo = hi;
        rep_below = rep_hi;
        hi *= 2.0;
    }
}

/// Stationary state reached after leaving the plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalState {
    pub eps_g: f64,
    pub state: OrderParameterState,
    pub residual: f64,
    pub converged: bool,
    /// False when the plateau itself is the final state.
    pub specialized: bool,
}

const FINAL_TOL: f64 = 1e-9;

/// Newton polish of a full 7-dimensional fixed point.
fn polish(model: &ScmModel, start: &OrderParameterState) -> Option<(OrderParameterState, f64)> {
    let mut x = *start;
    let mut f = scm_ode_rhs(&x, model).ok()?;
    for _ in 0..NEWTON_MAX_ITER {
        if f.norm() < NEWTON_TOL {
            break;
        }
        let jac = jacobian(model, &x, 1e-7).ok()?;
        let rhs = SMatrix::<f64, STATE_DIM, 1>::from_column_slice(&f.to_array());
        let step = jac.lu().solve(&(-rhs))?;
        let step = OrderParameterState::from_array(&step.as_slice().try_into().ok()?);
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = x.plus(&step.scaled(scale));
            if let Ok(ft) = scm_ode_rhs(&trial, model) {
                if ft.norm() < f.norm() {
                    x = trial;
                    f = ft;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((x, f.norm()))
}

/// Generalization error of the final state. For a stable plateau this is
/// the plateau error; otherwise the dynamics is relaxed from the fully
/// specialized state `R = Q = I` and the resulting fixed point polished by
/// Newton's method.
pub fn final_state_error(model: &ScmModel) -> Result<FinalState> {
    let plateau = converged_report(model, None)?;
    final_state_error_with(model, &plateau)
}

pub fn final_state_error_with(model: &ScmModel, plateau: &StabilityReport) -> Result<FinalState> {
    if plateau.lambda_s < 0.0 {
        return Ok(FinalState {
            eps_g: plateau.eps_plateau,
            state: plateau.fixed_point,
            residual: plateau.residual_norm,
            converged: plateau.converged,
            specialized: false,
        });
    }
    let relaxed = integrate_until_stationary(model, &OrderParameterState::identity(), 1e5, 0.05, 1e-6)?;
    let (state, residual) = polish(model, &relaxed.state).unwrap_or((relaxed.state, relaxed.residual));
    let (s1, s2) = state.specialization();
    Ok(FinalState {
        eps_g: eps_g_scm(&state, model.activation)?,
        state,
        residual,
        converged: residual < FINAL_TOL,
        specialized: s1.min(s2) > 1e-6,
    })
}

/// Plateau of the learning curve integrated from `init` to `t_end`, with the
/// plateau level and final specialization taken from the fixed-point
/// analysis.
pub fn plateau_outcome(
    model: &ScmModel,
    init: &OrderParameterState,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<PlateauOutcome> {
    let plateau = converged_report(model, None)?;
    let fin = final_state_error_with(model, &plateau)?;
    let traj = integrate(model, init, t_end, settings)?;
    plateau_bounds(&traj, plateau.eps_plateau, fin.state.specialization())
}

/// Interval of drift strengths in which the final state is worse than the
/// plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyWindow {
    pub lower: f64,
    pub upper: f64,
    pub delta_c: f64,
}

/// `eps_final - eps_plateau` as a function of the drift strength.
fn excess_error(activation: Activation, gamma: f64, delta: f64) -> Result<f64> {
    let model = ScmModel::new(activation, delta, gamma);
    let plateau = converged_report(&model, None)?;
    let fin = final_state_error_with(&model, &plateau)?;
    if !fin.converged {
        return Err(Error::InconsistentState(format!(
            "final state not stationary at delta = {delta} (residual {:e})",
            fin.residual
        )));
    }
    Ok(fin.eps_g - plateau.eps_plateau)
}

fn bisect_root(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64> {
    let sign_lo = f_lo > 0.0;
    while hi - lo > BRACKET_WIDTH {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? > 0.0) == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Locate the window of drift strengths below the critical drift in which
/// the specialized final state has a larger error than the plateau. The grid
/// with spacing `spacing` brackets the sign changes, which are then refined
/// by bisection. Returns `None` if the excess error is never positive.
pub fn anomaly_window(
    activation: Activation,
    gamma: f64,
    spacing: f64,
    exec: Execution,
) -> Result<Option<AnomalyWindow>> {
    let delta_c = critical_drift(activation, gamma)?;
    let n = (delta_c / spacing).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 * spacing).filter(|&d| d < delta_c).collect();
    let values: Vec<f64> = exec::map(exec, &grid, |&d| excess_error(activation, gamma, d))
        .into_iter()
        .collect::<Result<_>>()?;
    let f = |d: f64| excess_error(activation, gamma, d);
    let Some(k) = values.iter().position(|&v| v > 0.0) else {
        return Ok(None);
    };
    let lower = if k == 0 {
        grid[0]
    } else {
        bisect_root(f, grid[k - 1], grid[k], values[k - 1])?
    };
    let upper = match (k..values.len()).find(|&j| values[j] <= 0.0) {
        Some(j) => bisect_root(f, grid[j - 1], grid[j], values[j - 1])?,
        None => delta_c,
    };
    Ok(Some(AnomalyWindow { lower, upper, delta_c }))
}

/// One point of a stability scan over `(delta, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub delta: f64,
    pub gamma: f64,
    pub lambda_s: f64,
    pub eps_plateau: f64,
    pub eps_final: f64,
    pub converged: bool,
}

pub const SCAN_COLUMNS: [&str; 6] = ["delta", "gamma", "lambda_s", "eps_plateau", "eps_final", "converged"];

impl ScanPoint {
    pub fn row(&self) -> [f64; 6] {
        [
            self.delta,
            self.gamma,
            self.lambda_s,
            self.eps_plateau,
            self.eps_final,
            if self.converged { 1.0 } else { 0.0 },
        ]
    }
}

/// Plateau and final-state analysis on each grid point.
pub fn scan(activation: Activation, points: &[(f64, f64)], exec: Execution) -> Result<Vec<ScanPoint>> {
    exec::map(exec, points, |&(delta, gamma)| {
        let model = ScmModel::new(activation, delta, gamma);
        let plateau = find_symmetric_fixed_point(&model)?;
        let fin = final_state_error_with(&model, &plateau)?;
        Ok(ScanPoint {
            delta,
            gamma,
            lambda_s: plateau.lambda_s,
            eps_plateau: plateau.eps_plateau,
            eps_final: fin.eps_g,
            converged: plateau.converged && fin.converged,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let u = symmetry_basis();
        assert!((u.transpose() * u - Mat7::identity()).norm() < 1e-15);
    }

    #[test]
    fn stationary_erf_plateau_is_repulsive() {
        let rep = find_symmetric_fixed_point(&ScmModel::stationary(Activation::Erf)).unwrap();
        assert!(rep.converged);
        assert!(rep.residual_norm <= 1e-10);
        assert!(rep.lambda_s > 0.0);
        let fp = rep.fixed_point;
        assert!((fp.r[0][0] - fp.r[0][1]).abs() <= 1e-10 && (fp.r[0][0] - fp.r[1][0]).abs() <= 1e-10);
        assert!(rep.symmetric_eigenvalues.iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn strong_drift_stabilizes_plateau() {
        let rep = find_symmetric_fixed_point(&ScmModel::new(Activation::Erf, 0.1, 0.0)).unwrap();
        assert!(rep.converged && rep.lambda_s < 0.0);
    }

    #[test]
    fn relu_plateau_has_smaller_cross_overlap() {
        let rep = find_symmetric_fixed_point(&ScmModel::stationary(Activation::Relu)).unwrap();
        assert!(rep.converged);
        assert!(rep.fixed_point.q12 < rep.fixed_point.q11);
        assert_eq!(rep.fixed_point.q11, rep.fixed_point.q22);
    }

    #[test]
    fn stationary_task_is_learned_perfectly() {
        for act in [Activation::Erf, Activation::Relu] {
            let fin = final_state_error(&ScmModel::stationary(act)).unwrap();
            assert!(fin.converged && fin.specialized);
            assert!(fin.eps_g.abs() < 1e-10, "{act}: {}", fin.eps_g);
        }
    }
}

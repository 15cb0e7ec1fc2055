//! Example generation and single training steps.

use rand::Rng;
use rand_distr::StandardNormal;

use super::vectors::{dot, VectorState};
use super::SimSystem;

/// Label (zero-based cluster index) or regression target of an example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Label(usize),
    Value(f64),
}

/// Draw one example into `xi`.
///
/// LVQ: cluster `m` with probability `p_m`, `xi = lambda B_m + sqrt(v_m) z`.
/// SCM: `xi = z` with target `sum_m g(B_m . xi)`.
pub fn sample_input<R: Rng>(
    system: &SimSystem,
    p1: f64,
    state: &VectorState,
    rng: &mut R,
    xi: &mut Vec<f64>,
) -> Target {
    let n = state.dim();
    xi.clear();
    match *system {
        SimSystem::Lvq { lambda, v1, v2, .. } => {
            let m = if rng.random::<f64>() < p1 { 0 } else { 1 };
            let sd = if m == 0 { v1 } else { v2 }.sqrt();
            let center = &state.b[m];
            xi.extend((0..n).map(|j| lambda * center[j] + sd * rng.sample::<f64, _>(StandardNormal)));
            Target::Label(m)
        }
        SimSystem::Scm { activation, .. } => {
            xi.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let tau = activation.eval(dot(&state.b[0], xi)) + activation.eval(dot(&state.b[1], xi));
            Target::Value(tau)
        }
    }
}

fn sq_dist(w: &[f64], xi: &[f64]) -> f64 {
    w.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// One update `w_i <- (1 - gamma/N) w_i + (eta/N) Delta w_i`.
///
/// LVQ1 moves only the winner (ties go to prototype 1), towards `xi` if its
/// class matches the label and away from it otherwise. The SCM takes a
/// gradient step on `(y - tau)^2 / 2` for both students.
pub fn train_step(system: &SimSystem, state: &mut VectorState, xi: &[f64], target: Target, eta: f64, gamma: f64) {
    let n = state.dim() as f64;
    let shrink = 1.0 - gamma / n;
    match (system, target) {
        (SimSystem::Lvq { .. }, Target::Label(label)) => {
            let winner = if sq_dist(&state.w[0], xi) <= sq_dist(&state.w[1], xi) {
                0
            } else {
                1
            };
            let psi = if winner == label { 1.0 } else { -1.0 };
            let step = eta / n * psi;
            for (wi, &x) in state.w[winner].iter_mut().zip(xi) {
                *wi = shrink * *wi + step * (x - *wi);
            }
            if gamma > 0.0 {
                state.w[1 - winner].iter_mut().for_each(|wi| *wi *= shrink);
            }
        }
        (SimSystem::Scm { activation, .. }, Target::Value(tau)) => {
            let h = [dot(&state.w[0], xi), dot(&state.w[1], xi)];
            let err = tau - activation.eval(h[0]) - activation.eval(h[1]);
            let a = [
                eta / n * err * activation.prime(h[0]),
                eta / n * err * activation.prime(h[1]),
            ];
            let (w0, w1) = state.w.split_at_mut(1);
            for ((x0, x1), &x) in w0[0].iter_mut().zip(w1[0].iter_mut()).zip(xi) {
                *x0 = shrink * *x0 + a[0] * x;
                *x1 = shrink * *x1 + a[1] * x;
            }
        }
        _ => unreachable!("example type does not match the system"),
    }
}

use driftdyn::exec::Execution;
use driftdyn::scm::{scm_ode_rhs, ScmModel};
use driftdyn::stability::{
    critical_drift, final_state_error_with, find_symmetric_fixed_point, scan, spectrum, JACOBIAN_STEP,
};
use driftdyn::Activation;

const ACTS: [Activation; 2] = [Activation::Erf, Activation::Relu];

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn converged_fixed_points_are_symmetric_roots() {
    for act in ACTS {
        for (delta, gamma) in [(0.0, 0.0), (0.02, 0.0), (0.1, 0.0), (0.03, 0.01), (0.2, 0.5)] {
            let rep = find_symmetric_fixed_point(&ScmModel::new(act, delta, gamma)).unwrap();
            assert!(rep.converged, "{act:?} {delta} {gamma}");
            let rhs = scm_ode_rhs(&rep.fixed_point, &rep.model).unwrap();
            assert!(rhs.norm() <= 1e-10, "{act:?} {delta} {gamma}: {:e}", rhs.norm());
            assert!(rep.residual_norm <= 1e-10);
            let r = &rep.fixed_point.r;
            assert!((r[0][0] - r[0][1]).abs() <= 1e-10);
            assert!((r[1][0] - r[1][1]).abs() <= 1e-10);
            assert!((r[0][0] - r[1][0]).abs() <= 1e-10);
            assert_eq!(rep.fixed_point.q11, rep.fixed_point.q22);
        }
    }
}

#[test]
fn eigenvalues_are_stable_under_step_halving() {
    for act in ACTS {
        for delta in [0.0, 0.03, 0.1] {
            let model = ScmModel::new(act, delta, 0.0);
            let rep = find_symmetric_fixed_point(&model).unwrap();
            let (full, sym, ls) = spectrum(&model, &rep.fixed_point, JACOBIAN_STEP).unwrap();
            let (full2, sym2, ls2) = spectrum(&model, &rep.fixed_point, JACOBIAN_STEP / 2.0).unwrap();
            for (a, b) in full.iter().zip(&full2).chain(sym.iter().zip(&sym2)) {
                assert!((a - b).norm() <= 1e-5, "{act:?} {delta}: {a} vs {b}");
            }
            assert!((ls - ls2).abs() <= 1e-5);
        }
    }
}

#[test]
fn plateau_attracts_within_the_symmetric_manifold() {
    for act in ACTS {
        let delta_c = critical_drift(act, 0.0).unwrap();
        for delta in grid(0.0, 0.95 * delta_c, 6) {
            let rep = find_symmetric_fixed_point(&ScmModel::new(act, delta, 0.0)).unwrap();
            assert!(
                rep.symmetric_eigenvalues.iter().all(|z| z.re < 0.0),
                "{act:?} {delta}: {:?}",
                rep.symmetric_eigenvalues
            );
        }
    }
}

#[test]
fn plateau_examples() {
    let erf = find_symmetric_fixed_point(&ScmModel::stationary(Activation::Erf)).unwrap();
    assert!(erf.lambda_s > 0.0);
    let relu = find_symmetric_fixed_point(&ScmModel::stationary(Activation::Relu)).unwrap();
    let s = relu.fixed_point;
    assert_eq!(s.q11, s.q22);
    assert!(s.q12 < s.q11);
    let strong = find_symmetric_fixed_point(&ScmModel::new(Activation::Erf, 0.1, 0.0)).unwrap();
    assert!(strong.lambda_s < 0.0);
}

#[test]
fn specialization_eigenvalue_falls_linearly_with_drift() {
    for act in ACTS {
        let delta_c = critical_drift(act, 0.0).unwrap();
        let deltas = grid(0.0, delta_c, 11);
        let points: Vec<_> = deltas.iter().map(|&d| (d, 0.0)).collect();
        let values: Vec<f64> = scan(act, &points, Execution::Sequential)
            .unwrap()
            .iter()
            .map(|p| p.lambda_s)
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "{act:?}: {values:?}");
        let (first, last) = (values[0], values[10]);
        let range = first - last;
        for (k, v) in values.iter().enumerate() {
            let secant = first + (last - first) * k as f64 / 10.0;
            assert!((v - secant).abs() <= 0.05 * range, "{act:?} point {k}: {v} vs {secant}");
        }
    }
}

#[test]
fn specialization_eigenvalue_is_continuous_on_scan_grids() {
    let cases = [
        (Activation::Erf, grid(0.0, 0.1, 21), false),
        (Activation::Erf, grid(0.0, 0.04, 21), true),
        (Activation::Relu, grid(0.0, 0.3, 21), false),
        (Activation::Relu, grid(0.0, 1.4, 21), true),
    ];
    for (act, values, decay) in cases {
        let points: Vec<_> = values
            .iter()
            .map(|&v| {
                if decay {
                    (if act == Activation::Erf { 0.03 } else { 0.2 }, v)
                } else {
                    (v, 0.0)
                }
            })
            .collect();
        let ls: Vec<f64> = scan(act, &points, Execution::Sequential)
            .unwrap()
            .iter()
            .map(|p| p.lambda_s)
            .collect();
        let diffs: Vec<f64> = ls.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for k in 1..diffs.len() {
            let neighbour = diffs[k - 1].max(*diffs.get(k + 1).unwrap_or(&diffs[k - 1]));
            assert!(
                diffs[k] <= 10.0 * neighbour.max(1e-12),
                "{act:?} decay={decay} step {k}: {diffs:?}"
            );
        }
    }
}

#[test]
fn small_weight_decay_raises_relu_eigenvalue() {
    let at = |g: f64| {
        find_symmetric_fixed_point(&ScmModel::new(Activation::Relu, 0.2, g))
            .unwrap()
            .lambda_s
    };
    let base = at(0.0);
    assert!(at(0.02) > base && at(0.05) > base);
}

#[test]
fn relu_final_state_never_worse_than_plateau() {
    let delta_c = critical_drift(Activation::Relu, 0.0).unwrap();
    for delta in grid(0.0, 0.98 * delta_c, 8) {
        let model = ScmModel::new(Activation::Relu, delta, 0.0);
        let plateau = find_symmetric_fixed_point(&model).unwrap();
        let fin = final_state_error_with(&model, &plateau).unwrap();
        assert!(fin.converged && fin.specialized, "{delta}");
        assert!(
            fin.eps_g <= plateau.eps_plateau,
            "{delta}: {} > {}",
            fin.eps_g,
            plateau.eps_plateau
        );
    }
}

#[test]
fn final_state_beyond_critical_drift_is_the_plateau() {
    for (act, delta) in [(Activation::Erf, 0.08), (Activation::Relu, 0.3)] {
        let model = ScmModel::new(act, delta, 0.0);
        let plateau = find_symmetric_fixed_point(&model).unwrap();
        let fin = final_state_error_with(&model, &plateau).unwrap();
        assert!(!fin.specialized);
        assert_eq!(fin.eps_g, plateau.eps_plateau);
    }
}

#[test]
fn erf_anomaly_examples() {
    // inside the window the tracking state is worse than the plateau
    for delta in [0.04, 0.05, 0.06] {
        let model = ScmModel::new(Activation::Erf, delta, 0.0);
        let plateau = find_symmetric_fixed_point(&model).unwrap();
        let fin = final_state_error_with(&model, &plateau).unwrap();
        assert!(fin.specialized && fin.eps_g > plateau.eps_plateau, "{delta}");
    }
    let model = ScmModel::new(Activation::Erf, 0.02, 0.0);
    let plateau = find_symmetric_fixed_point(&model).unwrap();
    assert!(final_state_error_with(&model, &plateau).unwrap().eps_g < plateau.eps_plateau);
}

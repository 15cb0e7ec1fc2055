use driftdyn::experiment::{self, apply_overrides, parse};
use driftdyn::gauss::{heaviside_moment, pair_average, std_normal_cdf, GaussianSpec};
use driftdyn::lvq::{class_errors, lvq1_drives};
use driftdyn::output::format_value;
use driftdyn::quadrature::{quad_expect, split_expect};
use driftdyn::scm::{eps_g_scm, scm_drives};
use driftdyn::{Activation, OrderParameterState, PriorSchedule};
use proptest::prelude::*;

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Erf), Just(Activation::Relu)]
}

/// Valid state built as `R R^T + P P^T + floor I`.
fn state() -> impl Strategy<Value = OrderParameterState> {
    (prop::array::uniform8(-1.0f64..1.0), 1e-3f64..0.2).prop_map(|(v, floor)| {
        let r = [[v[0], v[1]], [v[2], v[3]]];
        let p = [[v[4], v[5]], [v[6], v[7]]];
        let q = |i: usize, k: usize| {
            r[i][0] * r[k][0]
                + r[i][1] * r[k][1]
                + p[i][0] * p[k][0]
                + p[i][1] * p[k][1]
                + if i == k { floor } else { 0.0 }
        };
        OrderParameterState::new(r, q(0, 0), q(0, 1), q(1, 1))
    })
}

/// PSD pair covariance `(c11, c12, c22)`.
fn pair_cov() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.05f64..3.0, 0.05f64..3.0, -0.99f64..0.99).prop_map(|(a, b, rho)| (a, rho * (a * b).sqrt(), b))
}

fn g(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Erf => libm::erf(x / std::f64::consts::SQRT_2),
        Activation::Relu => x.max(0.0),
    }
}

fn schedule() -> impl Strategy<Value = PriorSchedule> {
    prop_oneof![
        (0.01f64..0.99).prop_map(|p1| PriorSchedule::Constant { p1 }),
        (0.0f64..100.0, 1.0f64..200.0, 0.5f64..0.99).prop_map(|(a, len, p)| PriorSchedule::Linear {
            alpha_o: a,
            alpha_end: a + len,
            p_max: p
        }),
        (0.0f64..100.0, 0.5f64..0.99).prop_map(|(a, p)| PriorSchedule::Sudden { alpha_o: a, p_max: p }),
        (1.0f64..100.0, 0.5f64..0.99).prop_map(|(t, p)| PriorSchedule::Oscillating { period: t, p_max: p }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pair_average_matches_quadrature(act in activation(), (c11, c12, c22) in pair_cov()) {
        let spec = GaussianSpec::centered(vec![vec![c11, c12], vec![c12, c22]]).unwrap();
        let f = |z: &[f64]| g(act, z[0]) * g(act, z[1]);
        let oracle = match act {
            Activation::Erf => quad_expect(f, &spec, 60).unwrap(),
            Activation::Relu => split_expect(f, &spec, &[true, true], 60).unwrap(),
        };
        let v = pair_average(act, c11, c12, c22).unwrap();
        prop_assert!((v - oracle).abs() <= (1e-8 * oracle.abs()).max(1e-10), "{v} vs {oracle}");
    }

    #[test]
    fn pair_average_is_symmetric(act in activation(), (c11, c12, c22) in pair_cov()) {
        let a = pair_average(act, c11, c12, c22).unwrap();
        let b = pair_average(act, c22, c12, c11).unwrap();
        prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }

    #[test]
    fn cdf_is_symmetric(z in -8.0f64..8.0) {
        let s = std_normal_cdf(z).unwrap() + std_normal_cdf(-z).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn heaviside_moment_matches_quadrature(
        a in prop::array::uniform2(-1.0f64..1.0),
        b in prop::array::uniform2(-1.0f64..1.0),
        a0 in -1.0f64..1.0,
        b0 in -1.0f64..1.0,
        (c11, c12, c22) in pair_cov(),
        mean in prop::array::uniform2(-1.0f64..1.0),
    ) {
        prop_assume!(b[0] * b[0] + b[1] * b[1] > 0.01);
        let cov = vec![vec![c11, c12], vec![c12, c22]];
        let spec = GaussianSpec::new(mean.to_vec(), cov).unwrap();
        let v = heaviside_moment(a0, &a, b0, &b, &spec).unwrap();
        // oracle over the joint law of (x, u) = (b.z + b0, a.z + a0), split at x = 0
        let var_x = b[0] * b[0] * c11 + 2.0 * b[0] * b[1] * c12 + b[1] * b[1] * c22;
        let var_u = a[0] * a[0] * c11 + 2.0 * a[0] * a[1] * c12 + a[1] * a[1] * c22;
        let cov_ux = a[0] * (b[0] * c11 + b[1] * c12) + a[1] * (b[0] * c12 + b[1] * c22);
        let mu_x = b[0] * mean[0] + b[1] * mean[1] + b0;
        let mu_u = a[0] * mean[0] + a[1] * mean[1] + a0;
        // the padding keeps the joint covariance definite and does not enter <u Theta(x)>
        let joint = GaussianSpec::new(
            vec![mu_x, mu_u],
            vec![vec![var_x, cov_ux], vec![cov_ux, var_u + 1e-6]],
        )
        .unwrap();
        let oracle = split_expect(|y: &[f64]| if y[0] > 0.0 { y[1] } else { 0.0 }, &joint, &[true, false], 60).unwrap();
        prop_assert!((v - oracle).abs() <= 1e-7, "{v} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn state_array_and_swaps_round_trip(s in state()) {
        prop_assert_eq!(OrderParameterState::from_array(&s.to_array()), s);
        prop_assert_eq!(s.swap_students().swap_students(), s);
        prop_assert_eq!(s.swap_targets().swap_targets(), s);
        let c = s.canonical();
        prop_assert_eq!(c.canonical(), c);
    }

    #[test]
    fn valid_states_pass_validation(s in state()) {
        prop_assert!(s.validate().is_ok());
        prop_assert!(s.q12 * s.q12 <= s.q11 * s.q22 + 1e-10);
    }

    #[test]
    fn scm_error_is_nonnegative_and_permutation_invariant(act in activation(), s in state()) {
        let e = eps_g_scm(&s, act).unwrap();
        prop_assert!(e >= 0.0);
        for t in [s.swap_students(), s.swap_targets()] {
            let e2 = eps_g_scm(&t, act).unwrap();
            prop_assert!((e - e2).abs() <= 1e-12 * e.max(1.0));
        }
    }

    #[test]
    fn scm_drives_permute_with_students(act in activation(), s in state()) {
        let d = scm_drives(&s, act).unwrap();
        let p = scm_drives(&s.swap_students(), act).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                prop_assert!((d.f[i][k] - p.f[1 - i][k]).abs() <= 1e-12);
                prop_assert!((d.g[i][k] - p.g[1 - i][1 - k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn lvq_indicators_are_consistent(s in state(), p1 in 0.05f64..0.95, lambda in 0.2f64..2.0, v1 in 0.1f64..1.0, v2 in 0.1f64..1.0) {
        let d = lvq1_drives(&s, p1, lambda, v1, v2).unwrap();
        for m in 0..2 {
            // each example has exactly one winner
            prop_assert!((d.f_sq[m][0] + d.f_sq[m][1] - 1.0).abs() <= 1e-12);
            prop_assert_eq!(d.f_cross[m], 0.0);
        }
        let (e1, e2) = class_errors(&s, lambda, v1, v2).unwrap();
        prop_assert!((0.0..=1.0).contains(&e1) && (0.0..=1.0).contains(&e2));
        // relabelling prototypes and clusters together leaves the errors unchanged
        let t = s.swap_students().swap_targets();
        let (f1, f2) = class_errors(&t, lambda, v2, v1).unwrap();
        prop_assert!((e1 - f2).abs() <= 1e-12 && (e2 - f1).abs() <= 1e-12);
    }

    #[test]
    fn priors_stay_inside_the_unit_interval(sched in schedule(), alpha in 0.0f64..500.0) {
        let p = sched.prior_at(alpha).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn formatted_values_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        let back: f64 = format_value(v).parse().unwrap();
        prop_assert!(back == v || (v.is_nan() && back.is_nan()));
    }

    #[test]
    fn config_overrides_round_trip(runs in 1usize..50, n in 4usize..1000, seed in 0..=i64::MAX as u64, delta in 0.0f64..0.5) {
        let cfg = experiment::preset("fig4b").unwrap();
        let set = [
            ("mc.runs".to_string(), runs.to_string()),
            ("mc.n".to_string(), n.to_string()),
            ("seed".to_string(), seed.to_string()),
            ("model.delta".to_string(), format!("{delta:?}")),
        ];
        let cfg = apply_overrides(cfg, &set).unwrap().resolve().unwrap();
        prop_assert_eq!(cfg.mc.runs, Some(runs));
        prop_assert_eq!(cfg.seed, seed);
        let back = parse(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

use driftdyn::experiment::preset;
use driftdyn::ode::{Autonomous, PlateauOutcome};
use driftdyn::scm::initial_state;
use driftdyn::stability::plateau_outcome;
use driftdyn::{integrate, Activation, IntegratorSettings, OrderParameterState, Result, ScmModel};

/// `dR/dt = -gamma R`, `dQ/dt = -2 gamma Q`.
fn decay(gamma: f64) -> Autonomous<impl Fn(&OrderParameterState) -> Result<OrderParameterState>> {
    Autonomous(move |s: &OrderParameterState| {
        let mut d = s.scaled(-2.0 * gamma);
        d.r = s.scaled(-gamma).r;
        Ok(d)
    })
}

#[test]
fn pure_decay_follows_the_exponential() {
    let init = OrderParameterState::new([[0.3, 0.1], [0.2, 0.4]], 1.0, 0.3, 0.8);
    let traj = integrate(&decay(0.05), &init, 10.0, &IntegratorSettings::new(0.01, 0.5)).unwrap();
    let end = traj.last_state().unwrap();
    let f = (-1.0f64).exp();
    for (a, b) in [(end.q11, init.q11), (end.q12, init.q12), (end.q22, init.q22)] {
        assert!((a - b * f).abs() <= 1e-8);
    }
    assert!((end.r[1][0] - init.r[1][0] * (-0.5f64).exp()).abs() <= 1e-8);
}

#[test]
fn fig4_curves_are_converged_in_the_step_size() {
    for name in ["fig4a", "fig4b"] {
        let cfg = preset(name).unwrap().resolve().unwrap();
        let settings = cfg.integrator();
        let fine = IntegratorSettings {
            step: settings.step / 2.0,
            ..settings
        };
        let init = cfg.ode_init();
        for job in cfg.jobs().unwrap() {
            let model = job.model.as_scm().unwrap();
            let t_end = cfg.ode.t_end.unwrap();
            let a = integrate(&model, &init, t_end, &settings).unwrap();
            let b = integrate(&model, &init, t_end, &fine).unwrap();
            assert_eq!(a.times, b.times);
            let (ea, eb) = (a.eps_g().unwrap(), b.eps_g().unwrap());
            let worst = ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{name} {}: {worst:e}", job.label);
        }
    }
}

#[test]
fn weak_drift_lengthens_the_erf_plateau() {
    let settings = IntegratorSettings::scm();
    let length = |delta: f64| match plateau_outcome(
        &ScmModel::new(Activation::Erf, delta, 0.0),
        &initial_state(1e-3),
        300.0,
        &settings,
    )
    .unwrap()
    {
        PlateauOutcome::Plateau { t0, t_p } => t_p - t0,
        other => panic!("delta {delta}: {other:?}"),
    };
    let (l0, l1) = (length(0.0), length(0.01));
    assert!(l1 > l0, "{l1} <= {l0}");
}

#[test]
fn strong_drift_never_escapes() {
    let outcome = plateau_outcome(
        &ScmModel::new(Activation::Erf, 0.08, 0.0),
        &initial_state(1e-3),
        300.0,
        &IntegratorSettings::new(0.01, 0.05),
    )
    .unwrap();
    assert!(matches!(outcome, PlateauOutcome::NoEscape { .. }), "{outcome:?}");
}

#[test]
fn integration_is_deterministic() {
    let model = preset("fig2").unwrap().model.as_lvq().unwrap();
    let init = OrderParameterState::new([[0.0; 2]; 2], 1.0, 0.0, 1.0);
    let a = integrate(&model, &init, 200.0, &IntegratorSettings::lvq()).unwrap();
    let b = integrate(&model, &init, 200.0, &IntegratorSettings::lvq()).unwrap();
    assert_eq!(a, b);
    let scm = ScmModel::new(Activation::Relu, 0.1, 0.01);
    let a = integrate(&scm, &initial_state(1e-3), 50.0, &IntegratorSettings::scm()).unwrap();
    let b = integrate(&scm, &initial_state(1e-3), 50.0, &IntegratorSettings::scm()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stored_states_stay_consistent() {
    for name in ["fig1", "fig2", "fig3"] {
        let model = preset(name).unwrap().model.as_lvq().unwrap();
        let init = OrderParameterState::new([[0.0; 2]; 2], 1.0, 0.0, 1.0);
        let traj = integrate(&model, &init, 200.0, &IntegratorSettings::lvq()).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.times.len(), traj.states.len());
        assert!(traj.states.iter().all(|s| s.check_gram(1e-6).is_ok()));
    }
}

#[test]
fn fig1_curves_respond_to_the_ramp() {
    let model = preset("fig1").unwrap().model.as_lvq().unwrap();
    let init = OrderParameterState::new([[0.0; 2]; 2], 1.0, 0.0, 1.0);
    let traj = integrate(&model, &init, 300.0, &IntegratorSettings::lvq()).unwrap();
    let (track, e2) = (traj.column("eps_track").unwrap(), traj.column("eps2").unwrap());
    let at = |t: f64| traj.times.iter().position(|&x| x >= t - 1e-9).unwrap();
    // the minority class gets misclassified more as the ramp progresses
    assert!(e2[at(200.0)] > e2[at(20.0)]);
    assert!(track[at(200.0)] < track[at(20.0)]);
}

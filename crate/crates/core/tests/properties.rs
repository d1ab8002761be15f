use nalgebra::{DVector, Vector1, Vector3};
use proptest::prelude::*;

use clarity_coverage::clarity::{clarity_closed_form, max_clarity, time_to_clarity, ClarityParams};
use clarity_coverage::config::{desk_config, preset, MissionConfig};
use clarity_coverage::control::{reduce_state, track_step, LqTracker, Reduced, TrackingConfig};
use clarity_coverage::ergodic::{
    ergodic_metric, pto_optimize, tisd_coefficients, trajectory_coefficients, ErgodicSpectrum, FourierBasis,
    InitialGuess, PlannerState, PtoConfig,
};
use clarity_coverage::eware::{validate_candidate, EwareConfig, EwareFilter};
use clarity_coverage::grid::{CellField, DomainSpec};
use clarity_coverage::mission::{lawnmower_path, run_mission, Phase};
use clarity_coverage::tisd::{gen_tisd, Tisd};
use clarity_coverage::trajectory::Trajectory;
use clarity_coverage::vehicle::{
    quadrotor_dynamics, rk4_step, rotate, BatteryParams, QuadrotorParams, QuadrotorState, SystemState,
};

fn desk() -> DomainSpec {
    DomainSpec::planar(2.0, 2.0, 0.2).unwrap()
}

fn params() -> impl Strategy<Value = ClarityParams> {
    (0.0..3.0f64, 0.0..2.0f64, 0.1..5.0f64).prop_map(|(c, q, r)| ClarityParams::new(c, q, r).unwrap())
}

proptest! {
    #[test]
    fn clarity_bounded_and_monotone(p in params(), q0 in 0.0..=1.0f64, t in 0.0..50.0f64, dt in 0.0..5.0f64) {
        let a = clarity_closed_form(t, q0, &p).unwrap();
        let b = clarity_closed_form(t + dt, q0, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        let q_inf = max_clarity(&p).unwrap();
        if p.sensing_gain == 0.0 && p.process_noise == 0.0 {
            prop_assert_eq!(a, q0);
        } else if q0 < q_inf {
            prop_assert!(b >= a - 1e-12);
        } else if q0 > q_inf {
            prop_assert!(b <= a + 1e-12);
        }
    }

    #[test]
    fn clarity_round_trip(p in params(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        prop_assume!(p.sensing_gain > 0.05);
        let q_inf = max_clarity(&p).unwrap();
        let hi = q_inf - 1e-3;
        prop_assume!(hi > 1e-3);
        let (lo_f, hi_f) = if a < b { (a, b) } else { (b, a) };
        let q0 = lo_f * hi;
        let q1 = hi_f * hi;
        prop_assume!(q1 > q0);
        let t = time_to_clarity(q0, q1, &p).unwrap();
        prop_assert!((clarity_closed_form(t, q0, &p).unwrap() - q1).abs() < 1e-9);
    }

    #[test]
    fn clarity_steps_compose(p in params(), q0 in 0.0..=1.0f64, dt in 0.0..4.0f64) {
        let once = clarity_closed_form(dt, q0, &p).unwrap();
        let half = clarity_closed_form(dt / 2.0, q0, &p).unwrap();
        let twice = clarity_closed_form(dt / 2.0, half, &p).unwrap();
        prop_assert!((once - twice).abs() < 1e-9);
    }
}

fn field(process_noise: Vec<f64>, clarity: Vec<f64>, target: Vec<f64>) -> CellField {
    CellField {
        spec: desk(),
        values: vec![0.0; 100],
        process_noise,
        clarity,
        target_clarity: target,
        measurement_noise: 1.0,
        sensing_gain: 1.0,
    }
}

proptest! {
    #[test]
    fn field_clarity_stays_in_unit_interval(
        noise in prop::collection::vec(0.0..1.0f64, 100),
        views in prop::collection::vec(prop::collection::btree_set(0usize..100, 0..12), 1..40),
    ) {
        let mut f = field(noise, vec![0.0; 100], vec![0.5; 100]);
        for v in views {
            let observed: Vec<usize> = v.into_iter().collect();
            f.update_clarity(&observed, 0.05).unwrap();
            prop_assert!(f.clarity.iter().all(|q| (0.0..=1.0).contains(q)));
        }
    }

    #[test]
    fn static_field_clarity_never_drops(
        views in prop::collection::vec(prop::collection::btree_set(0usize..100, 0..12), 1..40),
    ) {
        let mut f = field(vec![0.0; 100], vec![0.1; 100], vec![0.5; 100]);
        for v in views {
            let before = f.clarity.clone();
            let observed: Vec<usize> = v.into_iter().collect();
            f.update_clarity(&observed, 0.05).unwrap();
            prop_assert!(f.clarity.iter().zip(&before).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn tisd_ignores_weight_scale(w in prop::collection::vec(0.0..10.0f64, 100), s in 1e-3..1e3f64) {
        prop_assume!(w.iter().any(|x| *x > 0.0));
        let a = Tisd::from_weights(&desk(), w.clone()).unwrap();
        let b = Tisd::from_weights(&desk(), w.iter().map(|x| x * s).collect()).unwrap();
        for (x, y) in a.density.iter().zip(&b.density) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn tisd_orders_cells_by_deficit(q in prop::collection::vec(0.0..0.9f64, 100)) {
        let f = field(vec![0.1; 100], q.clone(), vec![0.6; 100]);
        let t = gen_tisd(&f, 0.05).unwrap();
        for i in 0..100 {
            if q[i] >= 0.6 && !t.targets_satisfied {
                prop_assert_eq!(t.density[i], 0.0);
            }
            for j in 0..100 {
                if q[i] < q[j] && q[i] < 0.6 {
                    prop_assert!(t.density[i] > t.density[j]);
                }
            }
        }
    }
}

#[test]
fn pto_beats_a_lawnmower_on_a_concentrated_target() {
    let d = desk();
    let mut w = vec![0.0; d.num_cells()];
    for c in [22, 23, 32, 33] {
        w[c] = 1.0;
    }
    let tisd = Tisd::from_weights(&d, w).unwrap();
    let cfg = PtoConfig::default();
    let out = pto_optimize(
        &d,
        PlannerState::at_rest(vec![1.0, 1.0]),
        &tisd,
        &cfg,
        InitialGuess::Stationary,
        0.0,
    )
    .unwrap();
    let basis = FourierBasis::new(&d, cfg.max_index);
    let phi = tisd_coefficients(&tisd, &basis);
    let metric = |traj: &Trajectory| {
        let pos: Vec<Vec<f64>> = traj.states.iter().map(|s| vec![s[0], s[1]]).collect();
        let c = trajectory_coefficients(&pos, &basis).unwrap();
        ergodic_metric(&ErgodicSpectrum::new(&basis, c, phi.clone()).unwrap())
    };
    // single pass at the speed that covers the whole sweep in one horizon
    let sweep = lawnmower_path(&d, 0.5, 1.6, cfg.dt).unwrap();
    let n = out.trajectory.len().min(sweep.len());
    let single = Trajectory::new(
        0.0,
        cfg.dt,
        sweep.states[..n].to_vec(),
        sweep.controls[..n - 1].to_vec(),
    )
    .unwrap();
    assert!(
        metric(&out.trajectory) < metric(&single),
        "{} vs {}",
        metric(&out.trajectory),
        metric(&single)
    );
    assert!(out.history.windows(2).all(|h| h[1] <= h[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn quaternion_norm_holds_while_tumbling(w in prop::array::uniform3(-2.0..2.0f64)) {
        let quad = QuadrotorParams::default();
        let u = quad.hover_control();
        let mut x = QuadrotorState {
            angular_velocity: Vector3::from(w),
            ..QuadrotorState::hover_at(Vector3::zeros())
        }
        .to_vector();
        for _ in 0..10_000 {
            x = rk4_step(|x, u| quadrotor_dynamics(x, u, &quad), &x, &u, 0.001).unwrap();
        }
        prop_assert!((x.fixed_rows::<4>(3).norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn angular_momentum_is_conserved_without_torque(w in prop::array::uniform3(-3.0..3.0f64)) {
        let quad = QuadrotorParams {
            inertia: nalgebra::Matrix3::from_diagonal(&Vector3::new(0.002, 0.003, 0.005)),
            ..QuadrotorParams::default()
        };
        let u = quad.hover_control();
        let mut x = QuadrotorState {
            angular_velocity: Vector3::from(w),
            ..QuadrotorState::hover_at(Vector3::zeros())
        }
        .to_vector();
        let momentum = |x: &clarity_coverage::vehicle::StateVector| {
            let s = QuadrotorState::from_vector(x);
            rotate(&s.attitude, &(quad.inertia * s.angular_velocity))
        };
        let h0 = momentum(&x);
        for _ in 0..1000 {
            x = rk4_step(|x, u| quadrotor_dynamics(x, u, &quad), &x, &u, 0.001).unwrap();
        }
        let h1 = momentum(&x);
        prop_assert!((h1 - h0).norm() <= 1e-4 * h0.norm().max(1e-12));
        let body0 = (quad.inertia * Vector3::from(w)).norm();
        let body1 = (quad.inertia * QuadrotorState::from_vector(&x).angular_velocity).norm();
        prop_assert!((body1 - body0).abs() <= 1e-4 * body0.max(1e-12));
    }

    #[test]
    fn soc_never_increases_and_stops_at_zero(
        thrusts in prop::collection::vec(prop::array::uniform4(0.0..3.0f64), 1..200),
        soc in 0.0..0.02f64,
    ) {
        let quad = QuadrotorParams::default();
        let battery = BatteryParams::default();
        let mut chi = SystemState {
            robot: QuadrotorState::hover_at(Vector3::new(0.0, 0.0, 50.0)).to_vector(),
            soc,
        };
        for t in thrusts {
            let next = chi.step(&nalgebra::Vector4::from(t), &quad, &battery, 0.05).unwrap();
            prop_assert!(next.soc <= chi.soc && next.soc >= 0.0);
            chi = next;
        }
    }

    #[test]
    fn rk4_is_fourth_order(rate in -2.0..2.0f64) {
        prop_assume!(rate.abs() > 0.1);
        let err = |dt: f64| {
            let n = (1.0 / dt).round() as usize;
            let mut y = Vector1::new(1.0);
            for _ in 0..n {
                y = rk4_step(|x: &Vector1<f64>, _: &()| x * rate, &y, &(), dt).unwrap();
            }
            (y[0] - rate.exp()).abs()
        };
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        prop_assert!((e1 / e2).log2() >= 3.8 && (e2 / e3).log2() >= 3.8);
    }

    #[test]
    fn tracking_is_deterministic(dx in prop::array::uniform3(-0.5..0.5f64), v in prop::array::uniform3(-0.3..0.3f64)) {
        let quad = QuadrotorParams::default();
        let tracker = LqTracker::new(&quad, &TrackingConfig::default()).unwrap();
        let x = QuadrotorState {
            velocity: Vector3::from(v),
            ..QuadrotorState::hover_at(Vector3::new(1.0, 1.0, 1.0) + Vector3::from(dx))
        }
        .to_vector();
        let target = reduce_state(&QuadrotorState::hover_at(Vector3::new(1.0, 1.0, 1.0)).to_vector()).unwrap();
        let refs: Vec<Reduced> = vec![target; tracker.steps() + 1];
        let a = track_step(&x, &refs, None, &tracker).unwrap();
        let b = track_step(&x, &refs, None, &tracker).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn committed_candidates_reach_the_charger_with_charge_left(
        x in 0.0..2.0f64, y in 0.0..2.0f64, soc in 0.02..1.0f64, vx in -0.3..0.3f64, vy in -0.3..0.3f64,
    ) {
        let cfg = EwareConfig::default();
        let filter = EwareFilter::new(&cfg, &QuadrotorParams::default(), &BatteryParams::default()).unwrap();
        let chi = SystemState { robot: QuadrotorState::hover_at(Vector3::new(x, y, 1.0)).to_vector(), soc };
        let n = 50;
        let states = (0..=n)
            .map(|k| DVector::from_vec(vec![(x + vx * 0.2 * k as f64).clamp(0.0, 2.0), (y + vy * 0.2 * k as f64).clamp(0.0, 2.0), vx, vy]))
            .collect();
        let reference = Trajectory::new(0.0, 0.2, states, vec![DVector::zeros(2); n]).unwrap();
        let cand = filter.build_candidate(&chi, &reference, 0.0).unwrap();
        let again = filter.build_candidate(&chi, &reference, 0.0).unwrap();
        prop_assert_eq!(&cand, &again);
        let verdict = validate_candidate(&cand, &cfg.b2b, cfg.soc_reserve);
        if verdict.valid {
            prop_assert!(cand.states.iter().all(|s| s.soc >= cfg.soc_reserve));
            let last = cand.states.last().unwrap();
            prop_assert!(cfg.b2b.arrived(&last.position(), &last.velocity()));
        }
    }

    #[test]
    fn config_round_trips(seed in 0u64..(i64::MAX as u64), duration in 0.0..1000.0f64, name in 0usize..5) {
        let base = preset(clarity_coverage::config::PRESET_NAMES[name]).unwrap().base;
        let cfg = base.with_overrides(Some(seed), Some(duration)).unwrap();
        let back = MissionConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(cfg, back);
    }
}

fn short(mut c: MissionConfig, duration: f64) -> MissionConfig {
    c.mission.duration = duration;
    c
}

#[test]
fn spatiostatic_deficit_never_rises() {
    let p = preset("compare-spatiostatic").unwrap();
    let cfg = short(p.variant_config(&p.variants[0]), 120.0);
    let log = run_mission(&cfg).unwrap().log;
    assert!(log.samples.windows(2).all(|w| w[1].q_d <= w[0].q_d + 1e-12));
}

#[test]
fn mission_schedule_and_safety() {
    let cfg = desk_config();
    let log = run_mission(&cfg).unwrap().log;
    let landings: Vec<f64> = log.landings().map(|e| e.t).collect();
    assert!(!landings.is_empty());
    let recharges: Vec<f64> = log
        .events
        .iter()
        .filter(|e| e.kind == clarity_coverage::mission::EventKind::Recharged)
        .map(|e| e.t)
        .collect();
    let multiple = |t: f64, p: f64| ((t / p).round() * p - t).abs() < 1e-6;
    for r in &log.replans {
        assert!(
            multiple(r.t, cfg.ergodic.horizon) || recharges.iter().any(|t| (t - r.t).abs() < 1e-9),
            "replan at {}",
            r.t
        );
    }
    for a in &log.audit {
        assert!(multiple(a.tau, cfg.eware.period), "eware run at {}", a.tau);
    }
    for s in &log.samples {
        assert!(s.soc > 0.0 || s.dist_to_charger <= cfg.eware.position_tolerance);
        if s.phase == Phase::Charging && s.t > 0.0 && s.event.is_empty() {
            assert!(s.dist_to_charger <= cfg.eware.position_tolerance + 1e-9);
        }
    }
    assert!(!log.crashed);
}

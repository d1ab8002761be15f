//! LQ tracking of a slow circle, then a back-to-base plan from the far
//! corner flown on the full nonlinear model.
//!
//!     cargo run --release --example tracking

use nalgebra::Vector3;

use clarity_coverage::control::{
    lift_planner_state, track_step, B2bConfig, B2bSolver, LqTracker, Reduced, TrackingConfig,
};
use clarity_coverage::vehicle::{quadrotor_step, BatteryParams, QuadrotorParams, QuadrotorState, SystemState};

fn circle(t: f64) -> [f64; 4] {
    let w = 0.4;
    [
        1.0 + 0.5 * (w * t).cos(),
        1.0 + 0.5 * (w * t).sin(),
        -0.2 * (w * t).sin(),
        0.2 * (w * t).cos(),
    ]
}

fn main() -> clarity_coverage::Result<()> {
    let quad = QuadrotorParams::default();
    let cfg = TrackingConfig::default();
    let tracker = LqTracker::new(&quad, &cfg)?;
    let dt = cfg.dt;

    let mut x = QuadrotorState::hover_at(Vector3::new(1.5, 1.0, 1.0)).to_vector();
    let mut worst = 0.0f64;
    for i in 0..400 {
        let t = i as f64 * dt;
        let refs: Vec<Reduced> = (0..=tracker.steps())
            .map(|k| lift_planner_state(&circle(t + k as f64 * dt), 1.0))
            .collect();
        let u = track_step(&x, &refs, None, &tracker)?.control;
        x = quadrotor_step(&x, &u, &quad, dt)?;
        let c = circle(t + dt);
        let err = (x.fixed_rows::<3>(0) - Vector3::new(c[0], c[1], 1.0)).norm();
        if i >= 100 {
            worst = worst.max(err);
        }
    }
    println!("circle tracking: worst position error after settling {worst:.2e} m");

    let b2b = B2bConfig::default();
    let solver = B2bSolver::new(&quad, &b2b, &cfg)?;
    let start = SystemState {
        robot: QuadrotorState::hover_at(Vector3::new(2.0, 2.0, 1.0)).to_vector(),
        soc: 1.0,
    };
    let plan = solver.solve(&lift_planner_state(&[2.0, 2.0, 0.0, 0.0], 1.0), 0.0)?;
    let last = plan.states.last().expect("plan has states");
    println!(
        "b2b plan from (2, 2): {} steps, planned end ({:.3}, {:.3}, {:.3})",
        plan.len(),
        last[0],
        last[1],
        last[2]
    );

    // fly the plan with the tracker on the nonlinear model
    let battery = BatteryParams::default();
    let b2b_tracker = LqTracker::new(&quad, &cfg)?;
    let refs: Vec<Reduced> = plan
        .states
        .iter()
        .map(|s| Reduced::from_column_slice(s.as_slice()))
        .collect();
    let mut chi = start;
    for i in 0..plan.len() - 1 {
        let window: Vec<Reduced> = (0..=b2b_tracker.steps())
            .map(|k| refs[(i + k).min(refs.len() - 1)])
            .collect();
        let u = track_step(&chi.robot, &window, None, &b2b_tracker)?.control;
        chi = chi.step(&u, &quad, &battery, dt)?;
    }
    println!(
        "flown: end {:?}, speed {:.3} m/s, arrived {}, SoC used {:.4}",
        chi.position()
            .iter()
            .map(|v| (v * 1e3).round() / 1e3)
            .collect::<Vec<_>>(),
        chi.velocity().norm(),
        b2b.arrived(&chi.position(), &chi.velocity()),
        1.0 - chi.soc
    );
    Ok(())
}

//! Rigid-body quadrotor with a battery: hover drain, a thrust imbalance,
//! and the hover endurance implied by the battery constants.
//!
//!     cargo run --example quadrotor

use nalgebra::{Vector3, Vector4};

use clarity_coverage::vehicle::{BatteryParams, QuadrotorParams, QuadrotorState, SystemState};

fn main() -> clarity_coverage::Result<()> {
    let quad = QuadrotorParams::default();
    let battery = BatteryParams::default();
    let hover = quad.hover_control();
    println!(
        "hover thrust {:.4} N per rotor, endurance {:.1} s",
        quad.hover_thrust(),
        battery.endurance(&hover)
    );

    let start = SystemState {
        robot: QuadrotorState::hover_at(Vector3::new(0.0, 0.0, 1.0)).to_vector(),
        soc: 1.0,
    };
    let mut chi = start;
    for _ in 0..200 {
        chi = chi.step(&hover, &quad, &battery, 0.05)?;
    }
    println!(
        "10 s of hover: position {:?}, SoC {:.4}",
        chi.position().as_slice(),
        chi.soc
    );

    // the +x rotor pair slightly stronger: the airframe pitches over and falls
    let tilt = hover + Vector4::new(0.01, -0.01, -0.01, 0.01);
    let mut chi = start;
    for k in 1..=40 {
        chi = chi.step(&tilt, &quad, &battery, 0.05)?;
        if k % 10 == 0 {
            let s = QuadrotorState::from_vector(&chi.robot);
            println!(
                "t = {:.1} s: position ({:+.3}, {:+.3}, {:+.3}), attitude {:?}",
                k as f64 * 0.05,
                s.position.x,
                s.position.y,
                s.position.z,
                s.attitude.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
            );
        }
    }
    Ok(())
}

//! The energy filter on one ergodic segment at several charge levels.
//! Low charge fails the energy check; the mission would keep flying its
//! previous committed trajectory home.
//!
//!     cargo run --release --example eware

use nalgebra::{DVector, Vector3};

use clarity_coverage::eware::{commit, EwareConfig, EwareFilter};
use clarity_coverage::trajectory::Trajectory;
use clarity_coverage::vehicle::{BatteryParams, QuadrotorParams, QuadrotorState, SystemState};

fn main() -> clarity_coverage::Result<()> {
    let cfg = EwareConfig::default();
    let filter = EwareFilter::new(&cfg, &QuadrotorParams::default(), &BatteryParams::default())?;

    // slow drift across the domain, sampled at the planner rate
    let states: Vec<DVector<f64>> = (0..=50)
        .map(|k| DVector::from_vec(vec![1.5 + 0.004 * k as f64, 1.5, 0.02, 0.0]))
        .collect();
    let reference = Trajectory::new(0.0, 0.2, states, vec![DVector::zeros(2); 50])?;

    let mut committed = None;
    for soc in [0.5, 0.1, 0.06, 0.04, 0.02] {
        let chi = SystemState {
            robot: QuadrotorState::hover_at(Vector3::new(1.5, 1.5, 1.0)).to_vector(),
            soc,
        };
        let cand = filter.build_candidate(&chi, &reference, 0.0)?;
        let v = filter.validate_candidate(&cand);
        println!(
            "SoC {soc:.2}: valid {:<5} reason {:<7} min SoC {:+.4} end {:.3} m from charger, {} saturated steps",
            v.valid,
            v.reason.map_or("-".to_string(), |r| r.to_string()),
            v.min_soc,
            v.terminal_distance,
            cand.saturated_steps
        );
        let previous = match committed.take() {
            Some(c) => c,
            None => clarity_coverage::eware::CommittedTrajectory {
                trajectory: filter.hold(&chi, 0.0)?,
                commit_time: 0.0,
            },
        };
        committed = Some(commit(&v, cand, previous, 0.0));
    }
    Ok(())
}

//! Optimize a 10 s double-integrator trajectory against a two-peak target
//! and write it to `ergodic_trajectory.csv`.
//!
//!     cargo run --release --example ergodic_planner

use clarity_coverage::ergodic::{pto_optimize, InitialGuess, PlannerState, PtoConfig};
use clarity_coverage::grid::DomainSpec;
use clarity_coverage::tisd::Tisd;

fn main() -> clarity_coverage::Result<()> {
    let spec = DomainSpec::planar(2.0, 2.0, 0.2)?;
    let mut weights = vec![0.0; spec.num_cells()];
    weights[22] = 0.7; // around (0.5, 0.5)
    weights[77] = 0.3; // around (1.5, 1.5)
    let tisd = Tisd::from_weights(&spec, weights)?;

    let cfg = PtoConfig {
        max_iterations: 200,
        ..PtoConfig::default()
    };
    for guess in [InitialGuess::Stationary, InitialGuess::Spiral] {
        let label = format!("{guess:?}");
        let out = pto_optimize(&spec, PlannerState::at_rest(vec![1.0, 1.0]), &tisd, &cfg, guess, 0.0)?;
        println!(
            "{label:<10} objective {:.4} -> {:.4} (ergodic {:.4}, boundary {:.2e}, control {:.4}) in {} iterations",
            out.initial.total(),
            out.last.total(),
            out.last.ergodic,
            out.last.boundary,
            out.last.control,
            out.iterations
        );
        if label == "Spiral" {
            std::fs::write(
                "ergodic_trajectory.csv",
                out.trajectory
                    .to_csv(Some(&["px", "py", "vx", "vy"]), Some(&["ax", "ay"])),
            )
            .expect("write ergodic_trajectory.csv");
            println!("wrote ergodic_trajectory.csv");
        }
    }
    Ok(())
}

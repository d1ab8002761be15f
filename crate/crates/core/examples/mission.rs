//! A full desk-scale mission: planner, energy filter, recharges.
//! Writes per-run files to `out/mission/`.
//!
//!     cargo run --release --example mission [config.toml]

use std::path::Path;

use clarity_coverage::config::{desk_config, parse_config};
use clarity_coverage::experiment::write_run;
use clarity_coverage::mission::run_mission;

fn main() -> clarity_coverage::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => parse_config(Path::new(&path))?,
        None => desk_config(),
    };
    let run = run_mission(&cfg)?;
    let log = &run.log;
    println!(
        "{} s, method {}: q_d {:.4} -> {:.4}",
        cfg.mission.duration,
        cfg.ergodic.method.as_str(),
        log.samples[0].q_d,
        log.final_q_d()
    );
    for e in &log.events {
        println!(
            "  {:>7.2} s  {:?}  SoC {:.3}  {:.3} m from charger",
            e.t, e.kind, e.soc, e.dist_to_charger
        );
    }
    let rejected = log.audit.iter().filter(|a| !a.valid).count();
    println!(
        "{} replans, {} filter runs ({} rejected), min SoC {:.3}",
        log.replans.len(),
        log.audit.len(),
        rejected,
        log.min_soc
    );
    let out = Path::new("out/mission");
    write_run(out, &cfg, &run)?;
    println!("wrote {}", out.display());
    Ok(())
}

//! Run a built-in preset and print a coarse q_d table.
//!
//!     cargo run --release --example compare [preset]

use std::path::Path;

use clarity_coverage::config::{preset, PRESET_NAMES};
use clarity_coverage::experiment::{run_experiment, Overrides};

fn main() -> clarity_coverage::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "compare-stochastic".into());
    let Some(p) = preset(&name) else {
        eprintln!("unknown preset {name}; try one of {}", PRESET_NAMES.join(", "));
        std::process::exit(1);
    };
    println!("{}: {}", p.name, p.description);
    let report = run_experiment(&p, &Path::new("out").join(&p.name), &Overrides::default())?;

    print!("{:>8}", "t");
    for (name, _, _) in &report.runs {
        print!("{name:>12}");
    }
    println!();
    let n = report.runs[0].2.log.samples.len();
    for i in (0..n).step_by((n / 12).max(1)) {
        print!("{:>8.0}", report.runs[0].2.log.samples[i].t);
        for (_, _, run) in &report.runs {
            match run.log.samples.get(i) {
                Some(s) => print!("{:>12.4}", s.q_d),
                None => print!("{:>12}", "-"),
            }
        }
        println!();
    }
    for (name, _, run) in &report.runs {
        if run.log.crashed {
            println!("{name} crashed");
        }
    }
    println!("outputs in {}", report.out_dir.display());
    Ok(())
}

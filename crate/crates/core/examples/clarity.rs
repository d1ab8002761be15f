//! Clarity growth under observation and decay without it.
//!
//!     cargo run --example clarity

use clarity_coverage::clarity::{clarity_closed_form, max_clarity, time_to_clarity, ClarityParams};

fn main() -> clarity_coverage::Result<()> {
    let watched = ClarityParams::new(1.0, 0.05, 2.0)?;
    let unwatched = watched.with_gain(0.0);
    let q_inf = max_clarity(&watched)?;
    println!("q_inf = {q_inf:.4}");

    println!("{:>6} {:>10} {:>10}", "t", "observed", "idle");
    for t in [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
        println!(
            "{t:>6.1} {:>10.4} {:>10.4}",
            clarity_closed_form(t, 0.0, &watched)?,
            clarity_closed_form(t, 0.6, &unwatched)?
        );
    }

    for target in [0.3, 0.5, 0.7, q_inf - 0.01] {
        println!(
            "0 -> {target:.3} takes {:.2} s of observation",
            time_to_clarity(0.0, target, &watched)?
        );
    }
    match time_to_clarity(0.0, q_inf, &watched) {
        Err(e) => println!("at q_inf: {e}"),
        Ok(t) => println!("at q_inf: {t}"),
    }
    Ok(())
}

//! Build a stochastic field, observe part of it, and derive the target
//! distribution the planner should follow.
//!
//!     cargo run --example tisd

use clarity_coverage::config::desk_config;
use clarity_coverage::grid::sensor_footprint;
use clarity_coverage::tisd::gen_tisd;

fn shade(v: f64, max: f64) -> char {
    let ramp = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    ramp[((v / max) * 9.0).round().clamp(0.0, 9.0) as usize]
}

fn print_map(title: &str, values: &[f64], nx: usize) {
    let max = values.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    println!("{title} (max {max:.4})");
    for row in (0..values.len() / nx).rev() {
        let line: String = values[row * nx..(row + 1) * nx]
            .iter()
            .map(|v| shade(*v, max))
            .flat_map(|c| [c, c])
            .collect();
        println!("  |{line}|");
    }
}

fn main() -> clarity_coverage::Result<()> {
    let cfg = desk_config();
    let mut field = cfg.generate_field()?;
    let nx = field.spec.cells_per_axis()[0];
    print_map("process noise", &field.process_noise, nx);

    // hover over the lower-left quadrant for a while
    let sensor = cfg.sensor()?;
    for step in 0..200 {
        let x = 0.2 + 0.6 * (step as f64 / 200.0);
        let seen = sensor_footprint(&[x, 0.5], &field.spec, &sensor);
        field.update_clarity(&seen, 0.05)?;
    }
    print_map("clarity deficit", &field.deficits(), nx);

    let tisd = gen_tisd(&field, cfg.ergodic.epsilon)?;
    print_map("target distribution", &tisd.density, nx);
    println!(
        "sum = {:.6}, targets met everywhere: {}",
        tisd.density.iter().sum::<f64>(),
        tisd.targets_satisfied
    );
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clarity_coverage::config::{parse_config, preset, PRESET_NAMES};
use clarity_coverage::experiment::{run_experiment, write_run, Overrides};
use clarity_coverage::mission::run_mission;
use clarity_coverage::Error;

const CONFIG_ERROR: u8 = 1;
const MISSION_ERROR: u8 = 2;
const CRASH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "clarity-coverage",
    version,
    about = "Clarity-driven persistent coverage missions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunFlags {
    /// Override the mission seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the mission duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission from a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run every variant of a preset on the same seed.
    Compare {
        preset: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Parse and check a config file without running it.
    Validate { config: PathBuf },
    /// Preset management.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List the built-in presets.
    List,
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Io { .. })
}

fn run(config: &Path, flags: &RunFlags) -> u8 {
    let cfg = match parse_config(config).and_then(|c| c.with_overrides(flags.seed, flags.duration)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return CONFIG_ERROR;
        }
    };
    let run = match run_mission(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("mission failed: {e}");
            return if is_config_error(&e) {
                CONFIG_ERROR
            } else {
                MISSION_ERROR
            };
        }
    };
    if let Err(e) = write_run(&flags.out_dir, &cfg, &run) {
        eprintln!("error: {e}");
        return MISSION_ERROR;
    }
    let log = &run.log;
    println!(
        "q_d {:.4} -> {:.4}, min SoC {:.3}, {} landings, outputs in {}",
        log.samples[0].q_d,
        log.final_q_d(),
        log.min_soc,
        log.landings().count(),
        flags.out_dir.display()
    );
    if log.crashed {
        let t = log.samples.last().map_or(0.0, |s| s.t);
        eprintln!("crash at t = {t} s");
        return CRASH;
    }
    0
}

fn compare(name: &str, flags: &RunFlags) -> u8 {
    let Some(p) = preset(name) else {
        eprintln!("error: unknown preset '{name}' (known: {})", PRESET_NAMES.join(", "));
        return CONFIG_ERROR;
    };
    let overrides = Overrides {
        seed: flags.seed,
        duration: flags.duration,
    };
    let out = flags.out_dir.join(&p.name);
    let report = match run_experiment(&p, &out, &overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return if is_config_error(&e) {
                CONFIG_ERROR
            } else {
                MISSION_ERROR
            };
        }
    };
    for (variant, _, run) in &report.runs {
        let log = &run.log;
        println!(
            "{variant:>10}: final q_d {:.4}, min SoC {:.3}, landings {}{}",
            log.final_q_d(),
            log.min_soc,
            log.landings().count(),
            if log.crashed { ", crashed" } else { "" }
        );
    }
    println!("outputs in {}", report.out_dir.display());
    if report.unexpected_crash() {
        return CRASH;
    }
    0
}

fn validate(config: &Path) -> u8 {
    match parse_config(config) {
        Ok(_) => {
            println!("{}: ok", config.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            CONFIG_ERROR
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { CONFIG_ERROR } else { 0 });
        }
    };
    let code = match &cli.command {
        Command::Run { config, flags } => run(config, flags),
        Command::Compare { preset, flags } => compare(preset, flags),
        Command::Validate { config } => validate(config),
        Command::Presets {
            action: PresetAction::List,
        } => {
            for name in PRESET_NAMES {
                let p = preset(name).expect("listed preset exists");
                let variants: Vec<&str> = p.variants.iter().map(|v| v.name.as_str()).collect();
                println!("{name:<22} {} [{}]", p.description, variants.join(", "));
            }
            0
        }
    };
    ExitCode::from(code)
}

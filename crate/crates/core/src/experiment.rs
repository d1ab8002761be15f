//! Writing mission outputs and running preset comparisons.
//!
//! Every variant gets its own directory:
//!
//! ```text
//! <out>/<variant>/metrics.csv            t,q_d,soc,x,y,z,dist_to_charger,phase,event
//! <out>/<variant>/replans.json           one record per ergodic replan
//! <out>/<variant>/eware_audit.log        one line per energy-filter run
//! <out>/<variant>/environment_initial.csv, environment.csv, tisd.csv
//! <out>/<variant>/deficit_t<secs>.csv    deficit maps at the snapshot times
//! <out>/<variant>/config.toml            the config that produced the run
//! <out>/comparison.csv                   t, then q_d per variant
//! <out>/soc_vs_distance.csv              variant,t,dist_to_charger,soc
//! ```
//!
//! Only `replans.json` carries wall-clock numbers; everything else is a
//! pure function of the config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentPreset, MissionConfig};
use crate::error::{Error, Result};
use crate::mission::{run_mission, MissionRun, ReplanSummary};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

#[derive(Serialize)]
struct ReplanRecord<'a> {
    #[serde(flatten)]
    summary: &'a ReplanSummary,
    replan_ms: f64,
    eware_mean_ms: Option<f64>,
    eware_max_ms: Option<f64>,
}

fn replans_json(run: &MissionRun) -> Result<String> {
    let log = &run.log;
    let mut records = Vec::with_capacity(log.replans.len());
    let mut next_audit = 0;
    for (k, r) in log.replans.iter().enumerate() {
        let ms = &run.timing.eware_ms[next_audit..next_audit + r.eware_runs];
        next_audit += r.eware_runs;
        records.push(ReplanRecord {
            summary: r,
            replan_ms: run.timing.replan_ms[k],
            eware_mean_ms: (!ms.is_empty()).then(|| ms.iter().sum::<f64>() / ms.len() as f64),
            eware_max_ms: ms.iter().copied().reduce(f64::max),
        });
    }
    serde_json::to_string_pretty(&records).map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn audit_log(run: &MissionRun) -> String {
    let mut out = String::new();
    for a in &run.log.audit {
        let _ = writeln!(
            out,
            "tau={} valid={} reason={} min_soc={} terminal_distance={}",
            a.tau,
            a.valid,
            a.reason.as_deref().unwrap_or("-"),
            a.min_soc,
            a.terminal_distance
        );
    }
    out
}

fn deficit_csv(run: &MissionRun, k: usize) -> String {
    let snap = &run.log.snapshots[k];
    let spec = &run.log.initial_field.spec;
    let mut out = String::from("cell_index,x_center,y_center,deficit\n");
    for (c, d) in snap.deficits.iter().enumerate() {
        let center = spec.cell_center(c);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c,
            center[0],
            center.get(1).copied().unwrap_or(0.0),
            d
        );
    }
    out
}

/// Writes one run's files into `dir`, creating it if needed.
pub fn write_run(dir: &Path, cfg: &MissionConfig, run: &MissionRun) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join("config.toml"), &cfg.to_toml_string()?)?;
    write(&dir.join("metrics.csv"), &run.log.to_csv())?;
    write(&dir.join("replans.json"), &replans_json(run)?)?;
    write(&dir.join("eware_audit.log"), &audit_log(run))?;
    write(&dir.join("environment_initial.csv"), &run.log.initial_field.to_csv())?;
    write(&dir.join("environment.csv"), &run.log.final_field.to_csv())?;
    if let Some(tisd) = &run.log.last_tisd {
        write(&dir.join("tisd.csv"), &tisd.to_csv())?;
    }
    for (k, s) in run.log.snapshots.iter().enumerate() {
        write(&dir.join(format!("deficit_t{}.csv", s.t)), &deficit_csv(run, k))?;
    }
    Ok(())
}

/// `t` plus one `q_d_<variant>` column per run, joined on sample time.
/// Runs that ended early, or have no sample at a time, leave the cell empty.
pub fn comparison_csv(runs: &[(String, MissionRun)]) -> String {
    let key = |t: f64| (t * 1e6).round() as i64;
    let mut out = String::from("t");
    for (name, _) in runs {
        let _ = write!(out, ",q_d_{name}");
    }
    out.push('\n');
    let columns: Vec<BTreeMap<i64, f64>> = runs
        .iter()
        .map(|(_, r)| r.log.samples.iter().map(|s| (key(s.t), s.q_d)).collect())
        .collect();
    let mut times: BTreeMap<i64, f64> = BTreeMap::new();
    for (_, r) in runs {
        for s in &r.log.samples {
            times.entry(key(s.t)).or_insert(s.t);
        }
    }
    for (k, t) in times {
        let _ = write!(out, "{t}");
        for col in &columns {
            match col.get(&k) {
                Some(q) => {
                    let _ = write!(out, ",{q}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn soc_distance_csv(runs: &[(String, MissionRun)]) -> String {
    let mut out = String::from("variant,t,dist_to_charger,soc\n");
    for (name, r) in runs {
        for s in &r.log.samples {
            let _ = writeln!(out, "{},{},{},{}", name, s.t, s.dist_to_charger, s.soc);
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration: Option<f64>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    /// Variant name, its config and its run, in preset order.
    pub runs: Vec<(String, MissionConfig, MissionRun)>,
}

impl ExperimentReport {
    /// True when a variant with the energy filter enabled crashed.
    pub fn unexpected_crash(&self) -> bool {
        self.runs.iter().any(|(_, c, r)| c.eware.enabled && r.log.crashed)
    }
}

/// Runs every variant of a preset on its own thread and writes all outputs.
/// If any variant fails, the ones that finished are still written and a
/// `PARTIAL` file names the failure.
pub fn run_experiment(preset: &ExperimentPreset, out_dir: &Path, overrides: &Overrides) -> Result<ExperimentReport> {
    let configs = preset
        .variants
        .iter()
        .map(|v| {
            preset
                .variant_config(v)
                .with_overrides(overrides.seed, overrides.duration)
                .map(|c| (v.name.clone(), c))
        })
        .collect::<Result<Vec<_>>>()?;
    for (_, c) in &configs {
        c.validate()?;
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let results: Vec<Result<MissionRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|(_, c)| s.spawn(move || run_mission(c))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::InvalidParameter("mission thread panicked".into())))
            })
            .collect()
    });

    let mut runs = Vec::new();
    let mut failures = String::new();
    let mut first_error = None;
    for ((name, cfg), result) in configs.into_iter().zip(results) {
        match result {
            Ok(run) => {
                write_run(&out_dir.join(&name), &cfg, &run)?;
                runs.push((name, cfg, run));
            }
            Err(e) => {
                let _ = writeln!(failures, "{name}: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    let named: Vec<(String, MissionRun)> = runs.iter().map(|(n, _, r)| (n.clone(), r.clone())).collect();
    write(&out_dir.join("comparison.csv"), &comparison_csv(&named))?;
    write(&out_dir.join("soc_vs_distance.csv"), &soc_distance_csv(&named))?;
    let marker = out_dir.join("PARTIAL");
    if let Some(e) = first_error {
        write(&marker, &failures)?;
        return Err(e);
    }
    if marker.exists() {
        fs::remove_file(&marker).map_err(io_err(&marker))?;
    }
    Ok(ExperimentReport {
        out_dir: out_dir.to_path_buf(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    #[test]
    fn zero_duration_comparison_has_aligned_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = preset("compare-spatiostatic").unwrap();
        let overrides = Overrides {
            seed: Some(3),
            duration: Some(0.0),
        };
        let report = run_experiment(&p, dir.path(), &overrides).unwrap();
        assert_eq!(report.runs.len(), 3);
        let cmp = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        let lines: Vec<&str> = cmp.lines().collect();
        assert_eq!(lines[0], "t,q_d_clarity,q_d_uniform,q_d_lawnmower");
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 4);
        let metrics = fs::read_to_string(dir.path().join("clarity/metrics.csv")).unwrap();
        assert!(metrics.starts_with("t,q_d,soc,x,y,z,dist_to_charger,phase,event\n"));
        assert_eq!(metrics.lines().count(), 2);
        assert!(!dir.path().join("PARTIAL").exists());
        let saved = crate::config::parse_config(&dir.path().join("uniform/config.toml")).unwrap();
        assert_eq!(saved.mission.seed, 3);
    }

    #[test]
    fn early_end_leaves_blank_cells() {
        let mut a = crate::config::desk_config();
        a.mission.duration = 1.0;
        let long = run_mission(&a).unwrap();
        a.mission.duration = 0.5;
        let short = run_mission(&a).unwrap();
        let csv = comparison_csv(&[("a".into(), long), ("b".into(), short)]);
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with("1,"));
        assert!(last.ends_with(','));
    }
}

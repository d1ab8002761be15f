//! Persistent-monitoring mission loop.
//!
//! Three clocks run on one integer tick counter at the tracking rate:
//! ergodic replanning every `T_H` (and right after a recharge), the energy
//! filter every `T_E`, and tracking plus environment propagation on every
//! tick. All randomness comes from a single ChaCha8 stream seeded by the
//! config. Per tick the draw order is one normal per cell for the
//! environment step, then one normal per observed cell for measurements.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Method, MissionConfig};
use crate::control::{lift_planner_state, track_step, Reduced};
use crate::ergodic::{pto_optimize, warm_start, InitialGuess, PlannerState, PtoConfig};
use crate::error::{invalid, Result};
use crate::eware::{commit, CandidateKind, CommittedTrajectory, EwareFilter};
use crate::grid::{sensor_footprint, CellField, DomainSpec, SensorModel};
use crate::tisd::{gen_tisd, uniform_tisd, Tisd};
use crate::trajectory::Trajectory;
use crate::vehicle::{Control, QuadrotorState, SystemState};

/// `q_d = (1/N) Σ_c max(0, q̄_c − q_c)`.
pub fn mean_clarity_deficit(field: &CellField) -> f64 {
    let d = field.deficits();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Boustrophedon sweep over a planar domain, flown forward and then back
/// along the same path so the cycle closes on itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Lawnmower {
    waypoints: Vec<[f64; 2]>,
    /// Arc length at each waypoint.
    arc: Vec<f64>,
    speed: f64,
    lines: usize,
}

impl Lawnmower {
    /// Sweep lines run along x at `y = 0, s, 2s, …` up to the far edge.
    pub fn new(spec: &DomainSpec, spacing: f64, speed: f64) -> Result<Self> {
        if spec.dims() != 2 {
            return Err(invalid("lawnmower needs a planar domain"));
        }
        let (lx, ly) = (spec.lengths()[0], spec.lengths()[1]);
        if !(spacing > 0.0 && spacing <= lx.min(ly)) {
            return Err(invalid(format!(
                "lawnmower spacing {spacing} must lie in (0, {}]",
                lx.min(ly)
            )));
        }
        if !(speed > 0.0) {
            return Err(invalid("lawnmower speed must be positive"));
        }
        let lines = (ly / spacing + 1e-9).floor() as usize + 1;
        let mut forward = Vec::with_capacity(2 * lines);
        for j in 0..lines {
            let y = j as f64 * spacing;
            let (a, b) = if j % 2 == 0 { (0.0, lx) } else { (lx, 0.0) };
            forward.push([a, y]);
            forward.push([b, y]);
        }
        let mut waypoints = forward.clone();
        waypoints.extend(forward.iter().rev().skip(1));
        let mut arc = vec![0.0];
        for w in waypoints.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            arc.push(arc.last().unwrap() + d);
        }
        Ok(Self {
            waypoints,
            arc,
            speed,
            lines,
        })
    }

    pub fn sweep_lines(&self) -> usize {
        self.lines
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.waypoints
    }

    /// Duration of one full cycle.
    pub fn period(&self) -> f64 {
        self.arc.last().unwrap() / self.speed
    }

    /// Planar `(p_x, p_y, v_x, v_y)` at time `t` since the cycle start.
    pub fn state_at(&self, t: f64) -> [f64; 4] {
        let length = *self.arc.last().unwrap();
        let s = (t * self.speed).rem_euclid(length);
        let seg = match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => i.min(self.waypoints.len() - 2),
            Err(i) => i - 1,
        };
        // skip zero-length joints
        let mut seg = seg;
        while self.arc[seg + 1] - self.arc[seg] <= 0.0 {
            seg += 1;
        }
        let (a, b) = (self.waypoints[seg], self.waypoints[seg + 1]);
        let len = self.arc[seg + 1] - self.arc[seg];
        let w = (s - self.arc[seg]) / len;
        let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        [
            a[0] + w * (b[0] - a[0]),
            a[1] + w * (b[1] - a[1]),
            dir[0] * self.speed,
            dir[1] * self.speed,
        ]
    }

    /// Reference over `[t0, t0 + duration]` with the cycle started at
    /// `origin`.
    pub fn sample(&self, t0: f64, duration: f64, dt: f64, origin: f64) -> Result<Trajectory> {
        let n = (duration / dt).round() as usize;
        let states = (0..=n)
            .map(|k| DVector::from_row_slice(&self.state_at(t0 + k as f64 * dt - origin)))
            .collect();
        Trajectory::new(t0, dt, states, vec![DVector::zeros(2); n])
    }
}

/// One full lawnmower cycle sampled at `dt`.
pub fn lawnmower_path(spec: &DomainSpec, spacing: f64, speed: f64, dt: f64) -> Result<Trajectory> {
    let l = Lawnmower::new(spec, spacing, speed)?;
    l.sample(0.0, (l.period() / dt).floor() * dt, dt, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    B2b,
    Charging,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::B2b => "b2b",
            Phase::Charging => "charging",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q_d: f64,
    pub soc: f64,
    pub position: [f64; 3],
    pub dist_to_charger: f64,
    pub phase: Phase,
    /// Events since the previous sample, `;`-separated.
    pub event: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Landing,
    Recharged,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub soc: f64,
    pub dist_to_charger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplanSummary {
    pub t: f64,
    /// `periodic` or `recharge`.
    pub trigger: &'static str,
    pub method: &'static str,
    pub ergodic_before: Option<f64>,
    pub ergodic_after: Option<f64>,
    pub objective_before: Option<f64>,
    pub objective_after: Option<f64>,
    pub iterations: usize,
    pub targets_satisfied: bool,
    /// Energy-filter runs until the next replan.
    pub eware_runs: usize,
    pub eware_accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub tau: f64,
    pub valid: bool,
    pub reason: Option<String>,
    pub min_soc: f64,
    pub terminal_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub deficits: Vec<f64>,
}

/// Deterministic mission record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub log_period: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub replans: Vec<ReplanSummary>,
    pub audit: Vec<AuditEntry>,
    pub snapshots: Vec<Snapshot>,
    pub min_soc: f64,
    pub crashed: bool,
    pub initial_field: CellField,
    pub final_field: CellField,
    pub last_tisd: Option<Tisd>,
}

impl MetricsLog {
    pub fn landings(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Landing)
    }

    pub fn final_q_d(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.q_d)
    }

    /// Mean `q_d` over samples with `t ≥ from`.
    pub fn mean_q_d_after(&self, from: f64) -> f64 {
        let tail: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.t >= from - 1e-9)
            .map(|s| s.q_d)
            .collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// CSV with header `t,q_d,soc,x,y,z,dist_to_charger,phase,event`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,q_d,soc,x,y,z,dist_to_charger,phase,event\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.t,
                s.q_d,
                s.soc,
                s.position[0],
                s.position[1],
                s.position[2],
                s.dist_to_charger,
                s.phase.as_str(),
                s.event
            );
        }
        out
    }
}

/// Wall-clock measurements, kept apart from the deterministic log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timing {
    /// Build plus validate time of each energy-filter run, aligned with
    /// [`MetricsLog::audit`].
    pub eware_ms: Vec<f64>,
    /// PTO time per replan, aligned with [`MetricsLog::replans`].
    pub replan_ms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MissionRun {
    pub log: MetricsLog,
    pub timing: Timing,
}

struct Mission<'a> {
    cfg: &'a MissionConfig,
    spec: DomainSpec,
    sensor: SensorModel,
    pto: PtoConfig,
    filter: EwareFilter,
    lawnmower: Option<Lawnmower>,
    lawn_origin: f64,
    field: CellField,
    rng: ChaCha8Rng,
    chi: SystemState,
    committed: CommittedTrajectory,
    reference: Option<Trajectory>,
    charging_until: Option<usize>,
    dt: f64,
    log: MetricsLog,
    timing: Timing,
    pending: Vec<String>,
}

impl Mission<'_> {
    fn charger(&self) -> Vector3<f64> {
        self.filter.config().b2b.charger_position()
    }

    fn distance(&self) -> f64 {
        (self.chi.position() - self.charger()).norm()
    }

    fn phase(&self, t: f64) -> Phase {
        if self.charging_until.is_some() {
            return Phase::Charging;
        }
        if !self.cfg.eware.enabled {
            return Phase::Explore;
        }
        let c = &self.committed.trajectory;
        match c.kind {
            CandidateKind::Hold => Phase::Charging,
            CandidateKind::Candidate if t > c.switch_time + 1e-9 => Phase::B2b,
            CandidateKind::Candidate => Phase::Explore,
        }
    }

    fn record(&mut self, t: f64) {
        let p = self.chi.position();
        let s = Sample {
            t,
            q_d: mean_clarity_deficit(&self.field),
            soc: self.chi.soc,
            position: [p.x, p.y, p.z],
            dist_to_charger: self.distance(),
            phase: self.phase(t),
            event: self.pending.join(";"),
        };
        self.pending.clear();
        self.log.samples.push(s);
    }

    fn event(&mut self, t: f64, kind: EventKind) {
        let name = match kind {
            EventKind::Landing => "landing",
            EventKind::Recharged => "recharged",
            EventKind::Crash => "crash",
        };
        self.pending.push(name.to_string());
        self.log.events.push(Event {
            t,
            kind,
            soc: self.chi.soc,
            dist_to_charger: self.distance(),
        });
    }

    fn replan(&mut self, t: f64, trigger: &'static str) -> Result<()> {
        let started = Instant::now();
        let method = self.cfg.ergodic.method;
        let mut summary = ReplanSummary {
            t,
            trigger,
            method: method.as_str(),
            ergodic_before: None,
            ergodic_after: None,
            objective_before: None,
            objective_after: None,
            iterations: 0,
            targets_satisfied: false,
            eware_runs: 0,
            eware_accepted: 0,
        };
        let reference = if let Some(l) = &self.lawnmower {
            if trigger == "recharge" {
                self.lawn_origin = t;
            }
            l.sample(t, self.pto.horizon, self.pto.dt, self.lawn_origin)?
        } else {
            let tisd = match method {
                Method::ClarityTisd => gen_tisd(&self.field, self.cfg.ergodic.epsilon)?,
                _ => uniform_tisd(&self.spec),
            };
            summary.targets_satisfied = tisd.targets_satisfied;
            let p = self.chi.position();
            let v = self.chi.velocity();
            let lengths = self.spec.lengths();
            let x0 = PlannerState {
                position: vec![p.x.clamp(0.0, lengths[0]), p.y.clamp(0.0, lengths[1])],
                velocity: vec![v.x, v.y],
            };
            let guess = match (&self.reference, trigger) {
                (Some(prev), "periodic") => {
                    warm_start(prev, t, &self.pto).map_or(InitialGuess::Spiral, InitialGuess::Controls)
                }
                _ => InitialGuess::Spiral,
            };
            let out = pto_optimize(&self.spec, x0, &tisd, &self.pto, guess, t)?;
            summary.ergodic_before = Some(out.initial.ergodic);
            summary.ergodic_after = Some(out.last.ergodic);
            summary.objective_before = Some(out.initial.total());
            summary.objective_after = Some(out.last.total());
            summary.iterations = out.iterations;
            self.log.last_tisd = Some(tisd);
            out.trajectory
        };
        self.reference = Some(reference);
        self.log.replans.push(summary);
        self.timing.replan_ms.push(started.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }

    fn run_eware(&mut self, t: f64) -> Result<()> {
        let reference = self
            .reference
            .as_ref()
            .ok_or_else(|| invalid("energy filter ran before any plan"))?;
        let started = Instant::now();
        let cand = self.filter.build_candidate(&self.chi, reference, t)?;
        let verdict = self.filter.validate_candidate(&cand);
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        self.committed = commit(&verdict, cand, self.committed.clone(), t);
        self.log.audit.push(AuditEntry {
            tau: t,
            valid: verdict.valid,
            reason: verdict.reason.map(|r| r.to_string()),
            min_soc: verdict.min_soc,
            terminal_distance: verdict.terminal_distance,
        });
        self.timing.eware_ms.push(elapsed);
        if let Some(r) = self.log.replans.last_mut() {
            r.eware_runs += 1;
            r.eware_accepted += verdict.valid as usize;
        }
        Ok(())
    }

    /// Control for tick `i` at time `t`.
    fn control(&self, i: usize, t: f64) -> Result<Control> {
        if self.cfg.eware.enabled {
            let c = &self.committed.trajectory;
            let k = i.saturating_sub((c.start / self.dt).round() as usize);
            return Ok(self.filter.policy(c, k, &self.chi)?.control);
        }
        let reference = self
            .reference
            .as_ref()
            .ok_or_else(|| invalid("no reference to track"))?;
        let tracker = self.filter.tracker();
        let h = self.cfg.vehicle.altitude;
        let refs: Vec<Reduced> = (0..=tracker.steps())
            .map(|k| lift_planner_state(reference.state_at(t + k as f64 * self.dt).as_slice(), h))
            .collect();
        Ok(track_step(&self.chi.robot, &refs, None, tracker)?.control)
    }
}

/// Tick time with float noise removed, so logged times print cleanly.
fn clock(i: usize, dt: f64) -> f64 {
    (i as f64 * dt * 1e9).round() / 1e9
}

fn ticks(duration: f64, dt: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize
}

/// Runs a mission end to end.
pub fn run_mission(cfg: &MissionConfig) -> Result<MissionRun> {
    cfg.validate()?;
    let spec = cfg.domain_spec()?;
    let field = cfg.generate_field()?;
    // the field generator consumed its own stream; the mission continues
    // from a fresh stream derived from the same seed
    let rng = ChaCha8Rng::seed_from_u64(cfg.mission.seed.wrapping_add(1));
    let quad = cfg.quadrotor();
    let battery = cfg.battery();
    let filter = EwareFilter::new(&cfg.eware_config(), &quad, &battery)?;
    let dt = filter.dt();
    let charger = filter.config().b2b.charger_position();
    let chi = SystemState {
        robot: QuadrotorState::hover_at(charger).to_vector(),
        soc: 1.0,
    };
    let hold = filter.hold(&chi, 0.0)?;
    let lawnmower = match cfg.ergodic.method {
        Method::Lawnmower => Some(Lawnmower::new(
            &spec,
            cfg.ergodic.lawnmower_spacing,
            cfg.ergodic.lawnmower_speed,
        )?),
        _ => None,
    };

    let mut m = Mission {
        cfg,
        sensor: cfg.sensor()?,
        pto: cfg.pto(),
        spec,
        filter,
        lawnmower,
        lawn_origin: 0.0,
        log: MetricsLog {
            log_period: cfg.mission.log_period,
            samples: Vec::new(),
            events: Vec::new(),
            replans: Vec::new(),
            audit: Vec::new(),
            snapshots: Vec::new(),
            min_soc: 1.0,
            crashed: false,
            initial_field: field.clone(),
            final_field: field.clone(),
            last_tisd: None,
        },
        field,
        rng,
        chi,
        committed: CommittedTrajectory {
            trajectory: hold,
            commit_time: 0.0,
        },
        reference: None,
        charging_until: None,
        dt,
        timing: Timing::default(),
        pending: Vec::new(),
    };

    let n_ticks = ticks(cfg.mission.duration, dt);
    let per_plan = ticks(cfg.ergodic.horizon, dt);
    let per_filter = ticks(cfg.eware.period, dt);
    let per_log = ticks(cfg.mission.log_period, dt);
    let dwell = (cfg.mission.recharge_dwell / dt - 1e-9).ceil().max(0.0) as usize;
    let mut snap_ticks: Vec<usize> = cfg
        .mission
        .snapshot_times
        .iter()
        .map(|t| (t / dt).round() as usize)
        .filter(|k| *k <= n_ticks)
        .collect();
    snap_ticks.sort_unstable();
    snap_ticks.dedup();
    let snap = |m: &mut Mission, k: usize| {
        if snap_ticks.binary_search(&k).is_ok() {
            m.log.snapshots.push(Snapshot {
                t: clock(k, dt),
                deficits: m.field.deficits(),
            });
        }
    };

    m.record(0.0);
    snap(&mut m, 0);
    let tol = cfg.eware.position_tolerance;
    for i in 0..n_ticks {
        let t = clock(i, dt);
        let mut replanned = false;
        if m.charging_until.is_some_and(|end| i >= end) {
            m.charging_until = None;
            m.event(t, EventKind::Recharged);
            m.replan(t, "recharge")?;
            m.committed = CommittedTrajectory {
                trajectory: m.filter.hold(&m.chi, t)?,
                commit_time: t,
            };
            replanned = true;
        }
        let charging = m.charging_until.is_some();
        if !charging && !replanned && i % per_plan == 0 {
            m.replan(t, "periodic")?;
        }
        if !charging && cfg.eware.enabled && i % per_filter == 0 {
            m.run_eware(t)?;
        }

        let observed = {
            let p = m.chi.position();
            sensor_footprint(&[p.x, p.y], &m.spec, &m.sensor)
        };
        if !charging {
            let u = m.control(i, t)?;
            m.chi = m.chi.step(&u, &quad, &battery, dt)?;
        }
        m.field.step_environment(dt, &mut m.rng)?;
        let _measurements = m.field.measure(&observed, &mut m.rng);
        m.field.update_clarity(&observed, dt)?;

        let t_next = clock(i + 1, dt);
        m.log.min_soc = m.log.min_soc.min(m.chi.soc);
        let mut stop = false;
        let mut landed = false;
        if !charging {
            let c = &m.committed.trajectory;
            landed = cfg.eware.enabled
                && c.kind == CandidateKind::Candidate
                && t_next > c.switch_time + 1e-9
                && m.filter.config().b2b.arrived(&m.chi.position(), &m.chi.velocity());
            if landed {
                m.event(t_next, EventKind::Landing);
            } else if m.chi.soc <= 0.0 && m.distance() > tol {
                m.event(t_next, EventKind::Crash);
                m.log.crashed = true;
                stop = true;
            }
        }
        // landing rows show the arrival state, before the battery swap
        if stop || landed || (i + 1) % per_log == 0 {
            m.record(t_next);
        }
        if landed {
            m.chi = SystemState {
                robot: QuadrotorState::hover_at(charger).to_vector(),
                soc: 1.0,
            };
            m.charging_until = Some(i + 1 + dwell);
        }
        snap(&mut m, i + 1);
        if stop {
            break;
        }
    }
    m.log.final_field = m.field.clone();
    Ok(MissionRun {
        log: m.log,
        timing: m.timing,
    })
}

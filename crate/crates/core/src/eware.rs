//! Energy-aware filter over candidate trajectories.
//!
//! A candidate follows the ergodic reference for `T_N` and then a
//! back-to-base reference for `T_B`. It is produced by a single closed-loop
//! rollout of the nonlinear quadrotor and battery, and it is committed only
//! if the battery stays above the reserve and the rollout ends at the charger.
//! The low-level controller then runs the same policy against the committed
//! references, so following a committed trajectory reproduces its rollout.

use std::fmt;

use crate::control::{
    lift_planner_state, steps_of, track_step, B2bConfig, B2bSolver, LqTracker, Reduced, TrackCommand, TrackingConfig,
};
use crate::error::{invalid, Error, Result};
use crate::trajectory::Trajectory;
use crate::vehicle::{BatteryParams, Control, QuadrotorParams, SystemState};

#[derive(Debug, Clone, PartialEq)]
pub struct EwareConfig {
    pub tracking: TrackingConfig,
    pub b2b: B2bConfig,
    /// Minimum admissible SoC at every sample.
    pub soc_reserve: f64,
    /// Flight altitude used to lift planar references.
    pub altitude: f64,
}

impl Default for EwareConfig {
    fn default() -> Self {
        Self {
            tracking: TrackingConfig::default(),
            b2b: B2bConfig::default(),
            soc_reserve: 0.005,
            altitude: 1.0,
        }
    }
}

impl EwareConfig {
    pub fn validate(&self) -> Result<()> {
        self.tracking.validate()?;
        self.b2b.validate(self.tracking.dt)?;
        if !(0.0..1.0).contains(&self.soc_reserve) {
            return Err(invalid("SoC reserve must lie in [0, 1)"));
        }
        if !self.altitude.is_finite() {
            return Err(invalid("altitude must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    /// Hover at the charger; used before the first commit and after a
    /// recharge.
    Hold,
    /// Ergodic segment followed by a back-to-base segment.
    Candidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrajectory {
    pub kind: CandidateKind,
    /// `τ_j`.
    pub start: f64,
    /// `τ_j + T_N`.
    pub switch_time: f64,
    /// `τ_j + T_N + T_B`.
    pub end_time: f64,
    pub dt: f64,
    pub states: Vec<SystemState>,
    pub controls: Vec<Control>,
    /// Number of rollout steps whose command hit a rotor bound.
    pub saturated_steps: usize,
    switch_index: usize,
    window: usize,
    ergodic_refs: Vec<Reduced>,
    b2b_refs: Vec<Reduced>,
    b2b_controls: Vec<Control>,
}

impl CandidateTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn switch_index(&self) -> usize {
        self.switch_index
    }

    /// Index of the sample at or before `t`.
    pub fn index_at(&self, t: f64) -> usize {
        (((t - self.start) / self.dt) + 1e-9).floor().max(0.0) as usize
    }

    /// The b2b reference (reduced states) the candidate switches to.
    pub fn b2b_reference(&self) -> &[Reduced] {
        &self.b2b_refs[..self.len() - self.switch_index]
    }

    /// Reference window used by the policy at step `i`. Past the end the
    /// window rests on the charger state.
    fn window(&self, i: usize) -> (&[Reduced], Option<&[Control]>) {
        let n = self.window;
        if i < self.switch_index {
            (&self.ergodic_refs[i..i + n + 1], None)
        } else {
            let j = (i - self.switch_index).min(self.len() - 1 - self.switch_index);
            (&self.b2b_refs[j..j + n + 1], Some(&self.b2b_controls[j..j + n]))
        }
    }
}

/// Last validated candidate and when it was committed.
#[derive(Debug, Clone, PartialEq)]
pub struct CommittedTrajectory {
    pub trajectory: CandidateTrajectory,
    pub commit_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Energy,
    Arrival,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Energy => "energy",
            RejectReason::Arrival => "arrival",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub valid: bool,
    /// First violated condition.
    pub reason: Option<RejectReason>,
    pub min_soc: f64,
    pub terminal_distance: f64,
    pub terminal_speed: f64,
}

/// Candidate builder holding the precomputed tracking and b2b gains.
#[derive(Debug, Clone)]
pub struct EwareFilter {
    cfg: EwareConfig,
    quad: QuadrotorParams,
    battery: BatteryParams,
    tracker: LqTracker,
    b2b: B2bSolver,
    n_track: usize,
    n_b2b: usize,
}

impl EwareFilter {
    pub fn new(cfg: &EwareConfig, quad: &QuadrotorParams, battery: &BatteryParams) -> Result<Self> {
        cfg.validate()?;
        battery.validate()?;
        let tracker = LqTracker::new(quad, &cfg.tracking)?;
        let b2b = B2bSolver::new(quad, &cfg.b2b, &cfg.tracking)?;
        Ok(Self {
            n_track: cfg.tracking.steps(),
            n_b2b: steps_of(cfg.b2b.horizon, cfg.tracking.dt, "b2b horizon")?,
            cfg: cfg.clone(),
            quad: quad.clone(),
            battery: battery.clone(),
            tracker,
            b2b,
        })
    }

    pub fn config(&self) -> &EwareConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &LqTracker {
        &self.tracker
    }

    pub fn dt(&self) -> f64 {
        self.cfg.tracking.dt
    }

    /// Builds the candidate starting at `chi` at time `tau` from a planar
    /// `(p, v)` ergodic reference that must cover `[τ, τ + T_N]`.
    pub fn build_candidate(&self, chi: &SystemState, ergodic: &Trajectory, tau: f64) -> Result<CandidateTrajectory> {
        let dt = self.dt();
        let t_n = self.cfg.tracking.horizon;
        let slack = 1e-9 * (1.0 + tau.abs());
        if ergodic.t0 > tau + slack || ergodic.end_time() < tau + t_n - slack {
            let available = ((ergodic.end_time() - tau) / dt).floor().max(0.0) as usize;
            return Err(Error::ReferenceUnderrun {
                start: ((tau - ergodic.t0) / ergodic.dt).round().max(0.0) as usize,
                needed: self.n_track + 1,
                available,
            });
        }
        if ergodic.state_dim() != 4 {
            return Err(invalid("ergodic reference must be a planar (p, v) trajectory"));
        }
        let h = self.cfg.altitude;
        let ergodic_refs: Vec<Reduced> = (0..=2 * self.n_track)
            .map(|k| lift_planner_state(ergodic.state_at(tau + k as f64 * dt).as_slice(), h))
            .collect();
        let b2b_start = ergodic_refs[self.n_track];
        self.rollout(CandidateKind::Candidate, chi, tau, ergodic_refs, &b2b_start)
    }

    /// Hover-at-charger trajectory of the same length as a candidate.
    pub fn hold(&self, chi: &SystemState, tau: f64) -> Result<CandidateTrajectory> {
        let c = self.cfg.b2b.charger_state();
        self.rollout(CandidateKind::Hold, chi, tau, vec![c; 2 * self.n_track + 1], &c)
    }

    fn rollout(
        &self,
        kind: CandidateKind,
        chi: &SystemState,
        tau: f64,
        ergodic_refs: Vec<Reduced>,
        b2b_start: &Reduced,
    ) -> Result<CandidateTrajectory> {
        if chi.robot.iter().any(|v| !v.is_finite()) || !chi.soc.is_finite() {
            return Err(Error::NonFinite("candidate start state".into()));
        }
        let dt = self.dt();
        let switch_time = tau + self.n_track as f64 * dt;
        let plan = self.b2b.solve(b2b_start, switch_time)?;
        let charger = self.cfg.b2b.charger_state();
        let mut b2b_refs: Vec<Reduced> = plan
            .states
            .iter()
            .map(|z| Reduced::from_column_slice(z.as_slice()))
            .collect();
        b2b_refs.resize(self.n_b2b + 1 + self.n_track, charger);
        let mut b2b_controls: Vec<Control> = plan
            .controls
            .iter()
            .map(|u| Control::from_column_slice(u.as_slice()))
            .collect();
        b2b_controls.resize(self.n_b2b + self.n_track, Control::zeros());

        let steps = self.n_track + self.n_b2b;
        let mut cand = CandidateTrajectory {
            kind,
            start: tau,
            switch_time,
            end_time: tau + steps as f64 * dt,
            dt,
            states: Vec::with_capacity(steps + 1),
            controls: Vec::with_capacity(steps),
            saturated_steps: 0,
            switch_index: self.n_track,
            window: self.n_track,
            ergodic_refs,
            b2b_refs,
            b2b_controls,
        };
        // placeholder so `window` sees the final length during the rollout
        cand.states.resize(steps + 1, *chi);
        let mut state = *chi;
        for i in 0..steps {
            let cmd = self.policy(&cand, i, &state)?;
            cand.saturated_steps += cmd.saturated as usize;
            cand.controls.push(cmd.control);
            state = state.step(&cmd.control, &self.quad, &self.battery, dt)?;
            cand.states[i + 1] = state;
        }
        Ok(cand)
    }

    /// Control at step `i` of a candidate for the current robot state.
    pub fn policy(&self, cand: &CandidateTrajectory, i: usize, state: &SystemState) -> Result<TrackCommand> {
        let (refs, u_ref) = cand.window(i);
        track_step(&state.robot, refs, u_ref, &self.tracker)
    }

    /// Energy then arrival check.
    pub fn validate_candidate(&self, cand: &CandidateTrajectory) -> Verdict {
        validate_candidate(cand, &self.cfg.b2b, self.cfg.soc_reserve)
    }
}

/// Valid iff every sample keeps `soc ≥ reserve` and the last sample lies in
/// the charger's arrival ball.
pub fn validate_candidate(cand: &CandidateTrajectory, b2b: &B2bConfig, reserve: f64) -> Verdict {
    let min_soc = cand.states.iter().map(|s| s.soc).fold(f64::INFINITY, f64::min);
    let last = cand.states.last().expect("candidate has samples");
    let terminal_distance = (last.position() - b2b.charger_position()).norm();
    let terminal_speed = last.velocity().norm();
    let reason = if min_soc < reserve {
        Some(RejectReason::Energy)
    } else if !b2b.arrived(&last.position(), &last.velocity()) {
        Some(RejectReason::Arrival)
    } else {
        None
    };
    Verdict {
        valid: reason.is_none(),
        reason,
        min_soc,
        terminal_distance,
        terminal_speed,
    }
}

/// The candidate if it passed validation, otherwise the previous commitment.
pub fn commit(
    verdict: &Verdict,
    cand: CandidateTrajectory,
    previous: CommittedTrajectory,
    time: f64,
) -> CommittedTrajectory {
    if verdict.valid {
        CommittedTrajectory {
            trajectory: cand,
            commit_time: time,
        }
    } else {
        previous
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::QuadrotorState;
    use nalgebra::{DVector, Vector3};

    fn filter(cfg: &EwareConfig) -> EwareFilter {
        EwareFilter::new(cfg, &QuadrotorParams::default(), &BatteryParams::default()).unwrap()
    }

    fn at(x: f64, y: f64, soc: f64) -> SystemState {
        SystemState {
            robot: QuadrotorState::hover_at(Vector3::new(x, y, 1.0)).to_vector(),
            soc,
        }
    }

    fn constant_reference(x: f64, y: f64, t0: f64, duration: f64) -> Trajectory {
        let n = (duration / 0.2).round() as usize;
        let states = vec![DVector::from_vec(vec![x, y, 0.0, 0.0]); n + 1];
        Trajectory::new(t0, 0.2, states, vec![DVector::zeros(2); n]).unwrap()
    }

    #[test]
    fn paper_durations() {
        let cfg = EwareConfig {
            b2b: B2bConfig {
                horizon: 10.0,
                ..B2bConfig::default()
            },
            ..EwareConfig::default()
        };
        let f = filter(&cfg);
        let cand = f
            .build_candidate(&at(0.5, 0.5, 1.0), &constant_reference(0.5, 0.5, 0.0, 10.0), 0.0)
            .unwrap();
        assert!((cand.end_time - cand.start - 12.0).abs() < 1e-9);
        assert_eq!(cand.len(), 241);
        assert_eq!(cand.dt, 0.05);
    }

    #[test]
    fn stationary_at_charger() {
        let cfg = EwareConfig::default();
        let f = filter(&cfg);
        let chi = at(0.0, 0.0, 1.0);
        let cand = f
            .build_candidate(&chi, &constant_reference(0.0, 0.0, 0.0, 10.0), 0.0)
            .unwrap();
        let hover = QuadrotorParams::default().hover_control();
        let rate = crate::vehicle::battery_rate(1.0, &hover, &BatteryParams::default());
        for (i, s) in cand.states.iter().enumerate() {
            assert!((s.position() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
            assert!((s.soc - (1.0 + rate * cand.dt * i as f64)).abs() < 1e-9);
        }
        assert!(f.validate_candidate(&cand).valid);
    }

    #[test]
    fn single_rollout_is_continuous_and_replayable() {
        let f = filter(&EwareConfig::default());
        let reference = {
            let n = 50;
            let states = (0..=n)
                .map(|k| DVector::from_vec(vec![0.5 + 0.01 * k as f64, 0.5, 0.05, 0.0]))
                .collect();
            Trajectory::new(0.0, 0.2, states, vec![DVector::zeros(2); n]).unwrap()
        };
        let chi = at(0.5, 0.5, 0.9);
        let cand = f.build_candidate(&chi, &reference, 1.0).unwrap();
        let quad = QuadrotorParams::default();
        let bat = BatteryParams::default();
        let mut s = chi;
        for i in 0..cand.controls.len() {
            let cmd = f.policy(&cand, i, &s).unwrap();
            assert_eq!(cmd.control, cand.controls[i]);
            s = s.step(&cmd.control, &quad, &bat, cand.dt).unwrap();
            assert_eq!(s, cand.states[i + 1]);
        }
        let k = cand.switch_index();
        assert_eq!(
            cand.b2b_reference()[0],
            lift_planner_state(reference.state_at(1.0 + 2.0).as_slice(), 1.0)
        );
        assert!(k > 0 && k < cand.len());
    }

    #[test]
    fn underrun_is_an_error() {
        let f = filter(&EwareConfig::default());
        let short = constant_reference(0.5, 0.5, 0.0, 1.0);
        assert!(matches!(
            f.build_candidate(&at(0.5, 0.5, 1.0), &short, 0.0),
            Err(Error::ReferenceUnderrun { .. })
        ));
    }

    #[test]
    fn verdict_reasons() {
        let f = filter(&EwareConfig::default());
        let near = f
            .build_candidate(&at(0.3, 0.2, 1.0), &constant_reference(0.3, 0.2, 0.0, 10.0), 0.0)
            .unwrap();
        let v = f.validate_candidate(&near);
        assert!(v.valid && v.reason.is_none(), "{v:?}");

        let low = f
            .build_candidate(&at(0.3, 0.2, 0.02), &constant_reference(0.3, 0.2, 0.0, 10.0), 0.0)
            .unwrap();
        assert_eq!(f.validate_candidate(&low).reason, Some(RejectReason::Energy));

        // a half-second b2b tail cannot return from the far corner
        let cfg = EwareConfig {
            b2b: B2bConfig {
                horizon: 0.5,
                ..B2bConfig::default()
            },
            ..EwareConfig::default()
        };
        let f = filter(&cfg);
        let far = f
            .build_candidate(&at(2.0, 2.0, 1.0), &constant_reference(2.0, 2.0, 0.0, 10.0), 0.0)
            .unwrap();
        let v = f.validate_candidate(&far);
        assert_eq!(v.reason, Some(RejectReason::Arrival));
        assert_eq!(v.reason.unwrap().to_string(), "arrival");
    }

    #[test]
    fn commit_keeps_previous_on_rejection() {
        let f = filter(&EwareConfig::default());
        let hold = f.hold(&at(0.0, 0.0, 1.0), 0.0).unwrap();
        assert_eq!(hold.kind, CandidateKind::Hold);
        assert!(f.validate_candidate(&hold).valid);
        let prev = CommittedTrajectory {
            trajectory: hold,
            commit_time: 0.0,
        };
        let cand = f
            .build_candidate(&at(0.3, 0.2, 0.02), &constant_reference(0.3, 0.2, 0.0, 10.0), 2.0)
            .unwrap();
        let v = f.validate_candidate(&cand);
        let once = commit(&v, cand.clone(), prev.clone(), 2.0);
        assert_eq!(once, prev);
        let twice = commit(&v, cand, once.clone(), 4.0);
        assert_eq!(twice, prev);

        let good = f
            .build_candidate(&at(0.3, 0.2, 1.0), &constant_reference(0.3, 0.2, 0.0, 10.0), 6.0)
            .unwrap();
        let v = f.validate_candidate(&good);
        let next = commit(&v, good.clone(), twice, 6.0);
        assert_eq!(next.trajectory, good);
        assert_eq!(next.commit_time, 6.0);
    }
}

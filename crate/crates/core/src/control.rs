//! Linear-quadratic tracking on the reduced quadrotor model.
//!
//! The 13-state nonlinear model is linearized about hover and reduced to 12
//! states `z = [r, φ, v, ω]`, where `φ = q_v / q_s` are Rodrigues parameters
//! of the attitude. Both the short-horizon tracker and the back-to-base
//! solver are finite-horizon LQ problems on the discretized pair; their
//! Riccati gains do not depend on the reference and are computed once.
//! Controls are rotor thrust offsets `δu = u − u_hover`.

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, SVector, Vector3, Vector4};

use crate::error::{invalid, Error, Result};
use crate::trajectory::Trajectory;
use crate::vehicle::{
    quadrotor_dynamics, quadrotor_jacobians, Control, QuadrotorParams, StateVector, OMEGA, POS, QUAT, VEL,
};

pub type Reduced = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Mat12x4 = SMatrix<f64, 12, 4>;

/// Continuous-time linearization about a hover equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Full 13-state Jacobians.
    pub full_a: SMatrix<f64, 13, 13>,
    pub full_b: SMatrix<f64, 13, 4>,
    /// Reduced 12-state pair.
    pub a: Mat12,
    pub b: Mat12x4,
}

/// Zero-order-hold discretization of a [`LinearModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a: Mat12,
    pub b: Mat12x4,
    pub dt: f64,
}

pub fn linearize(x_eq: &StateVector, u_eq: &Control, params: &QuadrotorParams) -> Result<LinearModel> {
    let drift = quadrotor_dynamics(x_eq, u_eq, params).norm();
    if drift > 1e-8 {
        return Err(invalid(format!(
            "linearization point is not an equilibrium (‖ẋ‖ = {drift:e})"
        )));
    }
    let q: Vector4<f64> = x_eq.fixed_rows::<4>(QUAT).into();
    if !(q[0].abs() > 1e-9) {
        return Err(Error::Singular("attitude reduction needs a nonzero scalar part".into()));
    }
    let (full_a, full_b) = quadrotor_jacobians(x_eq, u_eq, params);
    let mut e = SMatrix::<f64, 13, 12>::zeros();
    e.fixed_view_mut::<3, 3>(POS, 0).fill_with_identity();
    e.fixed_view_mut::<4, 3>(QUAT, 3)
        .copy_from(&(crate::vehicle::quat_left(&q) * crate::vehicle::quat_embed()));
    e.fixed_view_mut::<3, 3>(VEL, 6).fill_with_identity();
    e.fixed_view_mut::<3, 3>(OMEGA, 9).fill_with_identity();
    Ok(LinearModel {
        full_a,
        full_b,
        a: e.transpose() * full_a * e,
        b: e.transpose() * full_b,
    })
}

impl LinearModel {
    /// Hover linearization at the origin.
    pub fn hover(params: &QuadrotorParams) -> Result<Self> {
        let x = crate::vehicle::QuadrotorState::hover_at(Vector3::zeros()).to_vector();
        linearize(&x, &params.hover_control(), params)
    }

    /// Series form of the exact discretization, truncated where RK4 would
    /// truncate: `A_d = Σ_{n≤4} (A dt)^n / n!`.
    pub fn discretize(&self, dt: f64) -> DiscreteModel {
        let ad = self.a * dt;
        let mut a_d = Mat12::identity();
        let mut phi = Mat12::identity() * dt;
        let mut term = Mat12::identity();
        for n in 1..=4 {
            term = term * ad / n as f64;
            a_d += term;
            if n < 4 {
                phi += term * dt / (n + 1) as f64;
            }
        }
        DiscreteModel {
            a: a_d,
            b: phi * self.b,
            dt,
        }
    }
}

/// Rank of `[B, AB, …, A¹¹B]`.
pub fn controllability_rank(a: &Mat12, b: &Mat12x4) -> usize {
    let mut c = DMatrix::zeros(12, 48);
    let mut block = *b;
    for i in 0..12 {
        c.view_mut((0, 4 * i), (12, 4)).copy_from(&block);
        block = a * block;
    }
    let sv = c.svd(false, false).singular_values;
    let tol = sv.max() * 1e-9;
    sv.iter().filter(|s| **s > tol).count()
}

/// Reduced coordinates of a full state. `q` and `−q` give the same `φ`.
pub fn reduce_state(x: &StateVector) -> Result<Reduced> {
    let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into();
    if !(q[0].abs() > 1e-9) {
        return Err(Error::Singular("attitude at 180° has no Rodrigues parameters".into()));
    }
    let mut z = Reduced::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(POS));
    z.fixed_rows_mut::<3>(3)
        .copy_from(&(Vector3::new(q[1], q[2], q[3]) / q[0]));
    z.fixed_rows_mut::<3>(6).copy_from(&x.fixed_rows::<3>(VEL));
    z.fixed_rows_mut::<3>(9).copy_from(&x.fixed_rows::<3>(OMEGA));
    Ok(z)
}

/// Inverse of [`reduce_state`] with `q = [1; φ] / √(1 + ‖φ‖²)`.
pub fn expand_state(z: &Reduced) -> StateVector {
    let phi: Vector3<f64> = z.fixed_rows::<3>(3).into();
    let q = Vector4::new(1.0, phi.x, phi.y, phi.z) / (1.0 + phi.norm_squared()).sqrt();
    let mut x = StateVector::zeros();
    x.fixed_rows_mut::<3>(POS).copy_from(&z.fixed_rows::<3>(0));
    x.fixed_rows_mut::<4>(QUAT).copy_from(&q);
    x.fixed_rows_mut::<3>(VEL).copy_from(&z.fixed_rows::<3>(6));
    x.fixed_rows_mut::<3>(OMEGA).copy_from(&z.fixed_rows::<3>(9));
    x
}

/// Level, non-rotating reduced state at `altitude` from a planar
/// `(p_x, p_y, v_x, v_y)` planner state.
pub fn lift_planner_state(x: &[f64], altitude: f64) -> Reduced {
    let mut z = Reduced::zeros();
    z[0] = x[0];
    z[1] = x[1];
    z[2] = altitude;
    z[6] = x[2];
    z[7] = x[3];
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingConfig {
    /// Diagonal of `Q` over `[r, φ, v, ω]`.
    pub state_weight: [f64; 12],
    /// Diagonal entry of `R` per rotor.
    pub control_weight: f64,
    /// Multiplier on `Q` at the end of the window.
    pub terminal_weight: f64,
    /// `T_N`.
    pub horizon: f64,
    pub dt: f64,
    pub min_thrust: f64,
    pub max_thrust: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            state_weight: [20.0, 20.0, 20.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 0.1, 0.1, 0.1],
            control_weight: 1.0,
            terminal_weight: 10.0,
            horizon: 2.0,
            dt: 0.05,
            min_thrust: 0.0,
            max_thrust: 3.0,
        }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_weight.iter().any(|w| !(*w > 0.0)) || !(self.control_weight > 0.0) {
            return Err(invalid("tracking weights must be positive"));
        }
        if !(self.terminal_weight > 0.0) {
            return Err(invalid("tracking terminal weight must be positive"));
        }
        steps_of(self.horizon, self.dt, "tracking horizon")?;
        if !(self.min_thrust >= 0.0 && self.max_thrust > self.min_thrust) {
            return Err(invalid("thrust bounds must satisfy 0 ≤ min < max"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

pub(crate) fn steps_of(horizon: f64, dt: f64, what: &str) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(invalid(format!("{what} and its step must be positive")));
    }
    let n = horizon / dt;
    if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
        return Err(invalid(format!("{what} {horizon} is not a multiple of dt {dt}")));
    }
    Ok(n.round() as usize)
}

#[derive(Debug, Clone)]
struct Stage {
    k: SMatrix<f64, 4, 12>,
    s_inv: Matrix4<f64>,
    /// `(A − BK)ᵀ`, `Kᵀ R` and `P_{k+1} B` for the affine recursion.
    closed_t: Mat12,
    kt_r: SMatrix<f64, 12, 4>,
    p_b: Mat12x4,
}

/// Finite-horizon LQ tracker with precomputed gains.
#[derive(Debug, Clone)]
pub struct LqTracker {
    model: DiscreteModel,
    q: Mat12,
    q_final: Mat12,
    r: Matrix4<f64>,
    stages: Vec<Stage>,
    hover: Control,
    min_thrust: f64,
    max_thrust: f64,
}

/// Output of [`track_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackCommand {
    pub control: Control,
    /// Set when a rotor command was clipped to its bounds.
    pub saturated: bool,
}

impl LqTracker {
    pub fn new(params: &QuadrotorParams, cfg: &TrackingConfig) -> Result<Self> {
        cfg.validate()?;
        Self::with_horizon(params, cfg, cfg.steps(), cfg.terminal_weight, 1.0)
    }

    /// `position_scale` multiplies the position block of the running `Q`
    /// only; the terminal weight always uses the full `Q`.
    pub(crate) fn with_horizon(
        params: &QuadrotorParams,
        cfg: &TrackingConfig,
        steps: usize,
        terminal_weight: f64,
        position_scale: f64,
    ) -> Result<Self> {
        params.validate()?;
        let model = LinearModel::hover(params)?.discretize(cfg.dt);
        let full = Mat12::from_diagonal(&Reduced::from_row_slice(&cfg.state_weight));
        let q_final = full * terminal_weight;
        let mut q = full;
        for i in 0..3 {
            q[(i, i)] *= position_scale;
        }
        let r = Matrix4::identity() * cfg.control_weight;
        let (a, b) = (&model.a, &model.b);
        let mut stages = Vec::with_capacity(steps);
        let mut p = q_final;
        for _ in 0..steps {
            let bt_p = b.transpose() * p;
            let s = r + bt_p * b;
            let s_inv = s
                .try_inverse()
                .ok_or_else(|| Error::Singular("Riccati recursion lost positive-definiteness".into()))?;
            let k = s_inv * bt_p * a;
            let p_prev = q + a.transpose() * p * a - a.transpose() * p * b * k;
            stages.push(Stage {
                k,
                s_inv,
                closed_t: (a - b * k).transpose(),
                kt_r: k.transpose() * r,
                p_b: p * b,
            });
            p = (p_prev + p_prev.transpose()) * 0.5;
        }
        stages.reverse();
        Ok(Self {
            model,
            q,
            q_final,
            r,
            stages,
            hover: params.hover_control(),
            min_thrust: cfg.min_thrust.max(0.0),
            max_thrust: cfg.max_thrust.min(params.max_thrust),
        })
    }

    pub fn steps(&self) -> usize {
        self.stages.len()
    }

    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    /// Feedforward terms `d_k` for a reference window of `steps + 1` states
    /// and optional reference offsets `ū_k`; the optimal offset at stage `k`
    /// is `−K_k z_k + d_k`.
    fn feedforward(&self, refs: &[Reduced], u_ref: Option<&[Control]>) -> Vec<Control> {
        let n = self.steps();
        let b = &self.model.b;
        let mut d = vec![Control::zeros(); n];
        let mut s = self.q_final * refs[n];
        for k in (0..n).rev() {
            let st = &self.stages[k];
            let ubar = u_ref.map_or(Control::zeros(), |u| u[k]);
            let dk = st.s_inv * (self.r * ubar + b.transpose() * s);
            s = self.q * refs[k] + st.kt_r * (dk - ubar) + st.closed_t * (s - st.p_b * dk);
            d[k] = dk;
        }
        d
    }

    /// Unclamped optimal offsets and predicted reduced states over the
    /// window.
    pub fn plan(
        &self,
        z0: &Reduced,
        refs: &[Reduced],
        u_ref: Option<&[Control]>,
    ) -> Result<(Vec<Control>, Vec<Reduced>)> {
        self.check_window(refs, u_ref)?;
        let d = self.feedforward(refs, u_ref);
        let mut z = *z0;
        let mut states = vec![z];
        let mut controls = Vec::with_capacity(self.steps());
        for (k, dk) in d.iter().enumerate() {
            let du = -self.stages[k].k * z + dk;
            z = self.model.a * z + self.model.b * du;
            controls.push(du);
            states.push(z);
        }
        Ok((controls, states))
    }

    fn check_window(&self, refs: &[Reduced], u_ref: Option<&[Control]>) -> Result<()> {
        let n = self.steps();
        if refs.len() < n + 1 || u_ref.is_some_and(|u| u.len() < n) {
            return Err(Error::ReferenceUnderrun {
                start: 0,
                needed: n + 1,
                available: refs.len(),
            });
        }
        Ok(())
    }

    /// Hover thrust plus offset, clipped to the rotor bounds.
    pub fn saturate(&self, du: &Control) -> TrackCommand {
        let raw = self.hover + du;
        let control = raw.map(|u| u.clamp(self.min_thrust, self.max_thrust));
        TrackCommand {
            control,
            saturated: control != raw,
        }
    }
}

/// First control of the LQ tracking plan over the reference window, with
/// hover feedforward and rotor bounds applied.
pub fn track_step(
    robot: &StateVector,
    refs: &[Reduced],
    u_ref: Option<&[Control]>,
    tracker: &LqTracker,
) -> Result<TrackCommand> {
    tracker.check_window(refs, u_ref)?;
    let z = reduce_state(robot)?;
    let d0 = tracker.feedforward(refs, u_ref)[0];
    let du = -tracker.stages[0].k * z + d0;
    if du.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tracking control".into()));
    }
    Ok(tracker.saturate(&du))
}

#[derive(Debug, Clone, PartialEq)]
pub struct B2bConfig {
    /// `T_B`.
    pub horizon: f64,
    /// Charger position; the charger state is hover there.
    pub charger: [f64; 3],
    pub position_tolerance: f64,
    pub velocity_tolerance: f64,
    /// Multiplier on `Q` at the end of the horizon.
    pub terminal_weight: f64,
    /// Multiplier on the position block of the running `Q`. Small values
    /// spread the transfer over the whole horizon instead of pulling hard
    /// toward the charger from the first step.
    pub position_weight: f64,
}

impl Default for B2bConfig {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            charger: [0.0, 0.0, 1.0],
            position_tolerance: 0.3,
            velocity_tolerance: 0.3,
            terminal_weight: 100.0,
            position_weight: 0.01,
        }
    }
}

impl B2bConfig {
    pub fn validate(&self, dt: f64) -> Result<()> {
        steps_of(self.horizon, dt, "b2b horizon")?;
        if !(self.position_tolerance > 0.0) || !(self.velocity_tolerance > 0.0) {
            return Err(invalid("arrival tolerances must be positive"));
        }
        if !(self.terminal_weight > 0.0) {
            return Err(invalid("b2b terminal weight must be positive"));
        }
        if !(self.position_weight >= 0.0) || !self.position_weight.is_finite() {
            return Err(invalid("b2b position weight must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn charger_state(&self) -> Reduced {
        let mut z = Reduced::zeros();
        z.fixed_rows_mut::<3>(0).copy_from_slice(&self.charger);
        z
    }

    pub fn charger_position(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.charger)
    }

    /// Whether a position/velocity pair is inside the arrival tolerance.
    pub fn arrived(&self, position: &Vector3<f64>, velocity: &Vector3<f64>) -> bool {
        (position - self.charger_position()).norm() <= self.position_tolerance
            && velocity.norm() <= self.velocity_tolerance
    }
}

/// Back-to-base planner: LQ regulation to the charger state over `T_B`.
#[derive(Debug, Clone)]
pub struct B2bSolver {
    tracker: LqTracker,
    cfg: B2bConfig,
    refs: Vec<Reduced>,
}

impl B2bSolver {
    pub fn new(params: &QuadrotorParams, cfg: &B2bConfig, tracking: &TrackingConfig) -> Result<Self> {
        tracking.validate()?;
        cfg.validate(tracking.dt)?;
        let steps = steps_of(cfg.horizon, tracking.dt, "b2b horizon")?;
        let tracker = LqTracker::with_horizon(params, tracking, steps, cfg.terminal_weight, cfg.position_weight)?;
        Ok(Self {
            tracker,
            cfg: cfg.clone(),
            refs: vec![cfg.charger_state(); steps + 1],
        })
    }

    pub fn config(&self) -> &B2bConfig {
        &self.cfg
    }

    /// Planned reduced states and thrust offsets from `start`, rolled out
    /// on the linear model with rotor bounds applied.
    pub fn solve(&self, start: &Reduced, t0: f64) -> Result<Trajectory> {
        if start.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("b2b start state".into()));
        }
        let d = self.tracker.feedforward(&self.refs, None);
        let m = self.tracker.model();
        let mut z = *start;
        let mut states = vec![DVector::from_column_slice(z.as_slice())];
        let mut controls = Vec::with_capacity(d.len());
        for (k, dk) in d.iter().enumerate() {
            let du = -self.tracker.stages[k].k * z + dk;
            let du = self.tracker.saturate(&du).control - self.tracker.hover;
            z = m.a * z + m.b * du;
            controls.push(DVector::from_column_slice(du.as_slice()));
            states.push(DVector::from_column_slice(z.as_slice()));
        }
        Trajectory::new(t0, m.dt, states, controls)
    }
}

/// One-shot wrapper around [`B2bSolver`].
pub fn solve_b2b(
    start: &Reduced,
    cfg: &B2bConfig,
    tracking: &TrackingConfig,
    params: &QuadrotorParams,
) -> Result<Trajectory> {
    B2bSolver::new(params, cfg, tracking)?.solve(start, 0.0)
}

//! Quadrotor rigid-body model, battery discharge and the RK4 integrator.
//!
//! Quaternions are scalar-first `[s, x, y, z]` and rotate body vectors into
//! the world frame. Velocity is expressed in the world frame, so `ṙ = v`.

use nalgebra::{
    allocator::Allocator, DefaultAllocator, Dim, Matrix3, Matrix4, OVector, SMatrix, SVector, Vector3, Vector4,
};

use crate::error::{invalid, Error, Result};

pub type StateVector = SVector<f64, 13>;
pub type Control = Vector4<f64>;

/// Offsets of the blocks inside [`StateVector`].
pub const POS: usize = 0;
pub const QUAT: usize = 3;
pub const VEL: usize = 7;
pub const OMEGA: usize = 10;

pub fn hat(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Left-multiplication matrix: `quat_left(q) * p == q ⊗ p`.
pub fn quat_left(q: &Vector4<f64>) -> Matrix4<f64> {
    let (s, v) = (q[0], Vector3::new(q[1], q[2], q[3]));
    let mut l = Matrix4::zeros();
    l[(0, 0)] = s;
    l.fixed_view_mut::<1, 3>(0, 1).copy_from(&(-v.transpose()));
    l.fixed_view_mut::<3, 1>(1, 0).copy_from(&v);
    l.fixed_view_mut::<3, 3>(1, 1)
        .copy_from(&(Matrix3::identity() * s + hat(&v)));
    l
}

/// Right-multiplication matrix: `quat_right(p) * q == q ⊗ p`.
pub fn quat_right(p: &Vector4<f64>) -> Matrix4<f64> {
    let (s, v) = (p[0], Vector3::new(p[1], p[2], p[3]));
    let mut r = Matrix4::zeros();
    r[(0, 0)] = s;
    r.fixed_view_mut::<1, 3>(0, 1).copy_from(&(-v.transpose()));
    r.fixed_view_mut::<3, 1>(1, 0).copy_from(&v);
    r.fixed_view_mut::<3, 3>(1, 1)
        .copy_from(&(Matrix3::identity() * s - hat(&v)));
    r
}

/// `H`: embeds a 3-vector as a pure quaternion.
pub fn quat_embed() -> SMatrix<f64, 4, 3> {
    let mut h = SMatrix::<f64, 4, 3>::zeros();
    h[(1, 0)] = 1.0;
    h[(2, 1)] = 1.0;
    h[(3, 2)] = 1.0;
    h
}

/// Rotates a body vector into the world frame, `q ⊗ [0; b] ⊗ q*`.
pub fn rotate(q: &Vector4<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let (s, v) = (q[0], Vector3::new(q[1], q[2], q[3]));
    b * (s * s - v.dot(&v)) + v * (2.0 * v.dot(b)) + v.cross(b) * (2.0 * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    /// Rotor distance from the centre of mass.
    pub arm_length: f64,
    /// Reaction torque per newton of thrust.
    pub yaw_coefficient: f64,
    pub gravity: f64,
    /// Upper bound on each rotor's thrust.
    pub max_thrust: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 0.5,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.0023, 0.0023, 0.004)),
            arm_length: 0.175,
            yaw_coefficient: 0.0245,
            gravity: 9.81,
            max_thrust: 3.0,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.gravity > 0.0) || !(self.arm_length > 0.0) {
            return Err(invalid("quadrotor mass, gravity and arm length must be positive"));
        }
        if !(self.yaw_coefficient >= 0.0) {
            return Err(invalid("yaw coefficient must be non-negative"));
        }
        let j = &self.inertia;
        if (j - j.transpose()).abs().max() > 1e-12 * j.abs().max() || j.cholesky().is_none() {
            return Err(invalid("inertia must be symmetric positive-definite"));
        }
        if !(self.max_thrust > self.hover_thrust()) {
            return Err(invalid(format!(
                "max rotor thrust {} cannot hold hover ({} per rotor)",
                self.max_thrust,
                self.hover_thrust()
            )));
        }
        Ok(())
    }

    /// Per-rotor thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    pub fn hover_control(&self) -> Control {
        Control::repeat(self.hover_thrust())
    }

    /// Body torques from rotor thrusts, X layout: rotors 1..4 at
    /// (+,+), (−,+), (−,−), (+,−) with alternating spin.
    pub fn mixer(&self) -> SMatrix<f64, 3, 4> {
        let d = self.arm_length / std::f64::consts::SQRT_2;
        let k = self.yaw_coefficient;
        SMatrix::<f64, 3, 4>::new(d, d, -d, -d, -d, d, d, -d, k, -k, k, -k)
    }
}

/// Structured view of a [`StateVector`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrotorState {
    pub position: Vector3<f64>,
    pub attitude: Vector4<f64>,
    pub velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl QuadrotorState {
    /// At rest, level, at `position`.
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            attitude: Vector4::new(1.0, 0.0, 0.0, 0.0),
            velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(POS).copy_from(&self.position);
        x.fixed_rows_mut::<4>(QUAT).copy_from(&self.attitude);
        x.fixed_rows_mut::<3>(VEL).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(OMEGA).copy_from(&self.angular_velocity);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(POS).into(),
            attitude: x.fixed_rows::<4>(QUAT).into(),
            velocity: x.fixed_rows::<3>(VEL).into(),
            angular_velocity: x.fixed_rows::<3>(OMEGA).into(),
        }
    }
}

/// `ẋ = [v, ½ L(q) H ω, F_w / m, J⁻¹(τ − ω × Jω)]` with rotor thrusts `u`.
pub fn quadrotor_dynamics(x: &StateVector, u: &Control, p: &QuadrotorParams) -> StateVector {
    let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into();
    let v: Vector3<f64> = x.fixed_rows::<3>(VEL).into();
    let w: Vector3<f64> = x.fixed_rows::<3>(OMEGA).into();

    let thrust = Vector3::new(0.0, 0.0, u.sum());
    let force = rotate(&q, &thrust) - Vector3::new(0.0, 0.0, p.mass * p.gravity);
    let torque = p.mixer() * u;
    let jw = p.inertia * w;
    let j_inv = p.inertia.try_inverse().unwrap_or_else(Matrix3::zeros);

    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(POS).copy_from(&v);
    dx.fixed_rows_mut::<4>(QUAT)
        .copy_from(&(quat_left(&q) * quat_embed() * w * 0.5));
    dx.fixed_rows_mut::<3>(VEL).copy_from(&(force / p.mass));
    dx.fixed_rows_mut::<3>(OMEGA)
        .copy_from(&(j_inv * (torque - w.cross(&jw))));
    dx
}

/// Analytic Jacobians `(∂f/∂x, ∂f/∂u)` of [`quadrotor_dynamics`].
pub fn quadrotor_jacobians(
    x: &StateVector,
    u: &Control,
    p: &QuadrotorParams,
) -> (SMatrix<f64, 13, 13>, SMatrix<f64, 13, 4>) {
    let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into();
    let (qs, qv) = (q[0], Vector3::new(q[1], q[2], q[3]));
    let w: Vector3<f64> = x.fixed_rows::<3>(OMEGA).into();
    let j = &p.inertia;
    let j_inv = j.try_inverse().unwrap_or_else(Matrix3::zeros);
    let b = Vector3::new(0.0, 0.0, u.sum());

    let mut a = SMatrix::<f64, 13, 13>::zeros();
    a.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&Matrix3::identity());

    let w4 = Vector4::new(0.0, w.x, w.y, w.z);
    a.fixed_view_mut::<4, 4>(QUAT, QUAT).copy_from(&(quat_right(&w4) * 0.5));
    a.fixed_view_mut::<4, 3>(QUAT, OMEGA)
        .copy_from(&(quat_left(&q) * quat_embed() * 0.5));

    // ∂(R(q) b)/∂q
    let d_qs = (b * qs + qv.cross(&b)) * 2.0;
    let d_qv = (-b * qv.transpose() + qv * b.transpose() + Matrix3::identity() * qv.dot(&b) - hat(&b) * qs) * 2.0;
    a.fixed_view_mut::<3, 1>(VEL, QUAT).copy_from(&(d_qs / p.mass));
    a.fixed_view_mut::<3, 3>(VEL, QUAT + 1).copy_from(&(d_qv / p.mass));

    a.fixed_view_mut::<3, 3>(OMEGA, OMEGA)
        .copy_from(&(j_inv * (hat(&(j * w)) - hat(&w) * j)));

    let mut bm = SMatrix::<f64, 13, 4>::zeros();
    let up = rotate(&q, &Vector3::z()) / p.mass;
    for c in 0..4 {
        bm.fixed_view_mut::<3, 1>(VEL, c).copy_from(&up);
    }
    bm.fixed_view_mut::<3, 4>(OMEGA, 0).copy_from(&(j_inv * p.mixer()));
    (a, bm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryParams {
    pub capacity: f64,
    pub efficiency: f64,
    /// Gain `k_d` of the discharge map `α(s) = k_d s`.
    pub discharge_gain: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity: 1.0,
            efficiency: 0.95,
            discharge_gain: 0.001945,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0) || !(self.discharge_gain > 0.0) {
            return Err(invalid("battery capacity and discharge gain must be positive"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid("coulombic efficiency must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Discharge gain giving `seconds` of hover from a full charge.
    pub fn calibrated_for_hover(capacity: f64, efficiency: f64, hover: &Control, seconds: f64) -> Self {
        Self {
            capacity,
            efficiency,
            discharge_gain: capacity / (efficiency * hover.norm_squared() * seconds),
        }
    }

    /// Hover endurance from a full charge, in seconds.
    pub fn endurance(&self, u: &Control) -> f64 {
        1.0 / -battery_rate(1.0, u, self)
    }
}

/// `ė = −η α(‖u‖²) / C`. Independent of `e`; clamping at zero is done by
/// the integrator.
pub fn battery_rate(_e: f64, u: &Control, p: &BatteryParams) -> f64 {
    -p.efficiency * p.discharge_gain * u.norm_squared() / p.capacity
}

/// One classical RK4 step with `u` held over the step.
pub fn rk4_step<D, U, F>(f: F, x: &OVector<f64, D>, u: &U, dt: f64) -> Result<OVector<f64, D>>
where
    D: Dim,
    DefaultAllocator: Allocator<D>,
    F: Fn(&OVector<f64, D>, &U) -> OVector<f64, D>,
{
    if !(dt > 0.0) {
        return Err(invalid(format!("RK4 step must be positive, got {dt}")));
    }
    let k1 = f(x, u);
    let k2 = f(&(x + &k1 * (0.5 * dt)), u);
    let k3 = f(&(x + &k2 * (0.5 * dt)), u);
    let k4 = f(&(x + &k3 * dt), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("RK4 step produced a non-finite state".into()));
    }
    Ok(next)
}

/// RK4 step of the quadrotor followed by quaternion renormalization.
pub fn quadrotor_step(x: &StateVector, u: &Control, p: &QuadrotorParams, dt: f64) -> Result<StateVector> {
    let mut next = rk4_step(|x, u| quadrotor_dynamics(x, u, p), x, u, dt)?;
    normalize_attitude(&mut next);
    Ok(next)
}

fn normalize_attitude(x: &mut StateVector) {
    let n = x.fixed_rows::<4>(QUAT).norm();
    x.fixed_rows_mut::<4>(QUAT).unscale_mut(n);
}

/// Robot state plus battery state of charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub robot: StateVector,
    pub soc: f64,
}

impl SystemState {
    /// Joint RK4 step of robot and battery; SoC is clamped to `[0, 1]`.
    pub fn step(&self, u: &Control, quad: &QuadrotorParams, battery: &BatteryParams, dt: f64) -> Result<Self> {
        let mut x = SVector::<f64, 14>::zeros();
        x.fixed_rows_mut::<13>(0).copy_from(&self.robot);
        x[13] = self.soc;
        let f = |x: &SVector<f64, 14>, u: &Control| {
            let mut dx = SVector::<f64, 14>::zeros();
            let robot: StateVector = x.fixed_rows::<13>(0).into();
            dx.fixed_rows_mut::<13>(0)
                .copy_from(&quadrotor_dynamics(&robot, u, quad));
            dx[13] = battery_rate(x[13], u, battery);
            dx
        };
        let next = rk4_step(f, &x, u, dt)?;
        let mut robot: StateVector = next.fixed_rows::<13>(0).into();
        normalize_attitude(&mut robot);
        Ok(Self {
            robot,
            soc: next[13].clamp(0.0, 1.0),
        })
    }

    pub fn position(&self) -> Vector3<f64> {
        self.robot.fixed_rows::<3>(POS).into()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.robot.fixed_rows::<3>(VEL).into()
    }
}

/// `(ṗ, v̇) = (v, u)` for a state laid out as positions then velocities.
pub fn double_integrator_dynamics<D>(state: &OVector<f64, D>, u: &[f64]) -> OVector<f64, D>
where
    D: Dim,
    DefaultAllocator: Allocator<D>,
{
    let s = u.len();
    let mut dx = state.clone() * 0.0;
    for i in 0..s {
        dx[i] = state[s + i];
        dx[s + i] = u[i];
    }
    dx
}

//! Ergodic trajectory optimization on double-integrator dynamics.
//!
//! The decision variables are the accelerations `u_0 .. u_{N-2}`; states
//! follow from the explicit-Euler rollout
//! `x_{k+1} = x_k + f(x_k, u_k) Δt` with `f((p, v), u) = (v, u)`, so every
//! iterate is dynamically feasible by construction. The objective is
//!
//! ```text
//! J(u) = Φ(x, φ) + c_b Σ_k Σ_i (max(p_ki − L_i, 0)² + min(p_ki, 0)²) + Δt/2 Σ_k r ‖u_k‖²
//! ```
//!
//! and is minimized by gradient descent with an Armijo backtracking line
//! search. The gradient is obtained with a reverse (adjoint) pass through the
//! rollout.

use nalgebra::DVector;

use super::spectrum::{metric, tisd_coefficients, FourierBasis};
use crate::error::{invalid, Error, Result};
use crate::grid::DomainSpec;
use crate::tisd::Tisd;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct PtoConfig {
    /// Planning horizon `T_H` in seconds.
    pub horizon: f64,
    pub dt: f64,
    /// Scalar weight `r` of the control cost `R = r I`.
    pub control_weight: f64,
    /// Boundary penalty weight `c_b`.
    pub boundary_weight: f64,
    pub max_iterations: usize,
    /// Stop once the gradient's max-norm drops below this.
    pub tolerance: f64,
    /// Fourier truncation per axis.
    pub max_index: usize,
    pub armijo_slope: f64,
    pub shrink: f64,
    /// Trial step of the first line search.
    pub initial_step: f64,
}

impl Default for PtoConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            dt: 0.2,
            control_weight: 0.01,
            boundary_weight: 100.0,
            max_iterations: 200,
            tolerance: 1e-7,
            max_index: 10,
            armijo_slope: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
        }
    }
}

impl PtoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(invalid("PTO horizon and dt must be positive"));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(invalid(format!(
                "PTO horizon {} is not an integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        if !(self.control_weight > 0.0) || !(self.boundary_weight > 0.0) {
            return Err(invalid("PTO control and boundary weights must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0) {
            return Err(invalid("line search needs shrink and slope in (0, 1)"));
        }
        if !(self.initial_step > 0.0) {
            return Err(invalid("initial step must be positive"));
        }
        Ok(())
    }

    /// Number of state samples `N_h = T_H / Δt + 1`.
    pub fn num_states(&self) -> usize {
        (self.horizon / self.dt).round() as usize + 1
    }
}

/// Planner state: position and velocity, one entry per domain axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl PlannerState {
    pub fn at_rest(position: Vec<f64>) -> Self {
        let velocity = vec![0.0; position.len()];
        Self { position, velocity }
    }
}

/// Objective broken into its three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub ergodic: f64,
    pub boundary: f64,
    pub control: f64,
}

impl ObjectiveParts {
    pub fn total(&self) -> f64 {
        self.ergodic + self.boundary + self.control
    }
}

/// Boundary penalty `c_b Σ_k Σ_i (max(p_ki − L_i, 0)² + min(p_ki, 0)²)` over
/// the position components (the first `s` entries) of each state.
pub fn boundary_penalty(traj: &Trajectory, spec: &DomainSpec, weight: f64) -> f64 {
    traj.states
        .iter()
        .map(|x| position_penalty(&x.as_slice()[..spec.dims()], spec.lengths()))
        .sum::<f64>()
        * weight
}

fn position_penalty(p: &[f64], lengths: &[f64]) -> f64 {
    p.iter()
        .zip(lengths)
        .map(|(&x, &l)| (x - l).max(0.0).powi(2) + x.min(0.0).powi(2))
        .sum()
}

/// Discretized ergodic control problem for a fixed start state and target.
#[derive(Debug, Clone)]
pub struct PtoProblem {
    basis: FourierBasis,
    tisd_coeffs: Vec<f64>,
    lengths: Vec<f64>,
    x0: PlannerState,
    dt: f64,
    num_states: usize,
    control_weight: f64,
    boundary_weight: f64,
}

impl PtoProblem {
    pub fn new(spec: &DomainSpec, x0: PlannerState, tisd: &Tisd, cfg: &PtoConfig) -> Result<Self> {
        cfg.validate()?;
        let dims = spec.dims();
        if x0.position.len() != dims || x0.velocity.len() != dims {
            return Err(invalid(format!(
                "planner state must have {dims} position and velocity components"
            )));
        }
        if tisd.spec != *spec {
            return Err(invalid("TISD was built on a different domain"));
        }
        let basis = FourierBasis::new(spec, cfg.max_index);
        let tisd_coeffs = tisd_coefficients(tisd, &basis);
        Ok(Self {
            basis,
            tisd_coeffs,
            lengths: spec.lengths().to_vec(),
            x0,
            dt: cfg.dt,
            num_states: cfg.num_states(),
            control_weight: cfg.control_weight,
            boundary_weight: cfg.boundary_weight,
        })
    }

    pub fn dims(&self) -> usize {
        self.lengths.len()
    }

    /// Length of the flattened control vector, `(N_h − 1) · s`.
    pub fn num_controls(&self) -> usize {
        (self.num_states - 1) * self.dims()
    }

    pub fn basis(&self) -> &FourierBasis {
        &self.basis
    }

    pub fn tisd_coeffs(&self) -> &[f64] {
        &self.tisd_coeffs
    }

    /// Flattened positions of the Euler rollout, `N_h × s`.
    fn rollout(&self, u: &[f64]) -> Vec<f64> {
        let s = self.dims();
        let mut pos = Vec::with_capacity(self.num_states * s);
        let mut p = self.x0.position.clone();
        let mut v = self.x0.velocity.clone();
        pos.extend_from_slice(&p);
        for k in 0..self.num_states - 1 {
            for i in 0..s {
                p[i] += v[i] * self.dt;
                v[i] += u[k * s + i] * self.dt;
            }
            pos.extend_from_slice(&p);
        }
        pos
    }

    fn coefficients(&self, pos: &[f64]) -> Vec<f64> {
        let s = self.dims();
        let mut c = vec![0.0; self.basis.len()];
        let mut vals = vec![0.0; self.basis.len()];
        for p in pos.chunks_exact(s) {
            self.basis.values(p, &mut vals);
            for (a, v) in c.iter_mut().zip(&vals) {
                *a += v;
            }
        }
        let n = self.num_states as f64;
        c.iter_mut().for_each(|a| *a /= n);
        c
    }

    fn parts_from(&self, u: &[f64], pos: &[f64], c: &[f64]) -> ObjectiveParts {
        let s = self.dims();
        let ergodic = metric(self.basis.lambda(), c, &self.tisd_coeffs);
        let boundary = self.boundary_weight
            * pos
                .chunks_exact(s)
                .map(|p| position_penalty(p, &self.lengths))
                .sum::<f64>();
        let control = 0.5 * self.dt * self.control_weight * u.iter().map(|x| x * x).sum::<f64>();
        ObjectiveParts {
            ergodic,
            boundary,
            control,
        }
    }

    pub fn objective(&self, u: &[f64]) -> ObjectiveParts {
        let pos = self.rollout(u);
        let c = self.coefficients(&pos);
        self.parts_from(u, &pos, &c)
    }

    /// Objective and its gradient with respect to the flattened controls.
    pub fn gradient(&self, u: &[f64]) -> (ObjectiveParts, Vec<f64>) {
        let s = self.dims();
        let n = self.num_states;
        let pos = self.rollout(u);
        let c = self.coefficients(&pos);
        let parts = self.parts_from(u, &pos, &c);

        // dΦ/dc_k = 2 Λ_k (c_k − φ_k); dc_k/dp_j = ∇f_k(p_j) / N
        let weights: Vec<f64> = self
            .basis
            .lambda()
            .iter()
            .zip(c.iter().zip(&self.tisd_coeffs))
            .map(|(l, (a, b))| 2.0 * l * (a - b) / n as f64)
            .collect();
        let mut dpos = vec![0.0; n * s];
        for (j, p) in pos.chunks_exact(s).enumerate() {
            let g = &mut dpos[j * s..(j + 1) * s];
            self.basis.weighted_gradient(p, &weights, g);
            for i in 0..s {
                let x = p[i];
                g[i] += self.boundary_weight * 2.0 * ((x - self.lengths[i]).max(0.0) + x.min(0.0));
            }
        }

        // adjoint of p_{k+1} = p_k + v_k dt, v_{k+1} = v_k + u_k dt
        let mut grad = vec![0.0; (n - 1) * s];
        let mut lam_p = dpos[(n - 1) * s..].to_vec();
        let mut lam_v = vec![0.0; s];
        for k in (0..n - 1).rev() {
            for i in 0..s {
                grad[k * s + i] = self.dt * self.control_weight * u[k * s + i] + self.dt * lam_v[i];
                lam_v[i] += self.dt * lam_p[i];
                lam_p[i] += dpos[k * s + i];
            }
        }
        (parts, grad)
    }

    /// Builds the trajectory for a control sequence; states are
    /// `(p_1..p_s, v_1..v_s)`.
    pub fn trajectory(&self, t0: f64, u: &[f64]) -> Result<Trajectory> {
        let s = self.dims();
        let mut states = Vec::with_capacity(self.num_states);
        let mut p = self.x0.position.clone();
        let mut v = self.x0.velocity.clone();
        states.push(DVector::from_iterator(2 * s, p.iter().chain(&v).copied()));
        for k in 0..self.num_states - 1 {
            for i in 0..s {
                p[i] += v[i] * self.dt;
                v[i] += u[k * s + i] * self.dt;
            }
            states.push(DVector::from_iterator(2 * s, p.iter().chain(&v).copied()));
        }
        let controls = u.chunks_exact(s).map(DVector::from_column_slice).collect();
        Trajectory::new(t0, self.dt, states, controls)
    }
}

/// Starting point of the descent.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Zero accelerations.
    Stationary,
    /// Low-amplitude spiral out of the start state.
    Spiral,
    /// Explicit flattened controls (e.g. a shifted previous plan).
    Controls(Vec<f64>),
}

/// Result of [`pto_optimize`].
#[derive(Debug, Clone)]
pub struct PtoOutcome {
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub initial: ObjectiveParts,
    pub last: ObjectiveParts,
    /// Total objective after each accepted iteration, starting with the
    /// initial guess.
    pub history: Vec<f64>,
}

fn spiral_controls(problem: &PtoProblem, cfg: &PtoConfig) -> Vec<f64> {
    let s = problem.dims();
    let steps = problem.num_states - 1;
    let period = (cfg.horizon / 3.0).max(cfg.dt * 4.0);
    let omega = 2.0 * std::f64::consts::PI / period;
    let scale = problem.lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut u = vec![0.0; steps * s];
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let amp = 0.05 * scale * omega * omega * (k as f64 / steps as f64);
        u[k * s] = amp * (omega * t).cos();
        if s > 1 {
            u[k * s + 1] = amp * (omega * t).sin();
        }
    }
    // bleed off the initial velocity over the first second
    let damp_steps = ((1.0 / cfg.dt).round() as usize).clamp(1, steps);
    for k in 0..damp_steps {
        for i in 0..s {
            u[k * s + i] -= problem.x0.velocity[i] / (damp_steps as f64 * cfg.dt);
        }
    }
    u
}

/// Controls of `previous` from time `t_now` onward, padded with zeros to a
/// full horizon; `None` when nothing of `previous` remains.
pub fn warm_start(previous: &Trajectory, t_now: f64, cfg: &PtoConfig) -> Option<Vec<f64>> {
    let offset = ((t_now - previous.t0) / previous.dt).round();
    if offset < 0.0 || (previous.dt - cfg.dt).abs() > 1e-12 {
        return None;
    }
    let offset = offset as usize;
    if offset >= previous.controls.len() {
        return None;
    }
    let s = previous.control_dim();
    let steps = cfg.num_states() - 1;
    let mut u = vec![0.0; steps * s];
    for (k, c) in previous.controls[offset..].iter().take(steps).enumerate() {
        u[k * s..(k + 1) * s].copy_from_slice(c.as_slice());
    }
    Some(u)
}

/// Gradient descent with Armijo backtracking.
///
/// Each trial step starts from a Barzilai–Borwein estimate (the configured
/// `initial_step` on the first iteration) and shrinks until the sufficient
/// decrease condition holds, so accepted objectives never increase.
pub fn pto_optimize(
    spec: &DomainSpec,
    x0: PlannerState,
    tisd: &Tisd,
    cfg: &PtoConfig,
    guess: InitialGuess,
    t0: f64,
) -> Result<PtoOutcome> {
    let problem = PtoProblem::new(spec, x0, tisd, cfg)?;
    let mut u = match guess {
        InitialGuess::Stationary => vec![0.0; problem.num_controls()],
        InitialGuess::Spiral => spiral_controls(&problem, cfg),
        InitialGuess::Controls(u) => {
            if u.len() != problem.num_controls() {
                return Err(invalid(format!(
                    "initial guess has {} controls, expected {}",
                    u.len(),
                    problem.num_controls()
                )));
            }
            u
        }
    };

    let (initial, mut grad) = problem.gradient(&u);
    if !initial.total().is_finite() {
        return Err(Error::NonFinite("PTO objective at the initial guess".into()));
    }
    let mut current = initial;
    let mut history = vec![initial.total()];
    let mut step = cfg.initial_step;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gmax < cfg.tolerance {
            break;
        }
        let f0 = current.total();
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - alpha * g).collect();
            let parts = problem.objective(&trial);
            let f = parts.total();
            if f.is_finite() && f <= f0 - cfg.armijo_slope * alpha * gnorm2 {
                accepted = Some((trial, parts));
                break;
            }
            alpha *= cfg.shrink;
        }
        let Some((next, _)) = accepted else {
            break;
        };
        let (parts, next_grad) = problem.gradient(&next);
        if !parts.total().is_finite() {
            return Err(Error::NonFinite(format!("PTO objective at iteration {iterations}")));
        }
        // Barzilai–Borwein step for the next trial
        let (mut sy, mut ss) = (0.0, 0.0);
        for i in 0..u.len() {
            let si = next[i] - u[i];
            let yi = next_grad[i] - grad[i];
            sy += si * yi;
            ss += si * si;
        }
        step = if sy > 0.0 {
            (ss / sy).min(1e6)
        } else {
            alpha / cfg.shrink
        };
        u = next;
        grad = next_grad;
        current = parts;
        history.push(current.total());
        iterations += 1;
    }

    Ok(PtoOutcome {
        trajectory: problem.trajectory(t0, &u)?,
        iterations,
        initial,
        last: current,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tisd::uniform_tisd;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desk() -> DomainSpec {
        DomainSpec::planar(2.0, 2.0, 0.2).unwrap()
    }

    fn traj_from(points: &[[f64; 2]]) -> Trajectory {
        let states = points
            .iter()
            .map(|p| DVector::from_vec(vec![p[0], p[1], 0.0, 0.0]))
            .collect();
        let controls = vec![DVector::zeros(2); points.len() - 1];
        Trajectory::new(0.0, 0.1, states, controls).unwrap()
    }

    #[test]
    fn boundary_penalty_examples() {
        let d = desk();
        assert_eq!(boundary_penalty(&traj_from(&[[0.5, 0.5], [1.9, 0.1]]), &d, 7.0), 0.0);
        assert_abs_diff_eq!(
            boundary_penalty(&traj_from(&[[2.3, 1.0]]), &d, 7.0),
            7.0 * 0.09,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            boundary_penalty(&traj_from(&[[-0.2, 1.0]]), &d, 7.0),
            7.0 * 0.04,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_iterations_returns_guess() {
        let d = desk();
        let cfg = PtoConfig {
            max_iterations: 0,
            horizon: 2.0,
            ..PtoConfig::default()
        };
        let x0 = PlannerState::at_rest(vec![0.4, 0.9]);
        let guess: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = pto_optimize(
            &d,
            x0.clone(),
            &uniform_tisd(&d),
            &cfg,
            InitialGuess::Controls(guess.clone()),
            0.0,
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
        let flat: Vec<f64> = out.trajectory.controls.iter().flat_map(|c| c.iter().copied()).collect();
        assert_eq!(flat, guess);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let d = desk();
        let cfg = PtoConfig {
            horizon: 2.0,
            max_index: 5,
            ..PtoConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let weights: Vec<f64> = (0..d.num_cells()).map(|_| rng.random::<f64>()).collect();
            let tisd = Tisd::from_weights(&d, weights).unwrap();
            let x0 = PlannerState {
                position: vec![rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0],
                velocity: vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
            };
            let p = PtoProblem::new(&d, x0, &tisd, &cfg).unwrap();
            let u: Vec<f64> = (0..p.num_controls()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let (_, g) = p.gradient(&u);
            let h = 1e-5;
            for i in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (p.objective(&up).total() - p.objective(&dn).total()) / (2.0 * h);
                let scale = fd.abs().max(g[i].abs()).max(1e-6);
                assert!((fd - g[i]).abs() / scale < 1e-3, "component {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn rollout_obeys_euler_dynamics() {
        let d = desk();
        let cfg = PtoConfig {
            horizon: 4.0,
            max_iterations: 20,
            ..PtoConfig::default()
        };
        let out = pto_optimize(
            &d,
            PlannerState::at_rest(vec![0.3, 0.4]),
            &uniform_tisd(&d),
            &cfg,
            InitialGuess::Spiral,
            0.0,
        )
        .unwrap();
        let t = &out.trajectory;
        for k in 0..t.controls.len() {
            let (x, u, next) = (&t.states[k], &t.controls[k], &t.states[k + 1]);
            for i in 0..2 {
                assert_eq!(next[i], x[i] + x[i + 2] * cfg.dt);
                assert_eq!(next[i + 2], x[i + 2] + u[i] * cfg.dt);
            }
        }
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn warm_start_shifts_and_pads() {
        let cfg = PtoConfig {
            horizon: 1.0,
            dt: 0.2,
            ..PtoConfig::default()
        };
        let states = vec![DVector::zeros(4); 6];
        let controls = (0..5).map(|i| DVector::from_vec(vec![i as f64, -(i as f64)])).collect();
        let prev = Trajectory::new(10.0, 0.2, states, controls).unwrap();
        let u = warm_start(&prev, 10.4, &cfg).unwrap();
        assert_eq!(u, vec![2.0, -2.0, 3.0, -3.0, 4.0, -4.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(warm_start(&prev, 11.0, &cfg).is_none());
    }

    fn two_mass(d: &DomainSpec, heavy: usize, light: usize) -> Tisd {
        let mut w = vec![0.0; d.num_cells()];
        w[heavy] = 0.7;
        w[light] = 0.3;
        Tisd::from_weights(d, w).unwrap()
    }

    #[test]
    fn uniform_descent_halves_objective() {
        let d = desk();
        let cfg = PtoConfig {
            max_index: 8,
            ..PtoConfig::default()
        };
        let x0 = PlannerState::at_rest(vec![0.3, 0.5]);
        let out = pto_optimize(&d, x0, &uniform_tisd(&d), &cfg, InitialGuess::Stationary, 0.0).unwrap();
        assert!(
            out.last.total() <= 0.5 * out.initial.total(),
            "{:?} -> {:?}",
            out.initial,
            out.last
        );
        assert!(out.iterations <= 200);
    }

    #[test]
    fn time_follows_mass_ratio() {
        let d = desk();
        // heavy near (0.5, 0.5), light near (1.5, 1.5)
        let (heavy, light) = (2 * 10 + 2, 7 * 10 + 7);
        let tisd = two_mass(&d, heavy, light);
        let cfg = PtoConfig::default();
        let out = pto_optimize(
            &d,
            PlannerState::at_rest(vec![1.0, 1.0]),
            &tisd,
            &cfg,
            InitialGuess::Stationary,
            0.0,
        )
        .unwrap();
        assert!(out.last.total() <= 0.5 * out.initial.total());
        let near = |c: usize| {
            let ctr = d.cell_center(c);
            out.trajectory
                .states
                .iter()
                .filter(|x| (x[0] - ctr[0]).abs() <= 0.6 && (x[1] - ctr[1]).abs() <= 0.6)
                .count()
        };
        assert!(near(heavy) > near(light), "{} vs {}", near(heavy), near(light));
    }
}

//! Scalar clarity dynamics.
//!
//! Clarity `q ∈ [0, 1]` of a scalar random walk observed through a noisy
//! linear sensor evolves as
//!
//! ```text
//! q' = C²/R (1 − q)² − Q q²
//! ```
//!
//! where `C` is the sensing gain, `Q` the process-noise variance rate and `R`
//! the measurement-noise variance. For constant `C` the equation has an exact
//! solution, which is what the rest of the crate uses to propagate clarity.

use crate::error::{invalid, Error, Result};

/// Values this far outside `[0, 1]` are treated as rounding noise and clamped.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// Upper bound of the bisection bracket used when the analytic inversion of
/// the closed form is not usable.
const BISECTION_T_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarityParams {
    /// Sensing gain `C` (1 while the cell is in view, 0 otherwise).
    pub sensing_gain: f64,
    /// Process-noise variance rate `Q`.
    pub process_noise: f64,
    /// Measurement-noise variance `R`.
    pub measurement_noise: f64,
}

impl ClarityParams {
    pub fn new(sensing_gain: f64, process_noise: f64, measurement_noise: f64) -> Result<Self> {
        let p = Self {
            sensing_gain,
            process_noise,
            measurement_noise,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.measurement_noise > 0.0) || !self.measurement_noise.is_finite() {
            return Err(invalid(format!(
                "measurement noise R must be positive and finite, got {}",
                self.measurement_noise
            )));
        }
        if !(self.process_noise >= 0.0) || !self.process_noise.is_finite() {
            return Err(invalid(format!(
                "process noise Q must be non-negative and finite, got {}",
                self.process_noise
            )));
        }
        if !(self.sensing_gain >= 0.0) || !self.sensing_gain.is_finite() {
            return Err(invalid(format!(
                "sensing gain C must be non-negative and finite, got {}",
                self.sensing_gain
            )));
        }
        Ok(())
    }

    /// Same noise model with a different sensing gain.
    pub fn with_gain(self, sensing_gain: f64) -> Self {
        Self { sensing_gain, ..self }
    }

    /// `k = C / sqrt(Q R)`; infinite when `Q = 0` and `C > 0`.
    pub fn ratio(&self) -> f64 {
        self.sensing_gain / (self.process_noise * self.measurement_noise).sqrt()
    }

    fn gain_rate(&self) -> f64 {
        self.sensing_gain * self.sensing_gain / self.measurement_noise
    }
}

fn check_clarity(name: &str, q: f64) -> Result<f64> {
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&q) {
        return Err(invalid(format!("{name} must lie in [0, 1], got {q}")));
    }
    Ok(clamp_unit(q))
}

/// Clamp to the unit interval.
#[inline]
pub fn clamp_unit(q: f64) -> f64 {
    q.clamp(0.0, 1.0)
}

/// Right-hand side of the clarity ODE. Negative values mean decay.
pub fn clarity_rate(q: f64, p: &ClarityParams) -> Result<f64> {
    p.validate()?;
    let q = check_clarity("clarity", q)?;
    Ok(p.gain_rate() * (1.0 - q).powi(2) - p.process_noise * q * q)
}

/// Maximum attainable clarity `q∞ = k / (k + 1)`.
///
/// With `C = 0` and `Q = 0` nothing is gained and nothing decays; that case
/// returns 1 so that any current clarity counts as attainable.
pub fn max_clarity(p: &ClarityParams) -> Result<f64> {
    p.validate()?;
    Ok(max_clarity_unchecked(p))
}

pub(crate) fn max_clarity_unchecked(p: &ClarityParams) -> f64 {
    let c = p.sensing_gain;
    let q = p.process_noise;
    if q == 0.0 {
        return 1.0;
    }
    if c == 0.0 {
        return 0.0;
    }
    let k = p.ratio();
    k / (k + 1.0)
}

/// Exact solution `q(t; q0)` of the clarity ODE with constant sensing gain.
pub fn clarity_closed_form(t: f64, q0: f64, p: &ClarityParams) -> Result<f64> {
    p.validate()?;
    let q0 = check_clarity("initial clarity", q0)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time must be finite and non-negative, got {t}")));
    }
    Ok(closed_form_unchecked(t, q0, p))
}

pub(crate) fn closed_form_unchecked(t: f64, q0: f64, p: &ClarityParams) -> f64 {
    if t == 0.0 {
        return q0;
    }
    let c = p.sensing_gain;
    let qn = p.process_noise;
    let q = match (c == 0.0, qn == 0.0) {
        (true, true) => q0,
        // q' = -Q q²
        (true, false) => q0 / (1.0 + qn * q0 * t),
        // q' = a (1 - q)²
        (false, true) => {
            let a = p.gain_rate();
            1.0 - (1.0 - q0) / (1.0 + a * (1.0 - q0) * t)
        }
        (false, false) => {
            let k = p.ratio();
            let q_inf = k / (k + 1.0);
            let g1 = q_inf - q0;
            let g2 = g1 * (k - 1.0);
            let g3 = (k - 1.0) * q0 - k;
            // Multiply through by e^{-2kQt} so large t cannot overflow.
            let decay = (-2.0 * k * qn * t).exp();
            q_inf * (1.0 + 2.0 * g1 * decay / (g2 * decay + g3))
        }
    };
    clamp_unit(q)
}

/// Observation time needed to raise clarity from `q0` to `q1`.
///
/// Zero when `q1 <= q0`. Fails with [`Error::UnreachableClarity`] when
/// `q1 >= q∞`; callers clip the target below `q∞` first.
pub fn time_to_clarity(q0: f64, q1: f64, p: &ClarityParams) -> Result<f64> {
    p.validate()?;
    let q0 = check_clarity("initial clarity", q0)?;
    let q1 = check_clarity("target clarity", q1)?;
    if q1 <= q0 {
        return Ok(0.0);
    }
    let q_inf = max_clarity_unchecked(p);
    if q1 >= q_inf || (p.sensing_gain == 0.0) {
        return Err(Error::UnreachableClarity { target: q1, max: q_inf });
    }

    let analytic = if p.process_noise == 0.0 {
        let a = p.gain_rate();
        (q1 - q0) / (a * (1.0 - q0) * (1.0 - q1))
    } else {
        let k = p.ratio();
        let g1 = q_inf - q0;
        let g2 = g1 * (k - 1.0);
        let g3 = (k - 1.0) * q0 - k;
        let r = q1 / q_inf - 1.0;
        let decay = r * g3 / (2.0 * g1 - r * g2);
        -decay.ln() / (2.0 * k * p.process_noise)
    };
    if analytic.is_finite() && analytic >= 0.0 {
        return Ok(analytic);
    }
    bisect_time(q0, q1, p)
}

fn bisect_time(q0: f64, q1: f64, p: &ClarityParams) -> Result<f64> {
    let (mut lo, mut hi) = (0.0_f64, BISECTION_T_MAX);
    if closed_form_unchecked(hi, q0, p) < q1 {
        return Err(Error::UnreachableClarity {
            target: q1,
            max: max_clarity_unchecked(p),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if closed_form_unchecked(mid, q0, p) < q1 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

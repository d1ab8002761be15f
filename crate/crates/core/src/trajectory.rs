use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{invalid, Result};

/// Uniformly sampled timed sequence of states and the controls held between
/// consecutive samples (one fewer control than states).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("trajectory dt must be positive, got {dt}")));
        }
        if states.is_empty() {
            return Err(invalid("trajectory needs at least one state"));
        }
        if controls.len() + 1 != states.len() {
            return Err(invalid(format!(
                "{} controls for {} states",
                controls.len(),
                states.len()
            )));
        }
        let n = states[0].len();
        if states.iter().any(|s| s.len() != n) {
            return Err(invalid("states have inconsistent dimension"));
        }
        if let Some(m) = controls.first().map(|c| c.len()) {
            if controls.iter().any(|c| c.len() != m) {
                return Err(invalid("controls have inconsistent dimension"));
            }
        }
        Ok(Self {
            t0,
            dt,
            states,
            controls,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn control_dim(&self) -> usize {
        self.controls.first().map_or(0, |c| c.len())
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.duration()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    /// Linear interpolation of the state at time `t`, holding the end
    /// samples outside the covered interval.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t0) / self.dt;
        if s <= 0.0 {
            return self.states[0].clone();
        }
        let last = self.len() - 1;
        if s >= last as f64 {
            return self.states[last].clone();
        }
        let i = s.floor() as usize;
        let w = s - i as f64;
        &self.states[i] * (1.0 - w) + &self.states[i + 1] * w
    }

    /// CSV with columns `t`, state components, control components. Labels
    /// default to `x0..` and `u0..`; the final row has empty control fields.
    pub fn to_csv(&self, state_labels: Option<&[&str]>, control_labels: Option<&[&str]>) -> String {
        let mut header = vec!["t".to_string()];
        match state_labels {
            Some(l) => header.extend(l.iter().map(|s| s.to_string())),
            None => header.extend((0..self.state_dim()).map(|i| format!("x{i}"))),
        }
        match control_labels {
            Some(l) => header.extend(l.iter().map(|s| s.to_string())),
            None => header.extend((0..self.control_dim()).map(|i| format!("u{i}"))),
        }
        let mut out = header.join(",");
        out.push('\n');
        for (i, s) in self.states.iter().enumerate() {
            let _ = write!(out, "{}", self.time(i));
            for v in s.iter() {
                let _ = write!(out, ",{v}");
            }
            match self.controls.get(i) {
                Some(u) => {
                    for v in u.iter() {
                        let _ = write!(out, ",{v}");
                    }
                }
                None => {
                    for _ in 0..self.control_dim() {
                        out.push(',');
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

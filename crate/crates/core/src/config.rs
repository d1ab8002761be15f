//! Mission configuration files and built-in presets.
//!
//! Configs are TOML with seven required tables: `domain`, `environment`,
//! `vehicle`, `battery`, `ergodic`, `eware` and `mission`. Unknown keys are
//! rejected. See `configs/desk.toml` for a commented example.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{B2bConfig, TrackingConfig};
use crate::ergodic::PtoConfig;
use crate::error::{Error, Result};
use crate::eware::EwareConfig;
use crate::grid::{CellField, DomainSpec, EnvironmentModel, SensorModel, TargetRule};
use crate::vehicle::{BatteryParams, QuadrotorParams};

pub const SECTIONS: [&str; 7] = [
    "domain",
    "environment",
    "vehicle",
    "battery",
    "ergodic",
    "eware",
    "mission",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub domain: DomainSection,
    pub environment: EnvironmentSection,
    pub vehicle: VehicleSection,
    pub battery: BatterySection,
    pub ergodic: ErgodicSection,
    pub eware: EwareSection,
    pub mission: MissionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lengths: Vec<f64>,
    pub cell_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    /// Process noise `Q` outside the patches; 0 for a spatiostatic map.
    pub background_noise: f64,
    /// Process noise inside the patches.
    pub patch_noise: f64,
    pub patch_count: usize,
    pub patch_radius: f64,
    pub mean_value: f64,
    pub value_spread: f64,
    /// Measurement noise variance `R`.
    pub measurement_noise: f64,
    /// Sensing gain `C` inside the footprint.
    pub sensing_gain: f64,
    pub initial_clarity: f64,
    /// `q̄_c = target_fraction · q∞,c`. Mutually exclusive with
    /// `target_clarity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_fraction: Option<f64>,
    /// The same `q̄` for every cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_clarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    pub mass: f64,
    /// Diagonal of the body inertia.
    pub inertia: [f64; 3],
    pub arm_length: f64,
    pub yaw_coefficient: f64,
    pub gravity: f64,
    pub max_thrust: f64,
    pub altitude: f64,
    pub footprint_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySection {
    pub capacity: f64,
    pub efficiency: f64,
    pub discharge_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClarityTisd,
    UniformTisd,
    Lawnmower,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClarityTisd => "clarity_tisd",
            Method::UniformTisd => "uniform_tisd",
            Method::Lawnmower => "lawnmower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicSection {
    pub method: Method,
    /// `T_H`.
    pub horizon: f64,
    pub dt: f64,
    pub max_index: usize,
    pub control_weight: f64,
    pub boundary_weight: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Target clipping margin below `q∞`.
    pub epsilon: f64,
    pub lawnmower_spacing: f64,
    pub lawnmower_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EwareSection {
    pub enabled: bool,
    /// `T_E`.
    pub period: f64,
    /// `T_N`.
    pub tracking_horizon: f64,
    /// `T_B`.
    pub b2b_horizon: f64,
    pub tracking_dt: f64,
    pub soc_reserve: f64,
    pub position_tolerance: f64,
    pub velocity_tolerance: f64,
    pub state_weight: [f64; 12],
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub b2b_terminal_weight: f64,
    /// Running weight on position during back-to-base, relative to `state_weight`.
    pub b2b_position_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSection {
    pub duration: f64,
    pub seed: u64,
    pub log_period: f64,
    /// Time spent on the charger after a battery swap.
    pub recharge_dwell: f64,
    /// Times at which per-cell deficit maps are saved.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
}

impl MissionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        let missing: Vec<&str> = SECTIONS.iter().copied().filter(|s| !table.contains_key(*s)).collect();
        if !missing.is_empty() {
            return Err(config_err(format!("missing required sections: {}", missing.join(", "))));
        }
        let cfg: MissionConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.domain.lengths.clone(), self.domain.cell_size)
            .map_err(|e| config_err(format!("domain: {e}")))
    }

    pub fn environment_model(&self) -> EnvironmentModel {
        let e = &self.environment;
        EnvironmentModel {
            background_noise: e.background_noise,
            patch_noise: e.patch_noise,
            patch_count: e.patch_count,
            patch_radius: e.patch_radius,
            mean_value: e.mean_value,
            value_spread: e.value_spread,
            measurement_noise: e.measurement_noise,
            sensing_gain: e.sensing_gain,
            initial_clarity: e.initial_clarity,
            target: match (e.target_fraction, e.target_clarity) {
                (_, Some(v)) => TargetRule::Uniform(v),
                (Some(f), None) => TargetRule::FractionOfMax(f),
                (None, None) => TargetRule::FractionOfMax(0.8),
            },
        }
    }

    pub fn sensor(&self) -> Result<SensorModel> {
        SensorModel::new(self.vehicle.footprint_radius).map_err(|e| config_err(format!("vehicle: {e}")))
    }

    pub fn quadrotor(&self) -> QuadrotorParams {
        let v = &self.vehicle;
        QuadrotorParams {
            mass: v.mass,
            inertia: Matrix3::from_diagonal(&Vector3::from(v.inertia)),
            arm_length: v.arm_length,
            yaw_coefficient: v.yaw_coefficient,
            gravity: v.gravity,
            max_thrust: v.max_thrust,
        }
    }

    pub fn battery(&self) -> BatteryParams {
        BatteryParams {
            capacity: self.battery.capacity,
            efficiency: self.battery.efficiency,
            discharge_gain: self.battery.discharge_gain,
        }
    }

    pub fn pto(&self) -> PtoConfig {
        let g = &self.ergodic;
        PtoConfig {
            horizon: g.horizon,
            dt: g.dt,
            control_weight: g.control_weight,
            boundary_weight: g.boundary_weight,
            max_iterations: g.max_iterations,
            tolerance: g.tolerance,
            max_index: g.max_index,
            ..PtoConfig::default()
        }
    }

    pub fn eware_config(&self) -> EwareConfig {
        let e = &self.eware;
        EwareConfig {
            tracking: TrackingConfig {
                state_weight: e.state_weight,
                control_weight: e.control_weight,
                terminal_weight: e.terminal_weight,
                horizon: e.tracking_horizon,
                dt: e.tracking_dt,
                min_thrust: 0.0,
                max_thrust: self.vehicle.max_thrust,
            },
            b2b: B2bConfig {
                horizon: e.b2b_horizon,
                charger: [0.0, 0.0, self.vehicle.altitude],
                position_tolerance: e.position_tolerance,
                velocity_tolerance: e.velocity_tolerance,
                terminal_weight: e.b2b_terminal_weight,
                position_weight: e.b2b_position_weight,
            },
            soc_reserve: e.soc_reserve,
            altitude: self.vehicle.altitude,
        }
    }

    /// Builds the initial cell field from the configured seed.
    pub fn generate_field(&self) -> Result<CellField> {
        let spec = self.domain_spec()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.mission.seed);
        self.environment_model().generate(&spec, &mut rng)
    }

    /// Checks every cross-field rule and names the one that fails.
    pub fn validate(&self) -> Result<()> {
        let spec = self.domain_spec()?;
        if spec.dims() != 2 {
            return Err(config_err("domain: only planar (two-axis) domains are supported"));
        }
        let env = &self.environment;
        if env.target_fraction.is_some() && env.target_clarity.is_some() {
            return Err(config_err(
                "environment: set target_fraction or target_clarity, not both",
            ));
        }
        if let Some(f) = env.target_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(config_err(format!(
                    "environment: target_fraction {f} must lie in (0, 1)"
                )));
            }
        }
        if !(0.0..=1.0).contains(&env.initial_clarity) {
            return Err(config_err("environment: initial_clarity must lie in [0, 1]"));
        }
        if !(env.patch_radius >= 0.0) || !(env.value_spread >= 0.0) {
            return Err(config_err(
                "environment: patch_radius and value_spread must be non-negative",
            ));
        }
        self.sensor()?;
        self.quadrotor()
            .validate()
            .map_err(|e| config_err(format!("vehicle: {e}")))?;
        self.battery()
            .validate()
            .map_err(|e| config_err(format!("battery: {e}")))?;
        self.pto().validate().map_err(|e| config_err(format!("ergodic: {e}")))?;
        let g = &self.ergodic;
        if !(g.epsilon > 0.0) {
            return Err(config_err("ergodic: epsilon must be positive"));
        }
        if !(g.lawnmower_speed > 0.0) {
            return Err(config_err("ergodic: lawnmower_speed must be positive"));
        }
        let min_extent = spec.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
        if !(g.lawnmower_spacing > 0.0 && g.lawnmower_spacing <= min_extent) {
            return Err(config_err(
                "ergodic: lawnmower_spacing must lie in (0, smallest domain extent]",
            ));
        }
        self.eware_config()
            .validate()
            .map_err(|e| config_err(format!("eware: {e}")))?;

        let (t_h, t_e, t_n, dt) = (
            g.horizon,
            self.eware.period,
            self.eware.tracking_horizon,
            self.eware.tracking_dt,
        );
        if !(t_e > 0.0) || t_e >= t_h {
            return Err(config_err(format!("rule T_E < T_H violated: T_E = {t_e}, T_H = {t_h}")));
        }
        if !multiple(t_h, t_e) {
            return Err(config_err(format!(
                "rule T_H multiple of T_E violated: T_H = {t_h}, T_E = {t_e}"
            )));
        }
        if t_n > t_e + 1e-12 {
            return Err(config_err(format!("rule T_N ≤ T_E violated: T_N = {t_n}, T_E = {t_e}")));
        }
        for (name, v) in [("T_E", t_e), ("T_H", t_h), ("log_period", self.mission.log_period)] {
            if !(v > 0.0) || !multiple(v, dt) {
                return Err(config_err(format!(
                    "rule {name} multiple of tracking dt violated: {name} = {v}, dt = {dt}"
                )));
            }
        }
        let m = &self.mission;
        if !(m.duration >= 0.0) || !m.duration.is_finite() {
            return Err(config_err("mission: duration must be finite and non-negative"));
        }
        if !(m.recharge_dwell >= 0.0) {
            return Err(config_err("mission: recharge_dwell must be non-negative"));
        }
        if m.seed > i64::MAX as u64 {
            return Err(config_err("mission: seed must fit in a signed 64-bit integer"));
        }
        if m.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(config_err("mission: snapshot_times must be non-negative"));
        }
        self.generate_field().map(|_| ())
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, duration: Option<f64>) -> Result<Self> {
        if let Some(s) = seed {
            self.mission.seed = s;
        }
        if let Some(d) = duration {
            self.mission.duration = d;
        }
        self.validate()?;
        Ok(self)
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<MissionConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    MissionConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Desk-scale stochastic mission: 2×2 m, 0.2 m cells, 300 s.
pub fn desk_config() -> MissionConfig {
    MissionConfig {
        domain: DomainSection {
            lengths: vec![2.0, 2.0],
            cell_size: 0.2,
        },
        environment: EnvironmentSection {
            background_noise: 0.005,
            patch_noise: 0.05,
            patch_count: 3,
            patch_radius: 0.4,
            mean_value: 0.0,
            value_spread: 1.0,
            measurement_noise: 2.0,
            sensing_gain: 1.0,
            initial_clarity: 0.0,
            target_fraction: Some(0.8),
            target_clarity: None,
        },
        vehicle: VehicleSection {
            mass: 0.5,
            inertia: [0.0023, 0.0023, 0.004],
            arm_length: 0.175,
            yaw_coefficient: 0.0245,
            gravity: 9.81,
            max_thrust: 3.0,
            altitude: 1.0,
            footprint_radius: 0.3,
        },
        battery: BatterySection {
            capacity: 1.0,
            efficiency: 0.95,
            discharge_gain: 0.001945,
        },
        ergodic: ErgodicSection {
            method: Method::ClarityTisd,
            horizon: 10.0,
            dt: 0.2,
            max_index: 10,
            control_weight: 0.01,
            boundary_weight: 100.0,
            max_iterations: 100,
            tolerance: 1e-7,
            epsilon: 0.05,
            lawnmower_spacing: 0.6,
            lawnmower_speed: 0.4,
        },
        eware: EwareSection {
            enabled: true,
            period: 2.0,
            tracking_horizon: 2.0,
            b2b_horizon: 5.0,
            tracking_dt: 0.05,
            soc_reserve: 0.005,
            position_tolerance: 0.3,
            velocity_tolerance: 0.3,
            state_weight: TrackingConfig::default().state_weight,
            control_weight: 1.0,
            terminal_weight: 10.0,
            b2b_terminal_weight: 100.0,
            b2b_position_weight: 0.01,
        },
        mission: MissionSection {
            duration: 300.0,
            seed: 7,
            log_period: 0.05,
            recharge_dwell: 2.0,
            snapshot_times: vec![0.0, 100.0, 200.0, 300.0],
        },
    }
}

/// Full-size mission: 20×20 m, 0.2 m cells, `T_H` = 30 s, `T_B` = 10 s.
pub fn paper_scale_config() -> MissionConfig {
    let mut c = desk_config();
    c.domain.lengths = vec![20.0, 20.0];
    c.environment.patch_count = 12;
    c.environment.patch_radius = 2.0;
    c.vehicle.footprint_radius = 1.0;
    c.ergodic.horizon = 30.0;
    c.ergodic.lawnmower_spacing = 2.5;
    c.ergodic.lawnmower_speed = 2.0;
    c.eware.b2b_horizon = 10.0;
    // endurance long enough to reach the far corner and back
    c.battery.discharge_gain = 0.000486;
    c.mission.duration = 780.0;
    c.mission.snapshot_times = vec![0.0, 260.0, 520.0, 780.0];
    c
}

/// One run inside a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub method: Method,
    pub eware: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    pub description: String,
    pub base: MissionConfig,
    pub variants: Vec<Variant>,
}

impl ExperimentPreset {
    /// Config of one variant: the shared base with method and eware flag
    /// replaced.
    pub fn variant_config(&self, v: &Variant) -> MissionConfig {
        let mut c = self.base.clone();
        c.ergodic.method = v.method;
        c.eware.enabled = v.eware;
        c
    }
}

fn variant(name: &str, method: Method, eware: bool) -> Variant {
    Variant {
        name: name.to_string(),
        method,
        eware,
    }
}

fn methods() -> Vec<Variant> {
    vec![
        variant("clarity", Method::ClarityTisd, true),
        variant("uniform", Method::UniformTisd, true),
        variant("lawnmower", Method::Lawnmower, true),
    ]
}

pub const PRESET_NAMES: [&str; 5] = [
    "desk",
    "paper-scale",
    "compare-spatiostatic",
    "compare-stochastic",
    "eware-ablation",
];

pub fn preset(name: &str) -> Option<ExperimentPreset> {
    let (description, base, variants) = match name {
        "desk" => (
            "desk-scale stochastic mission, clarity-driven planner",
            desk_config(),
            vec![variant("clarity", Method::ClarityTisd, true)],
        ),
        "paper-scale" => (
            "20×20 m stochastic mission with the full-size horizons",
            paper_scale_config(),
            vec![variant("clarity", Method::ClarityTisd, true)],
        ),
        "compare-spatiostatic" => {
            let mut c = desk_config();
            c.environment.background_noise = 0.0;
            c.environment.patch_noise = 0.0;
            ("clarity vs uniform vs lawnmower on a static map", c, methods())
        }
        "compare-stochastic" => (
            "clarity vs uniform vs lawnmower on a drifting map",
            desk_config(),
            methods(),
        ),
        "eware-ablation" => (
            "clarity planner with and without the energy filter",
            desk_config(),
            vec![
                variant("eware", Method::ClarityTisd, true),
                variant("no-eware", Method::ClarityTisd, false),
            ],
        ),
        _ => return None,
    };
    Some(ExperimentPreset {
        name: name.to_string(),
        description: description.to_string(),
        base,
        variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            for v in &p.variants {
                p.variant_config(v)
                    .validate()
                    .unwrap_or_else(|e| panic!("{name}/{}: {e}", v.name));
            }
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn paper_scale_values() {
        let c = preset("paper-scale").unwrap().base;
        assert_eq!(c.ergodic.horizon, 30.0);
        assert_eq!(c.eware.period, 2.0);
        assert_eq!(c.eware.tracking_horizon, 2.0);
        assert_eq!(c.eware.b2b_horizon, 10.0);
        assert_eq!(c.domain.lengths, vec![20.0, 20.0]);
        assert_eq!(c.domain.cell_size, 0.2);
        assert_eq!(c.ergodic.dt, 0.2);
        assert_eq!(c.eware.tracking_dt, 0.05);
    }

    #[test]
    fn empty_file_lists_sections() {
        let e = MissionConfig::from_toml_str("").unwrap_err().to_string();
        for s in SECTIONS {
            assert!(e.contains(s), "{e}");
        }
    }

    #[test]
    fn round_trip() {
        for name in PRESET_NAMES {
            let c = preset(name).unwrap().base;
            let text = c.to_toml_string().unwrap();
            assert_eq!(MissionConfig::from_toml_str(&text).unwrap(), c);
        }
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut text = desk_config().to_toml_string().unwrap();
        text = text.replace("[mission]\n", "[mission]\nspeed_of_light = 3\n");
        let e = MissionConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("speed_of_light"), "{e}");
    }

    #[test]
    fn scheduling_rules_are_named() {
        let mut c = desk_config();
        c.eware.period = 10.0;
        assert!(c.validate().unwrap_err().to_string().contains("T_E < T_H"));
        let mut c = desk_config();
        c.eware.period = 3.0;
        c.eware.tracking_horizon = 2.0;
        assert!(c.validate().unwrap_err().to_string().contains("multiple of T_E"));
        let mut c = desk_config();
        c.eware.tracking_horizon = 2.5;
        assert!(c.validate().unwrap_err().to_string().contains("T_N ≤ T_E"));
    }

    #[test]
    fn unreachable_target_names_the_cell() {
        let mut c = desk_config();
        c.environment.target_fraction = None;
        c.environment.target_clarity = Some(0.8);
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("cell "), "{e}");
    }
}

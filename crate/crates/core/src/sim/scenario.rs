//! Scenario description and TOML loading.
//!
//! A scenario scripts one closed-loop run: environment, initial condition,
//! guidance constants, the pilot timeline, optional absolute setpoints,
//! disturbances and measurement noise. Units are stated per key in the file
//! schema (`_m`, `_deg`, `_s`, ...). See the shipped scenarios under
//! `assets/` for worked examples.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::nmpc::WeightPreset;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Velocity steering: the reference chases the vehicle.
    Pilot,
    /// Absolute position setpoints from the `[[setpoint]]` timeline.
    Setpoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotRow {
    pub t_s: f64,
    #[serde(default)]
    pub v_cmd_m_s: [f64; 3],
    #[serde(default)]
    pub throttle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetpointRow {
    pub t_s: f64,
    pub position_m: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisturbanceRow {
    pub t_s: f64,
    /// Body-frame linear impulse (N s).
    #[serde(default)]
    pub impulse_n_s: [f64; 3],
    /// Body-frame angular impulse (N m s).
    #[serde(default)]
    pub torque_n_m_s: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    #[serde(default)]
    pub ground_height_m: f64,
    /// Slope angle in degrees; the surface ascends along +x.
    #[serde(default)]
    pub slope_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialCondition {
    pub position_m: [f64; 3],
    #[serde(default)]
    pub velocity_m_s: [f64; 3],
    #[serde(default)]
    pub heading_deg: f64,
    #[serde(default)]
    pub tilt_deg: f64,
    #[serde(default)]
    pub grounded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Morph-start altitude (m above ground).
    pub z_phi_m: f64,
    /// Transition-start altitude (m above ground).
    pub z_star_m: f64,
    /// Tilt-rate magnitude commanded by the reference law (rad/s).
    pub tilt_rate_rad_s: f64,
    /// Body altitude at wheel contact, used as the ground height of the
    /// cost-blending corridor so the blend factor reaches zero at impact.
    #[serde(default = "default_blend_ground")]
    pub blend_ground_m: f64,
    #[serde(default = "default_phi_flight")]
    pub phi_limit_flight_deg: f64,
    #[serde(default = "default_phi_transition")]
    pub phi_limit_transition_deg: f64,
}

fn default_blend_ground() -> f64 {
    0.15
}

fn default_phi_flight() -> f64 {
    50.0
}

fn default_phi_transition() -> f64 {
    70.0
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct NoiseConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub sigma_pos_m: f64,
    #[serde(default)]
    pub sigma_vel_m_s: f64,
    #[serde(default)]
    pub sigma_att_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    #[serde(default = "default_dt")]
    pub physics_dt_s: f64,
    #[serde(default = "default_rate")]
    pub control_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub ground_effect: bool,
    #[serde(default = "default_preset")]
    pub weight_preset: WeightPreset,
    #[serde(default = "default_reference")]
    pub reference: ReferenceMode,
    pub environment: Environment,
    pub initial: InitialCondition,
    pub guidance: GuidanceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub pilot: Vec<PilotRow>,
    #[serde(default)]
    pub setpoint: Vec<SetpointRow>,
    #[serde(default)]
    pub disturbance: Vec<DisturbanceRow>,
}

fn default_dt() -> f64 {
    0.001
}

fn default_rate() -> f64 {
    150.0
}

fn default_true() -> bool {
    true
}

fn default_preset() -> WeightPreset {
    WeightPreset::Baseline
}

fn default_reference() -> ReferenceMode {
    ReferenceMode::Pilot
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Physics steps per control cycle. The physics step must divide the
    /// control period to rounding tolerance (half a step).
    pub fn steps_per_cycle(&self) -> usize {
        ((1.0 / self.control_rate_hz) / self.physics_dt_s).round() as usize
    }

    /// Effective control period after rounding to whole physics steps.
    pub fn control_period(&self) -> f64 {
        self.steps_per_cycle() as f64 * self.physics_dt_s
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: String| Err(ScenarioError::Invalid(m));
        if self.duration_s <= 0.0 {
            return err("duration must be positive".into());
        }
        if self.physics_dt_s <= 0.0 || self.physics_dt_s > 0.01 {
            return err("physics_dt_s must lie in (0, 0.01]".into());
        }
        if self.control_rate_hz <= 0.0 {
            return err("control_rate_hz must be positive".into());
        }
        let period = 1.0 / self.control_rate_hz;
        let steps = (period / self.physics_dt_s).round();
        if steps < 1.0 || (steps * self.physics_dt_s - period).abs() > 0.5 * self.physics_dt_s {
            return err(format!(
                "physics dt {} does not divide the control period {} to rounding tolerance",
                self.physics_dt_s, period
            ));
        }
        if self.guidance.z_star_m <= self.guidance.blend_ground_m || self.guidance.z_phi_m < self.guidance.z_star_m {
            return err("guidance heights must satisfy z_phi >= z_star > blend ground".into());
        }
        if self.guidance.tilt_rate_rad_s < 0.0 {
            return err("tilt rate must be non-negative".into());
        }
        if self.environment.slope_deg.abs() >= 45.0 {
            return err("slope must be below 45 degrees".into());
        }
        if !is_sorted(self.pilot.iter().map(|r| r.t_s)) {
            return err("pilot timeline must be sorted by time".into());
        }
        if !is_sorted(self.setpoint.iter().map(|r| r.t_s)) {
            return err("setpoint timeline must be sorted by time".into());
        }
        if !is_sorted(self.disturbance.iter().map(|r| r.t_s)) {
            return err("disturbance schedule must be sorted by time".into());
        }
        if self.reference == ReferenceMode::Setpoint && self.setpoint.is_empty() {
            return err("setpoint reference mode requires at least one setpoint row".into());
        }
        Ok(())
    }

    /// Pilot command in effect at time `t` (step-wise hold).
    pub fn pilot_at(&self, t: f64) -> crate::guidance::PilotCommand {
        let mut cmd = crate::guidance::PilotCommand::default();
        for row in &self.pilot {
            if row.t_s <= t {
                cmd.v_cmd = Vector3::from_row_slice(&row.v_cmd_m_s);
                cmd.throttle = row.throttle;
            } else {
                break;
            }
        }
        cmd
    }

    /// Active absolute setpoint at time `t`, if the timeline has started.
    pub fn setpoint_at(&self, t: f64) -> Option<Vector3<f64>> {
        let mut current = None;
        for row in &self.setpoint {
            if row.t_s <= t {
                current = Some(Vector3::from_row_slice(&row.position_m));
            } else {
                break;
            }
        }
        current
    }
}

fn is_sorted(values: impl Iterator<Item = f64>) -> bool {
    let mut prev = f64::NEG_INFINITY;
    for v in values {
        if v < prev {
            return false;
        }
        prev = v;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    #[test]
    fn shipped_scenarios_parse() {
        for name in assets::builtin_scenario_names() {
            let sc = assets::builtin_scenario(name).unwrap();
            assert!(sc.duration_s > 0.0, "{name}");
            sc.validate().unwrap();
        }
    }

    #[test]
    fn cycle_rounding_tolerance() {
        let sc = assets::builtin_scenario("hover").unwrap();
        // 1 ms physics against a 150 Hz controller rounds to 7 steps.
        assert_eq!(sc.steps_per_cycle(), 7);
        assert!((sc.control_period() - 0.007).abs() < 1e-12);
    }

    #[test]
    fn unsorted_timeline_rejected() {
        let mut sc = assets::builtin_scenario("hover").unwrap();
        sc.pilot = vec![
            PilotRow {
                t_s: 2.0,
                v_cmd_m_s: [0.0; 3],
                throttle: 0.0,
            },
            PilotRow {
                t_s: 1.0,
                v_cmd_m_s: [0.0; 3],
                throttle: 0.0,
            },
        ];
        assert!(sc.validate().is_err());
    }

    #[test]
    fn pilot_hold_semantics() {
        let sc = assets::builtin_scenario("wheel_landing").unwrap();
        let first = sc.pilot.first().unwrap().t_s;
        let cmd = sc.pilot_at(first - 0.5);
        assert_eq!(cmd.v_cmd, Vector3::zeros());
    }
}

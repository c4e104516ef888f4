//! Run records: per-cycle samples, events and touchdown metrics.

use std::fmt::Write as _;

use crate::dynamics::{AerialInput, StateVector};
use crate::guidance::{FlightMode, WheelCommand};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("state diverged (non-finite) at t = {0:.3} s")]
    Diverged(f64),
    #[error("scenario invalid: {0}")]
    ScenarioInvalid(String),
    #[error("the run never touched down")]
    NoTouchdown,
}

/// One control-rate sample.
#[derive(Debug, Clone)]
pub struct LogRow {
    pub t: f64,
    pub state: StateVector,
    pub phi: f64,
    pub alpha: f64,
    pub u: AerialInput,
    pub wheels: WheelCommand,
    pub mode: FlightMode,
    pub ge_ratio: f64,
}

impl LogRow {
    /// Mean normalized thrust of the four rotors.
    pub fn mean_thrust(&self) -> f64 {
        self.u.mean()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    ModeChange(FlightMode),
    Touchdown,
    Tipover,
    BodyStrike,
    TakeoffRelease,
}

#[derive(Debug, Clone)]
pub struct SimEvent {
    pub t: f64,
    pub kind: EventKind,
}

/// Quantities captured at the touchdown instant, before the vehicle settles
/// onto the surface.
#[derive(Debug, Clone, Copy)]
pub struct TouchdownRecord {
    pub t: f64,
    /// Tilt angle at impact (rad).
    pub phi_g: f64,
    /// Vertical speed magnitude at impact (m/s).
    pub impact_speed: f64,
    pub roll: f64,
    pub pitch: f64,
    pub tipped: bool,
}

/// Metrics extracted from a completed run.
#[derive(Debug, Clone, Copy)]
pub struct TouchdownMetrics {
    pub phi_g_deg: f64,
    pub impact_speed: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    /// Peak of the mean normalized thrust over the run.
    pub max_mean_thrust: f64,
    /// Peak horizontal deviation from the reference over the run (m).
    pub lateral_drift_m: f64,
}

#[derive(Debug, Clone)]
pub struct SimLog {
    pub scenario_name: String,
    pub seed: u64,
    pub ground_effect_enabled: bool,
    pub rows: Vec<LogRow>,
    pub events: Vec<SimEvent>,
    pub touchdown: Option<TouchdownRecord>,
    /// Planar distance driven after the (first) touchdown (m).
    pub drive_distance_after_touchdown: f64,
    /// Peak horizontal deviation from the active reference (m).
    pub max_lateral_drift: f64,
    /// Peak |p - p_ref| on the horizontal axes after the last disturbance,
    /// ignoring the first recovery window; usable as a settling check.
    pub final_position_error: f64,
}

impl SimLog {
    pub fn new(scenario_name: &str, seed: u64, ground_effect_enabled: bool) -> Self {
        Self {
            scenario_name: scenario_name.to_string(),
            seed,
            ground_effect_enabled,
            rows: Vec::new(),
            events: Vec::new(),
            touchdown: None,
            drive_distance_after_touchdown: 0.0,
            max_lateral_drift: 0.0,
            final_position_error: 0.0,
        }
    }

    pub fn mode_sequence(&self) -> Vec<FlightMode> {
        let mut out = Vec::new();
        for e in &self.events {
            if let EventKind::ModeChange(m) = e.kind {
                if out.last() != Some(&m) {
                    out.push(m);
                }
            }
        }
        out
    }

    /// True when `milestones` appear in order (not necessarily adjacent)
    /// in the mode timeline.
    pub fn modes_visited_in_order(&self, milestones: &[FlightMode]) -> bool {
        let seq = self.mode_sequence();
        let mut it = seq.iter();
        milestones
            .iter()
            .all(|m| it.by_ref().any(|visited| visited == m))
    }

    pub fn has_event(&self, kind: &EventKind) -> bool {
        self.events.iter().any(|e| &e.kind == kind)
    }

    /// Peak mean normalized thrust over the run.
    pub fn max_mean_thrust(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.mean_thrust())
            .fold(0.0, f64::max)
    }

    /// Extract touchdown metrics; errors when the run never grounded.
    pub fn metrics(&self) -> Result<TouchdownMetrics, SimError> {
        let td = self.touchdown.ok_or(SimError::NoTouchdown)?;
        Ok(TouchdownMetrics {
            phi_g_deg: td.phi_g.to_degrees(),
            impact_speed: td.impact_speed,
            roll_deg: td.roll.to_degrees(),
            pitch_deg: td.pitch.to_degrees(),
            max_mean_thrust: self.max_mean_thrust(),
            lateral_drift_m: self.max_lateral_drift,
        })
    }

    /// CSV; schema is stable:
    /// t,x,y,z,theta_z,theta_y,theta_x,vx,vy,vz,omega_x,omega_y,omega_z,
    /// phi,alpha,u1,u2,u3,u4,wheel_l,wheel_r,mode,ge_ratio
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 180 + 128);
        out.push_str(
            "t,x,y,z,theta_z,theta_y,theta_x,vx,vy,vz,omega_x,omega_y,omega_z,phi,alpha,u1,u2,u3,u4,wheel_l,wheel_r,mode,ge_ratio\n",
        );
        for r in &self.rows {
            let s = &r.state;
            let _ = writeln!(
                out,
                "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
                r.t,
                s.p.x,
                s.p.y,
                s.p.z,
                s.theta[0],
                s.theta[1],
                s.theta[2],
                s.v.x,
                s.v.y,
                s.v.z,
                s.omega.x,
                s.omega.y,
                s.omega.z,
                r.phi,
                r.alpha,
                r.u[0],
                r.u[1],
                r.u[2],
                r.u[3],
                r.wheels.left,
                r.wheels.right,
                r.mode.as_str(),
                r.ge_ratio,
            );
        }
        out
    }

    /// Human-readable summary as `key = value` lines.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario = {}", self.scenario_name);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "ground_effect = {}", self.ground_effect_enabled);
        let _ = writeln!(out, "samples = {}", self.rows.len());
        if let Some(last) = self.rows.last() {
            let _ = writeln!(out, "end_time_s = {:.3}", last.t);
            let _ = writeln!(
                out,
                "end_position_m = [{:.4}, {:.4}, {:.4}]",
                last.state.p.x, last.state.p.y, last.state.p.z
            );
            let _ = writeln!(out, "end_tilt_deg = {:.2}", last.phi.to_degrees());
        }
        let seq: Vec<&str> = self.mode_sequence().iter().map(|m| m.as_str()).collect();
        let _ = writeln!(out, "mode_sequence = {}", seq.join(" -> "));
        let _ = writeln!(out, "max_mean_thrust = {:.4}", self.max_mean_thrust());
        let _ = writeln!(out, "max_lateral_drift_m = {:.4}", self.max_lateral_drift);
        if let Some(td) = &self.touchdown {
            let _ = writeln!(out, "touchdown_time_s = {:.3}", td.t);
            let _ = writeln!(out, "touchdown_tilt_deg = {:.2}", td.phi_g.to_degrees());
            let _ = writeln!(out, "impact_speed_m_s = {:.4}", td.impact_speed);
            let _ = writeln!(out, "impact_roll_deg = {:.3}", td.roll.to_degrees());
            let _ = writeln!(out, "impact_pitch_deg = {:.3}", td.pitch.to_degrees());
            let _ = writeln!(
                out,
                "drive_distance_after_touchdown_m = {:.3}",
                self.drive_distance_after_touchdown
            );
        }
        for e in &self.events {
            let kind = match &e.kind {
                EventKind::ModeChange(m) => format!("mode_change:{}", m.as_str()),
                EventKind::Touchdown => "touchdown".to_string(),
                EventKind::Tipover => "tipover".to_string(),
                EventKind::BodyStrike => "body_strike".to_string(),
                EventKind::TakeoffRelease => "takeoff_release".to_string(),
            };
            let _ = writeln!(out, "event = {:.3} {}", e.t, kind);
        }
        out
    }
}

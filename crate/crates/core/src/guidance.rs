//! Trajectory references, flight-mode supervision and ground driving.
//!
//! The pilot steers by velocity: the position reference is the current
//! position nudged one control period along the commanded velocity, with
//! attitude and rate references held at zero. The tilt angle is commanded
//! by rate only, following a three-branch law: tilt up below the morph
//! altitude while airborne, tilt down on the ground when the pilot pushes
//! the throttle past 50%, hold otherwise.
//!
//! The supervisor tracks a physical-contact flag `grounded` and an actuation
//! mode. In flight only the thrusters are driven; in transition both
//! thrusters and wheels are live; once grounded the thrust path is cut. A
//! commanded takeoff re-opens the thrust path (transition mode) while the
//! wheels still carry the robot, and contact detection is latched out until
//! the robot actually leaves the ground.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::AerialInput;

/// Velocity-steering command from the pilot timeline.
#[derive(Debug, Clone, Copy, Default)]
pub struct PilotCommand {
    /// Commanded velocity (m/s); each component is limited to 1 m/s.
    pub v_cmd: Vector3<f64>,
    /// Normalized overall throttle in [0, 1]; >= 0.5 on the ground arms a
    /// takeoff.
    pub throttle: f64,
    pub yaw_rate: f64,
}

impl PilotCommand {
    /// Apply the safety limits (1 m/s per axis).
    pub fn limited(&self) -> PilotCommand {
        PilotCommand {
            v_cmd: self.v_cmd.map(|c| c.clamp(-1.0, 1.0)),
            throttle: self.throttle.clamp(0.0, 1.0),
            yaw_rate: self.yaw_rate,
        }
    }
}

/// Position reference one controller period ahead along the commanded
/// velocity. Attitude and angular-velocity references are zero.
pub fn position_reference(p: &Vector3<f64>, cmd: &PilotCommand, t_s: f64) -> Vector3<f64> {
    debug_assert!(t_s > 0.0);
    p + cmd.limited().v_cmd * t_s
}

/// Three-branch tilt-rate reference.
pub fn tilt_reference(z: f64, throttle: f64, grounded: bool, z_phi: f64, v_max: f64) -> f64 {
    if z < z_phi && !grounded {
        v_max
    } else if throttle >= 0.5 && grounded {
        -v_max
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightMode {
    Flight,
    Transition,
    Grounded,
}

impl FlightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlightMode::Flight => "flight",
            FlightMode::Transition => "transition",
            FlightMode::Grounded => "grounded",
        }
    }
}

/// Supervisor state. `grounded` is the physical contact estimate; `mode`
/// decides actuator routing and the active tilt cap. During a commanded
/// takeoff the two disagree on purpose: the robot is still on its wheels
/// but the thrust path is already open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub mode: FlightMode,
    pub grounded: bool,
    /// Current tilt cap (rad).
    pub phi_limit: f64,
    /// Seconds the contact-release condition has held.
    release_timer: f64,
    /// Takeoff commanded while grounded; cleared once airborne or aborted.
    takeoff_latched: bool,
}

impl ModeState {
    /// Takeoff commanded and thrust path open while still on the wheels.
    pub fn takeoff_pending(&self) -> bool {
        self.takeoff_latched
    }

    pub fn airborne(cfg: &ModeConfig) -> Self {
        Self {
            mode: FlightMode::Flight,
            grounded: false,
            phi_limit: cfg.phi_limit_flight,
            release_timer: 0.0,
            takeoff_latched: false,
        }
    }

    pub fn on_ground(cfg: &ModeConfig) -> Self {
        Self {
            mode: FlightMode::Grounded,
            grounded: true,
            phi_limit: cfg.phi_limit_transition,
            release_timer: 0.0,
            takeoff_latched: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeConfig {
    /// Transition-start height (m above ground).
    pub z_star: f64,
    /// Contact threshold margin above the wheel contact height (m).
    pub contact_margin: f64,
    /// Vertical-speed gate for contact detection (m/s).
    pub contact_vz: f64,
    /// Time the release condition must hold before contact is dropped (s).
    pub release_hold_s: f64,
    pub phi_limit_flight: f64,
    pub phi_limit_transition: f64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            z_star: 0.45,
            contact_margin: 0.01,
            contact_vz: 0.05,
            release_hold_s: 0.05,
            phi_limit_flight: 50f64.to_radians(),
            phi_limit_transition: 70f64.to_radians(),
        }
    }
}

/// Advance the supervisor.
///
/// `z_rel` is the height of the body origin above the local surface and
/// `contact_height` the value it takes with the wheels touching at the
/// current tilt, so the contact test is `z_rel <= contact_height + margin`.
#[allow(clippy::too_many_arguments)]
pub fn mode_update(
    z_rel: f64,
    v_z: f64,
    phi: f64,
    cmd: &PilotCommand,
    contact_height: f64,
    cfg: &ModeConfig,
    dt: f64,
    prev: &ModeState,
) -> ModeState {
    let mut next = *prev;
    let in_contact_band = z_rel <= contact_height + cfg.contact_margin && v_z.abs() < cfg.contact_vz;
    let takeoff_commanded = cmd.throttle >= 0.5;

    if prev.grounded {
        if prev.takeoff_latched {
            // Waiting for liftoff; abort back to grounded if the throttle
            // drops.
            if !takeoff_commanded {
                next.takeoff_latched = false;
            } else if z_rel > contact_height + cfg.contact_margin {
                next.release_timer += dt;
                if next.release_timer >= cfg.release_hold_s {
                    next.grounded = false;
                    next.takeoff_latched = false;
                    next.release_timer = 0.0;
                }
            } else {
                next.release_timer = 0.0;
            }
        } else if takeoff_commanded && phi <= cfg.phi_limit_flight + 1e-2 {
            // Thrusters come live once the posture is back inside the
            // flight envelope.
            next.takeoff_latched = true;
            next.release_timer = 0.0;
        } else if !in_contact_band {
            next.release_timer += dt;
            if next.release_timer >= cfg.release_hold_s {
                next.grounded = false;
                next.release_timer = 0.0;
            }
        } else {
            next.release_timer = 0.0;
        }
    } else if in_contact_band {
        next.grounded = true;
        next.takeoff_latched = false;
        next.release_timer = 0.0;
    }

    next.mode = if next.grounded && !next.takeoff_latched {
        FlightMode::Grounded
    } else if z_rel < cfg.z_star {
        FlightMode::Transition
    } else {
        FlightMode::Flight
    };
    next.phi_limit = match next.mode {
        FlightMode::Flight => cfg.phi_limit_flight,
        _ => cfg.phi_limit_transition,
    };
    next
}

/// Left/right wheel rates (rad/s).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WheelCommand {
    pub left: f64,
    pub right: f64,
}

/// Route commands according to the actuation mode: flight flies, grounded
/// drives, transition does both.
pub fn actuator_switch(
    mode: FlightMode,
    u_a: &AerialInput,
    u_g: &WheelCommand,
) -> (AerialInput, WheelCommand) {
    match mode {
        FlightMode::Flight => (*u_a, WheelCommand::default()),
        FlightMode::Transition => (*u_a, *u_g),
        FlightMode::Grounded => (AerialInput::zeros(), *u_g),
    }
}

/// Wheel rates realizing a body velocity V (m/s) and yaw rate omega (rad/s)
/// for wheel radius `r` and half wheel base `l`.
pub fn wheel_speeds(v: f64, omega: f64, r: f64, l: f64) -> WheelCommand {
    debug_assert!(r > 0.0);
    WheelCommand {
        left: (v + l * omega) / r,
        right: (v - l * omega) / r,
    }
}

/// Inverse of [`wheel_speeds`].
pub fn unicycle_rates(cmd: &WheelCommand, r: f64, l: f64) -> (f64, f64) {
    let v = 0.5 * r * (cmd.left + cmd.right);
    let omega = 0.5 * r * (cmd.left - cmd.right) / l;
    (v, omega)
}

/// Planar pose of the driving robot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DrivePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// RK4 step of the unicycle kinematics with constant (V, omega); long steps
/// are subdivided so a full circle closes to integrator accuracy.
pub fn unicycle_step(pose: &DrivePose, v: f64, omega: f64, dt: f64) -> DrivePose {
    debug_assert!(dt > 0.0);
    let substeps = (dt / 0.005).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let deriv = |p: &DrivePose| (v * p.heading.cos(), v * p.heading.sin(), omega);
    let mut p = *pose;
    for _ in 0..substeps {
        let k1 = deriv(&p);
        let mid1 = DrivePose {
            x: p.x + 0.5 * h * k1.0,
            y: p.y + 0.5 * h * k1.1,
            heading: p.heading + 0.5 * h * k1.2,
        };
        let k2 = deriv(&mid1);
        let mid2 = DrivePose {
            x: p.x + 0.5 * h * k2.0,
            y: p.y + 0.5 * h * k2.1,
            heading: p.heading + 0.5 * h * k2.2,
        };
        let k3 = deriv(&mid2);
        let end = DrivePose {
            x: p.x + h * k3.0,
            y: p.y + h * k3.1,
            heading: p.heading + h * k3.2,
        };
        let k4 = deriv(&end);
        p = DrivePose {
            x: p.x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y: p.y + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            heading: p.heading + h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        };
    }
    p
}

#[derive(Debug, Clone, Copy)]
pub struct DriveGains {
    pub k_v: f64,
    pub k_heading: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for DriveGains {
    fn default() -> Self {
        Self {
            k_v: 1.0,
            k_heading: 2.0,
            v_max: 1.0,
            omega_max: 2.0,
        }
    }
}

/// Saturated proportional tracking toward a planar target; targets behind
/// the robot are handled by turning in place.
pub fn drive_track(pose: &DrivePose, target: &[f64; 2], gains: &DriveGains) -> (f64, f64) {
    let dx = target[0] - pose.x;
    let dy = target[1] - pose.y;
    let dist = (dx * dx + dy * dy).sqrt();
    if dist < 1e-12 {
        return (0.0, 0.0);
    }
    let bearing = dy.atan2(dx);
    let heading_err = wrap_angle(bearing - pose.heading);
    let omega = (gains.k_heading * heading_err).clamp(-gains.omega_max, gains.omega_max);
    if heading_err.abs() > std::f64::consts::FRAC_PI_2 {
        return (0.0, omega);
    }
    let longitudinal = dist * heading_err.cos();
    let v = (gains.k_v * longitudinal).clamp(0.0, gains.v_max);
    (v, omega)
}

/// Wrap to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

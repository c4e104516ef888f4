//! Robot parameter set and its on-disk representation.
//!
//! Everything the physics, kinematics and controllers need is collected in
//! [`RobotParams`] and loaded from a single TOML file (SI units; the tilt
//! linkage is specified in centimeters, matching how such mechanisms are
//! usually drawn). Mass and thrust-to-weight come from the target platform;
//! the arm/inertia geometry entries are engineering estimates consistent
//! with the stated envelope and are meant to be edited.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::tilt::LinkageGeometry;

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("failed to parse parameter file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// One rigid component of the composite inertia model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyComponent {
    /// Mass in kg.
    pub mass: f64,
    /// Full box dimensions (x, y, z) in m.
    pub dims: [f64; 3],
}

/// Thin-disc component (spinning propeller).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscComponent {
    pub mass: f64,
    /// Disc radius in m.
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InertiaLayout {
    /// Central chassis, centered on the body origin.
    pub base: BodyComponent,
    /// One tilting arm (left and right are mirror images).
    pub arm: BodyComponent,
    /// One propeller disc; there are four.
    pub propeller: DiscComponent,
    /// Arm hinge position (0, +hinge_y, hinge_z); mirrored for the right side.
    pub hinge_y: f64,
    pub hinge_z: f64,
    /// Arm center of mass, measured from the hinge along the arm.
    pub arm_com_offset: f64,
    /// Propeller/wheel axis, measured from the hinge along the arm.
    pub arm_reach: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WheelParams {
    /// Wheel radius in m.
    pub radius: f64,
    /// Half wheel base in m (differential-drive geometry).
    pub half_base: f64,
}

/// Geometry used for touchdown/clearance checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContactParams {
    /// Full chassis box dimensions (x, y, z) in m, centered on the origin.
    pub body_dims: [f64; 3],
    /// Attitude margin at touchdown before the landing is flagged as a
    /// tip-over, in degrees.
    pub tip_threshold_deg: f64,
}

/// Complete physical description of the robot.
#[derive(Debug, Clone)]
pub struct RobotParams {
    pub mass: f64,
    pub gravity: f64,
    /// Thrust per unit normalized command, per rotor (N).
    pub k_t: f64,
    /// Drag-moment coefficient (m); rotor moment = k_m * thrust.
    pub k_m: f64,
    /// Rotor offsets: rotors sit at (+-arm_x, +-arm_y, rotor_z).
    pub rotor_arm_x: f64,
    pub rotor_arm_y: f64,
    pub rotor_z: f64,
    /// Spin direction of each rotor, two CW and two CCW.
    pub spin_signs: [f64; 4],
    /// Tilt rotation sign about the body x-axis for the left (+y) and right
    /// (-y) rotor pairs. With R_x(sign * phi) applied to +z, the defaults
    /// (-1, +1) make the thrust axes lean outward and the jets impinge
    /// underneath the body.
    pub tilt_sign_left: f64,
    pub tilt_sign_right: f64,
    pub inertia: InertiaLayout,
    pub linkage: LinkageGeometry,
    pub wheels: WheelParams,
    pub contact: ContactParams,
}

impl RobotParams {
    /// Thrust-to-weight ratio 4 k_T / (m g).
    pub fn thrust_to_weight(&self) -> f64 {
        4.0 * self.k_t / (self.mass * self.gravity)
    }

    /// Normalized command at which four untilted rotors balance gravity.
    pub fn hover_command(&self) -> f64 {
        self.mass * self.gravity / (4.0 * self.k_t)
    }

    /// Body-frame rotor positions, ordered front-left, front-right,
    /// rear-left, rear-right.
    pub fn rotor_positions(&self) -> [Vector3<f64>; 4] {
        let (lx, ly, hz) = (self.rotor_arm_x, self.rotor_arm_y, self.rotor_z);
        [
            Vector3::new(lx, ly, hz),
            Vector3::new(lx, -ly, hz),
            Vector3::new(-lx, ly, hz),
            Vector3::new(-lx, -ly, hz),
        ]
    }

    /// Tilt sign per rotor, matching [`Self::rotor_positions`] order.
    pub fn rotor_tilt_signs(&self) -> [f64; 4] {
        [
            self.tilt_sign_left,
            self.tilt_sign_right,
            self.tilt_sign_left,
            self.tilt_sign_right,
        ]
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ParamsError> {
        let raw: RawParams = toml::from_str(text)?;
        raw.build()
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let err = |m: &str| Err(ParamsError::Invalid(m.to_string()));
        if self.mass <= 0.0 {
            return err("mass must be positive");
        }
        if self.k_t <= 0.0 {
            return err("k_t must be positive");
        }
        if self.thrust_to_weight() <= 1.0 {
            return err("thrust-to-weight must exceed 1");
        }
        if self.spin_signs.iter().sum::<f64>().abs() > 1e-12 {
            return err("rotor spin signs must sum to zero");
        }
        if self.spin_signs.iter().any(|s| s.abs() != 1.0) {
            return err("rotor spin signs must be +-1");
        }
        if self.wheels.radius <= 0.0 || self.wheels.half_base <= 0.0 {
            return err("wheel geometry must be positive");
        }
        self.linkage
            .validate()
            .map_err(|e| ParamsError::Invalid(e.to_string()))?;
        Ok(())
    }
}

/// File-level schema. Kept separate from `RobotParams` so the file can stay
/// stable while derived quantities change.
#[derive(Debug, Deserialize)]
struct RawParams {
    robot: RawRobot,
    rotors: RawRotors,
    inertia: InertiaLayout,
    linkage: RawLinkage,
    wheels: WheelParams,
    contact: ContactParams,
}

#[derive(Debug, Deserialize)]
struct RawRobot {
    mass_kg: f64,
    gravity: f64,
}

#[derive(Debug, Deserialize)]
struct RawRotors {
    k_t_newton: f64,
    k_m_meter: f64,
    arm_x_m: f64,
    arm_y_m: f64,
    height_m: f64,
    spin_signs: [f64; 4],
    tilt_sign_left: f64,
    tilt_sign_right: f64,
}

/// Linkage section: lengths in cm, as on the mechanical drawing.
#[derive(Debug, Deserialize)]
struct RawLinkage {
    h_cm: f64,
    d1_cm: f64,
    d2_cm: f64,
    dx_cm: f64,
    dy_cm: f64,
    thread_pitch_cm: f64,
    counts_per_rev: f64,
}

impl RawParams {
    fn build(self) -> Result<RobotParams, ParamsError> {
        let linkage = LinkageGeometry {
            h: self.linkage.h_cm,
            d1: self.linkage.d1_cm,
            d2: self.linkage.d2_cm,
            dx: self.linkage.dx_cm,
            dy: self.linkage.dy_cm,
            pitch: self.linkage.thread_pitch_cm,
            counts_per_rev: self.linkage.counts_per_rev,
        };
        let params = RobotParams {
            mass: self.robot.mass_kg,
            gravity: self.robot.gravity,
            k_t: self.rotors.k_t_newton,
            k_m: self.rotors.k_m_meter,
            rotor_arm_x: self.rotors.arm_x_m,
            rotor_arm_y: self.rotors.arm_y_m,
            rotor_z: self.rotors.height_m,
            spin_signs: self.rotors.spin_signs,
            tilt_sign_left: self.rotors.tilt_sign_left,
            tilt_sign_right: self.rotors.tilt_sign_right,
            inertia: self.inertia,
            linkage,
            wheels: self.wheels,
            contact: self.contact,
        };
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use crate::assets;

    #[test]
    fn shipped_params_load_and_validate() {
        let p = assets::default_params();
        assert!((p.thrust_to_weight() - 2.1).abs() < 1e-9);
        assert!((p.hover_command() - 1.0 / 2.1).abs() < 1e-12);
    }

    #[test]
    fn bad_spin_signs_rejected() {
        let mut p = assets::default_params();
        p.spin_signs = [1.0, 1.0, -1.0, 1.0];
        assert!(p.validate().is_err());
    }

    #[test]
    fn thrust_to_weight_below_one_rejected() {
        let mut p = assets::default_params();
        p.k_t = p.mass * p.gravity / 8.0;
        assert!(p.validate().is_err());
    }
}

//! Cascaded-PID comparison controller.
//!
//! Classic quadrotor structure: an outer position PD produces a desired
//! acceleration, converted to collective thrust plus roll/pitch setpoints
//! under the assumption that all thrust axes point along body z; an inner
//! attitude/rate loop produces torques which a fixed mixer (also assuming
//! vertical axes) turns into rotor commands, clipped to [0, 1]. Gains are
//! tuned for untilted hover and then frozen, so the tilt-induced
//! roll/translation coupling is deliberately unmodeled.

use nalgebra::{Matrix4, Vector3, Vector4};

use crate::dynamics::{AerialInput, StateVec, StateVector};
use crate::guidance::wrap_angle;
use crate::params::RobotParams;

#[derive(Debug, Clone, Copy)]
pub struct PidGains {
    pub kp_pos: f64,
    pub kd_pos: f64,
    pub k_att: f64,
    pub k_rate: f64,
    /// Acceleration command clamp (m/s^2).
    pub accel_limit: f64,
    /// Attitude setpoint clamp (rad).
    pub attitude_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp_pos: 2.0,
            kd_pos: 2.8,
            k_att: 6.0,
            k_rate: 12.0,
            accel_limit: 4.0,
            attitude_limit: 20f64.to_radians(),
        }
    }
}

pub struct PidBaseline {
    gains: PidGains,
    params: RobotParams,
    mixer_inv: Matrix4<f64>,
    inertia: nalgebra::Matrix3<f64>,
}

impl PidBaseline {
    pub fn new(params: &RobotParams, gains: PidGains) -> Self {
        // Allocation at phi = 0: collective, roll, pitch, yaw.
        let mut mixer = Matrix4::zeros();
        let positions = params.rotor_positions();
        for i in 0..4 {
            mixer[(0, i)] = params.k_t;
            mixer[(1, i)] = params.k_t * positions[i].y;
            mixer[(2, i)] = -params.k_t * positions[i].x;
            mixer[(3, i)] = params.k_m * params.k_t * params.spin_signs[i];
        }
        let mixer_inv = mixer.try_inverse().expect("rotor layout must span the wrench space");
        Self {
            gains,
            params: params.clone(),
            mixer_inv,
            inertia: crate::dynamics::composite_inertia(0.0, params),
        }
    }

    /// One control cycle. `phi` is accepted for interface parity with the
    /// model-based controller but the control law ignores it.
    pub fn step(&self, x_hat: &StateVector, x_ref: &StateVec, _phi: f64) -> AerialInput {
        let g = &self.gains;
        let p_ref = Vector3::new(x_ref[0], x_ref[1], x_ref[2]);
        let v_ref = Vector3::new(x_ref[6], x_ref[7], x_ref[8]);

        let mut a_cmd = (p_ref - x_hat.p) * g.kp_pos + (v_ref - x_hat.v) * g.kd_pos;
        a_cmd = a_cmd.map(|a| a.clamp(-g.accel_limit, g.accel_limit));

        let yaw = x_hat.theta[0];
        let (sy, cy) = yaw.sin_cos();
        let a_bx = a_cmd.x * cy + a_cmd.y * sy;
        let a_by = -a_cmd.x * sy + a_cmd.y * cy;
        let grav = self.params.gravity;
        let pitch_des = (a_bx / grav).clamp(-g.attitude_limit, g.attitude_limit);
        let roll_des = (-a_by / grav).clamp(-g.attitude_limit, g.attitude_limit);

        let force = self.params.mass * (grav + a_cmd.z);

        let att_err = Vector3::new(
            roll_des - x_hat.theta[2],
            pitch_des - x_hat.theta[1],
            wrap_angle(x_ref[3] - yaw),
        );
        let omega_des = att_err * g.k_att;
        let torque = self.inertia * ((omega_des - x_hat.omega) * g.k_rate);

        let wrench = Vector4::new(force, torque.x, torque.y, torque.z);
        let u = self.mixer_inv * wrench;
        u.map(|c| c.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use approx::assert_relative_eq;

    #[test]
    fn zero_error_yields_hover_equilibrium() {
        let p = assets::default_params();
        let pid = PidBaseline::new(&p, PidGains::default());
        let hover = StateVector::at_position(Vector3::new(0.0, 0.0, 1.0));
        let u = pid.step(&hover, &hover.to_vector(), 0.0);
        for i in 0..4 {
            assert_relative_eq!(u[i], p.hover_command(), epsilon = 1e-10);
        }
    }

    #[test]
    fn untilted_hover_regulation_is_stable() {
        let p = assets::default_params();
        let pid = PidBaseline::new(&p, PidGains::default());
        let model = crate::dynamics::DynamicsModel::new(&p, 0.0, 1.0);
        let target = StateVector::at_position(Vector3::new(0.0, 0.0, 1.0));
        let mut s = StateVector::at_position(Vector3::new(0.3, -0.2, 0.7));
        let dt = 1e-3;
        let mut x = s.to_vector();
        let mut u = AerialInput::repeat(p.hover_command());
        for step in 0..8000 {
            if step % 7 == 0 {
                u = pid.step(&s, &target.to_vector(), 0.0);
            }
            x = model.rk4_step(&x, &u, dt).unwrap();
            s = StateVector::from_vector(&x);
        }
        assert!(
            (s.p - target.p).norm() < 0.02,
            "PID failed to settle: {:?}",
            s.p
        );
    }
}

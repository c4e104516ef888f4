//! Rigid-body dynamics of the morphing quadrotor.
//!
//! State is the 12-vector (p, theta_zyx, v_world, omega_body). The four
//! rotors produce thrust T_i = ge * k_T * u_i along axes tilted by +-phi
//! about the body x-axis (left and right pairs tilt oppositely, so the jets
//! impinge under the body), plus drag moments M_i = k_M T_i about those same
//! axes. Rotational dynamics use the tilt-dependent composite inertia of the
//! seven rigid components (base, two arms, four propeller discs) aggregated
//! about the body origin.
//!
//! The tilt angle is a kinematic parameter here, not a state: the
//! self-locking mechanism makes it a rate-commanded pure integrator handled
//! by the tilt module.

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, Vector3, Vector4};

use crate::params::RobotParams;

pub const STATE_DIM: usize = 12;
pub const INPUT_DIM: usize = 4;

pub type StateVec = SVector<f64, STATE_DIM>;
pub type AerialInput = Vector4<f64>;

/// Finite-difference step for [`linearize`].
pub const FD_STEP: f64 = 1e-6;

/// Euler-angle pitch magnitude, in radians, beyond which the zyx rate map is
/// treated as singular.
pub const EULER_SINGULARITY_LIMIT: f64 = 89.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("pitch angle {0:.3} rad is at the Euler zyx singularity")]
    EulerSingularity(f64),
    #[error("thrust-to-weight {0:.3} does not exceed 1; no critical angle exists")]
    NoCriticalAngle(f64),
    #[error("margin {margin:.3} exceeds thrust-to-weight {ttw:.3}")]
    InfeasibleMargin { margin: f64, ttw: f64 },
}

/// Rigid-body state: world position, zyx Euler attitude (yaw, pitch, roll),
/// world velocity, body angular rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub p: Vector3<f64>,
    /// (theta_z, theta_y, theta_x).
    pub theta: Vector3<f64>,
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl StateVector {
    pub fn zero() -> Self {
        Self {
            p: Vector3::zeros(),
            theta: Vector3::zeros(),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }

    pub fn at_position(p: Vector3<f64>) -> Self {
        Self { p, ..Self::zero() }
    }

    pub fn to_vector(&self) -> StateVec {
        let mut x = StateVec::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.theta);
        x.fixed_rows_mut::<3>(6).copy_from(&self.v);
        x.fixed_rows_mut::<3>(9).copy_from(&self.omega);
        x
    }

    pub fn from_vector(x: &StateVec) -> Self {
        Self {
            p: x.fixed_rows::<3>(0).into(),
            theta: x.fixed_rows::<3>(3).into(),
            v: x.fixed_rows::<3>(6).into(),
            omega: x.fixed_rows::<3>(9).into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Body-to-world rotation for the zyx Euler attitude.
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.theta[2], self.theta[1], self.theta[0])
    }
}

/// Per-rotor thrust axes for a tilt angle, matching rotor order
/// front-left, front-right, rear-left, rear-right.
pub fn rotor_axes(phi: f64, params: &RobotParams) -> [Vector3<f64>; 4] {
    let signs = params.rotor_tilt_signs();
    let (s, c) = phi.sin_cos();
    // R_x(sign * phi) applied to +z.
    signs.map(|sign| Vector3::new(0.0, -sign * s, c))
}

/// Body-frame force and torque produced by rotor commands `u` at tilt `phi`.
///
/// Per-rotor thrust is `ge_ratio * k_T * u_i` along the tilted axis; torque
/// aggregates the thrust moments about the (fixed) rotor positions plus the
/// spin-direction drag moments `k_M * T_i` along each axis.
pub fn thrust_wrench(
    u: &AerialInput,
    phi: f64,
    params: &RobotParams,
    ge_ratio: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    debug_assert!(ge_ratio > 0.0);
    let axes = rotor_axes(phi, params);
    let positions = params.rotor_positions();
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    for i in 0..4 {
        let thrust = ge_ratio * params.k_t * u[i];
        let f = axes[i] * thrust;
        force += f;
        torque += positions[i].cross(&f);
        torque += axes[i] * (params.spin_signs[i] * params.k_m * thrust);
    }
    (force, torque)
}

fn box_inertia(mass: f64, dims: [f64; 3]) -> Matrix3<f64> {
    let [dx, dy, dz] = dims;
    Matrix3::from_diagonal(&Vector3::new(
        mass / 12.0 * (dy * dy + dz * dz),
        mass / 12.0 * (dx * dx + dz * dz),
        mass / 12.0 * (dx * dx + dy * dy),
    ))
}

fn disc_inertia(mass: f64, radius: f64) -> Matrix3<f64> {
    let r2 = radius * radius;
    Matrix3::from_diagonal(&Vector3::new(
        0.25 * mass * r2,
        0.25 * mass * r2,
        0.5 * mass * r2,
    ))
}

/// Shift a component inertia from its own COM to the body origin.
fn parallel_axis(inertia_com: &Matrix3<f64>, mass: f64, com: &Vector3<f64>) -> Matrix3<f64> {
    inertia_com + mass * (Matrix3::identity() * com.norm_squared() - com * com.transpose())
}

/// Poses of the seven inertia components at tilt `phi`:
/// (mass, rotation, COM position). Order: base, left arm, right arm, then
/// the four propellers in rotor order.
pub fn component_poses(
    phi: f64,
    params: &RobotParams,
) -> Vec<(f64, Rotation3<f64>, Vector3<f64>)> {
    let lay = &params.inertia;
    let mut out = Vec::with_capacity(7);
    out.push((lay.base.mass, Rotation3::identity(), Vector3::zeros()));
    for side in [1.0f64, -1.0] {
        // side +1 is the left (+y) arm; it rotates by -phi about x so its
        // thrust axis leans outward.
        let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), -side * phi);
        let hinge = Vector3::new(0.0, side * lay.hinge_y, lay.hinge_z);
        let com = hinge + rot * Vector3::new(0.0, side * lay.arm_com_offset, 0.0);
        out.push((lay.arm.mass, rot, com));
    }
    let lx = params.rotor_arm_x;
    for (x_sign, side) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), -side * phi);
        let hinge = Vector3::new(x_sign * lx, side * lay.hinge_y, lay.hinge_z);
        let com = hinge + rot * Vector3::new(0.0, side * lay.arm_reach, 0.0);
        out.push((lay.propeller.mass, rot, com));
    }
    out
}

/// Composite inertia tensor about the body origin at tilt `phi`.
pub fn composite_inertia(phi: f64, params: &RobotParams) -> Matrix3<f64> {
    let lay = &params.inertia;
    let locals = [
        box_inertia(lay.base.mass, lay.base.dims),
        box_inertia(lay.arm.mass, lay.arm.dims),
        box_inertia(lay.arm.mass, lay.arm.dims),
        disc_inertia(lay.propeller.mass, lay.propeller.radius),
        disc_inertia(lay.propeller.mass, lay.propeller.radius),
        disc_inertia(lay.propeller.mass, lay.propeller.radius),
        disc_inertia(lay.propeller.mass, lay.propeller.radius),
    ];
    let mut total = Matrix3::zeros();
    for ((mass, rot, com), local) in component_poses(phi, params).iter().zip(locals.iter()) {
        let rotated = rot.matrix() * local * rot.matrix().transpose();
        total += parallel_axis(&rotated, *mass, com);
    }
    total
}

/// Total vehicle mass (sum of the seven components). The parameter file's
/// `mass_kg` is authoritative for the translational dynamics; this is used
/// for consistency checks.
pub fn component_mass(params: &RobotParams) -> f64 {
    let lay = &params.inertia;
    lay.base.mass + 2.0 * lay.arm.mass + 4.0 * lay.propeller.mass
}

/// Tilt angle at which the maximum vertical thrust projection equals weight.
/// Thrust-to-weight of exactly 1 is the boundary case with a zero critical
/// angle.
pub fn critical_angle(params: &RobotParams) -> Result<f64, DynamicsError> {
    let ttw = params.thrust_to_weight();
    if ttw < 1.0 {
        return Err(DynamicsError::NoCriticalAngle(ttw));
    }
    Ok((1.0 / ttw).min(1.0).acos())
}

/// Largest tilt at which `margin` times the weight remains available
/// vertically at full throttle. `margin` may equal the thrust-to-weight
/// ratio (zero tilt allowed), up to rounding.
pub fn max_flight_tilt(params: &RobotParams, margin: f64) -> Result<f64, DynamicsError> {
    let ttw = params.thrust_to_weight();
    if margin < 1.0 || margin > ttw * (1.0 + 1e-12) {
        return Err(DynamicsError::InfeasibleMargin { margin, ttw });
    }
    Ok((margin / ttw).min(1.0).acos())
}

/// External wrench (world-frame force, body-frame torque) added to the
/// equations of motion; used by the simulator for disturbances.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExternalWrench {
    pub force_world: Vector3<f64>,
    pub torque_body: Vector3<f64>,
}

/// Dynamics evaluator with the tilt-dependent quantities precomputed.
/// `phi` and `ge_ratio` are fixed for the lifetime of the model; the
/// controller and integrator rebuild it when either changes.
#[derive(Debug, Clone)]
pub struct DynamicsModel {
    pub params: RobotParams,
    pub phi: f64,
    pub ge_ratio: f64,
    axes: [Vector3<f64>; 4],
    positions: [Vector3<f64>; 4],
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
}

impl DynamicsModel {
    pub fn new(params: &RobotParams, phi: f64, ge_ratio: f64) -> Self {
        let inertia = composite_inertia(phi, params);
        let inertia_inv = inertia
            .try_inverse()
            .expect("composite inertia is positive definite");
        Self {
            params: params.clone(),
            phi,
            ge_ratio,
            axes: rotor_axes(phi, params),
            positions: params.rotor_positions(),
            inertia,
            inertia_inv,
        }
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn wrench(&self, u: &AerialInput) -> (Vector3<f64>, Vector3<f64>) {
        let mut force = Vector3::zeros();
        let mut torque = Vector3::zeros();
        for i in 0..4 {
            let thrust = self.ge_ratio * self.params.k_t * u[i];
            let f = self.axes[i] * thrust;
            force += f;
            torque += self.positions[i].cross(&f);
            torque += self.axes[i] * (self.params.spin_signs[i] * self.params.k_m * thrust);
        }
        (force, torque)
    }

    /// Time derivative of the 12-state under rotor commands `u`.
    pub fn eom(&self, x: &StateVec, u: &AerialInput) -> Result<StateVec, DynamicsError> {
        self.eom_with(x, u, &ExternalWrench::default())
    }

    pub fn eom_with(
        &self,
        x: &StateVec,
        u: &AerialInput,
        ext: &ExternalWrench,
    ) -> Result<StateVec, DynamicsError> {
        let theta_y = x[4];
        if theta_y.abs() >= EULER_SINGULARITY_LIMIT {
            return Err(DynamicsError::EulerSingularity(theta_y));
        }
        let (sz, cz) = x[3].sin_cos();
        let (sy, cy) = theta_y.sin_cos();
        let (sx, cx) = x[5].sin_cos();

        // R = Rz(theta_z) Ry(theta_y) Rx(theta_x), body to world.
        let r = Matrix3::new(
            cz * cy,
            cz * sy * sx - sz * cx,
            cz * sy * cx + sz * sx,
            sz * cy,
            sz * sy * sx + cz * cx,
            sz * sy * cx - cz * sx,
            -sy,
            cy * sx,
            cy * cx,
        );

        let omega = Vector3::new(x[9], x[10], x[11]);
        let v = Vector3::new(x[6], x[7], x[8]);
        let (f_body, tau_body) = self.wrench(u);

        let m = self.params.mass;
        let accel = r * f_body / m + Vector3::new(0.0, 0.0, -self.params.gravity)
            + ext.force_world / m;

        let tau = tau_body + ext.torque_body;
        let omega_dot = self.inertia_inv * (tau - omega.cross(&(self.inertia * omega)));

        // zyx Euler rates from body rates.
        let lateral = omega.y * sx + omega.z * cx;
        let theta_dot = Vector3::new(
            lateral / cy,
            omega.y * cx - omega.z * sx,
            omega.x + lateral * sy / cy,
        );

        let mut dx = StateVec::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&v);
        dx.fixed_rows_mut::<3>(3).copy_from(&theta_dot);
        dx.fixed_rows_mut::<3>(6).copy_from(&accel);
        dx.fixed_rows_mut::<3>(9).copy_from(&omega_dot);
        Ok(dx)
    }

    /// Classical four-stage Runge-Kutta step.
    pub fn rk4_step(
        &self,
        x: &StateVec,
        u: &AerialInput,
        dt: f64,
    ) -> Result<StateVec, DynamicsError> {
        self.rk4_step_with(x, u, dt, &ExternalWrench::default())
    }

    pub fn rk4_step_with(
        &self,
        x: &StateVec,
        u: &AerialInput,
        dt: f64,
        ext: &ExternalWrench,
    ) -> Result<StateVec, DynamicsError> {
        debug_assert!(dt > 0.0);
        let k1 = self.eom_with(x, u, ext)?;
        let k2 = self.eom_with(&(x + k1 * (dt / 2.0)), u, ext)?;
        let k3 = self.eom_with(&(x + k2 * (dt / 2.0)), u, ext)?;
        let k4 = self.eom_with(&(x + k3 * dt), u, ext)?;
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
    }

    /// Mechanical energy: kinetic (translational + rotational) plus
    /// gravitational potential. Conserved under zero thrust at fixed tilt.
    pub fn energy(&self, x: &StateVec) -> f64 {
        let v = Vector3::new(x[6], x[7], x[8]);
        let omega = Vector3::new(x[9], x[10], x[11]);
        0.5 * self.params.mass * v.norm_squared()
            + 0.5 * omega.dot(&(self.inertia * omega))
            + self.params.mass * self.params.gravity * x[2]
    }
}

/// Convenience free functions; each builds a
/// model on the fly. Hot paths hold a [`DynamicsModel`] instead.
pub fn eom(
    x: &StateVec,
    u: &AerialInput,
    phi: f64,
    params: &RobotParams,
    ge_ratio: f64,
) -> Result<StateVec, DynamicsError> {
    DynamicsModel::new(params, phi, ge_ratio).eom(x, u)
}

pub fn rk4_step(
    x: &StateVec,
    u: &AerialInput,
    phi: f64,
    dt: f64,
    params: &RobotParams,
    ge_ratio: f64,
) -> Result<StateVec, DynamicsError> {
    DynamicsModel::new(params, phi, ge_ratio).rk4_step(x, u, dt)
}

/// Central finite-difference Jacobians of the continuous dynamics at
/// (x, u, phi), with unit ground-effect ratio.
pub fn linearize(
    x: &StateVec,
    u: &AerialInput,
    phi: f64,
    params: &RobotParams,
) -> Result<(SMatrix<f64, 12, 12>, SMatrix<f64, 12, 4>), DynamicsError> {
    let model = DynamicsModel::new(params, phi, 1.0);
    let mut a = SMatrix::<f64, 12, 12>::zeros();
    let mut b = SMatrix::<f64, 12, 4>::zeros();
    for j in 0..STATE_DIM {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += FD_STEP;
        xm[j] -= FD_STEP;
        let col = (model.eom(&xp, u)? - model.eom(&xm, u)?) / (2.0 * FD_STEP);
        a.set_column(j, &col);
    }
    for j in 0..INPUT_DIM {
        let mut up = *u;
        let mut um = *u;
        up[j] += FD_STEP;
        um[j] -= FD_STEP;
        let col = (model.eom(x, &up)? - model.eom(x, &um)?) / (2.0 * FD_STEP);
        b.set_column(j, &col);
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> RobotParams {
        assets::default_params()
    }

    #[test]
    fn free_fall_derivative() {
        let p = params();
        let x = StateVector::zero().to_vector();
        let dx = eom(&x, &AerialInput::zeros(), 0.0, &p, 1.0).unwrap();
        let mut expected = StateVec::zeros();
        expected[8] = -p.gravity;
        assert_relative_eq!(dx, expected, epsilon = 1e-12);
    }

    #[test]
    fn hover_balance() {
        let p = params();
        let u = AerialInput::repeat(p.hover_command());
        let x = StateVector::zero().to_vector();
        let dx = eom(&x, &u, 0.0, &p, 1.0).unwrap();
        assert!(dx.norm() < 1e-10, "residual accel {}", dx.norm());
    }

    #[test]
    fn tilted_hover_thrust_loses_cosine() {
        let p = params();
        let phi = 50f64.to_radians();
        let u = AerialInput::repeat(p.hover_command());
        let x = StateVector::zero().to_vector();
        let dx = eom(&x, &u, phi, &p, 1.0).unwrap();
        // Lateral components cancel by symmetry; vertical deficit is
        // -g (1 - cos phi).
        assert!(dx[6].abs() < 1e-12 && dx[7].abs() < 1e-12);
        assert_relative_eq!(dx[8], -p.gravity * (1.0 - phi.cos()), epsilon = 1e-10);
    }

    #[test]
    fn symmetric_vertical_thrust() {
        let p = params();
        let u = AerialInput::repeat(0.3);
        let (f, tau) = thrust_wrench(&u, 0.0, &p, 1.0);
        assert_relative_eq!(f, Vector3::new(0.0, 0.0, 4.0 * p.k_t * 0.3), epsilon = 1e-12);
        assert!(tau.norm() < 1e-12);
    }

    #[test]
    fn untilted_differential_gives_pure_roll() {
        let p = params();
        // Left pair up, right pair down.
        let u = Vector4::new(0.6, 0.4, 0.6, 0.4);
        let (f, tau) = thrust_wrench(&u, 0.0, &p, 1.0);
        assert!(f.x.abs() < 1e-12 && f.y.abs() < 1e-12);
        assert!(tau.x.abs() > 1e-3);
        assert!(tau.y.abs() < 1e-12 && tau.z.abs() < 1e-12);
    }

    #[test]
    fn tilted_differential_couples_roll_and_lateral_force() {
        let p = params();
        let phi = 50f64.to_radians();
        let (u0, delta) = (0.5, 0.1);
        let u = Vector4::new(u0 + delta, u0 - delta, u0 + delta, u0 - delta);
        let (f, tau) = thrust_wrench(&u, phi, &p, 1.0);
        // Pair-sum difference is 4*delta; the lateral force is
        // 2 k_T sin(phi) per unit pair-sum difference / 2.
        let pair_diff = 2.0 * (u0 + delta) - 2.0 * (u0 - delta);
        assert_relative_eq!(f.y, p.k_t * phi.sin() * pair_diff, epsilon = 1e-10);
        assert!(tau.x > 0.0, "positive differential must roll positively");
        // Positive roll tips thrust toward -y: the direct force (+y) opposes
        // the roll-induced translation direction.
        assert!(f.y > 0.0);
    }

    #[test]
    fn wrench_is_linear_in_commands() {
        let p = params();
        let phi = 0.7;
        let u1 = Vector4::new(0.1, 0.4, 0.2, 0.9);
        let u2 = Vector4::new(0.5, 0.2, 0.8, 0.1);
        let (f1, t1) = thrust_wrench(&u1, phi, &p, 1.1);
        let (f2, t2) = thrust_wrench(&u2, phi, &p, 1.1);
        let (fs, ts) = thrust_wrench(&(u1 * 0.3 + u2 * 0.7), phi, &p, 1.1);
        assert_relative_eq!(fs, f1 * 0.3 + f2 * 0.7, epsilon = 1e-12);
        assert_relative_eq!(ts, t1 * 0.3 + t2 * 0.7, epsilon = 1e-12);
    }

    #[test]
    fn inertia_changes_with_tilt_and_stays_symmetric() {
        let p = params();
        let i0 = composite_inertia(0.0, &p);
        let i90 = composite_inertia(std::f64::consts::FRAC_PI_2, &p);
        assert!((i0[(0, 0)] - i90[(0, 0)]).abs() > 1e-4);
        for phi in [0.0, 0.4, 1.1] {
            let i = composite_inertia(phi, &p);
            assert_relative_eq!(i, i.transpose(), epsilon = 1e-12);
            // Left/right symmetry keeps xy and yz products zero.
            assert!(i[(0, 1)].abs() < 1e-12);
            assert!(i[(1, 2)].abs() < 1e-12);
            assert!(i.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn point_mass_layout_is_tilt_independent() {
        let mut p = params();
        p.inertia.base.dims = [0.0; 3];
        p.inertia.arm.dims = [0.0; 3];
        p.inertia.propeller.radius = 0.0;
        p.inertia.hinge_y = 0.0;
        p.inertia.hinge_z = 0.0;
        p.inertia.arm_com_offset = 0.0;
        p.inertia.arm_reach = 0.0;
        p.rotor_arm_x = 0.0;
        let i0 = composite_inertia(0.0, &p);
        let i1 = composite_inertia(1.0, &p);
        assert_relative_eq!(i0, i1, epsilon = 1e-15);
        assert!(i0.norm() < 1e-15);
    }

    /// Monte-Carlo point-mass oracle: sample points uniformly inside each
    /// component shape and sum point inertias about the origin.
    #[test]
    fn inertia_matches_point_mass_oracle() {
        let p = params();
        let phi = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut total = Matrix3::<f64>::zeros();
        let lay = p.inertia.clone();
        let shapes: Vec<(f64, Option<[f64; 3]>, Option<f64>)> = vec![
            (lay.base.mass, Some(lay.base.dims), None),
            (lay.arm.mass, Some(lay.arm.dims), None),
            (lay.arm.mass, Some(lay.arm.dims), None),
            (lay.propeller.mass, None, Some(lay.propeller.radius)),
            (lay.propeller.mass, None, Some(lay.propeller.radius)),
            (lay.propeller.mass, None, Some(lay.propeller.radius)),
            (lay.propeller.mass, None, Some(lay.propeller.radius)),
        ];
        for ((mass, rot, com), (m2, boxdims, disc)) in
            component_poses(phi, &p).iter().zip(shapes.iter())
        {
            assert_eq!(mass, m2);
            let dm = mass / n as f64;
            for _ in 0..n {
                let local = if let Some(d) = boxdims {
                    Vector3::new(
                        (rng.random::<f64>() - 0.5) * d[0],
                        (rng.random::<f64>() - 0.5) * d[1],
                        (rng.random::<f64>() - 0.5) * d[2],
                    )
                } else {
                    let r = disc.unwrap() * rng.random::<f64>().sqrt();
                    let a = rng.random::<f64>() * std::f64::consts::TAU;
                    Vector3::new(r * a.cos(), r * a.sin(), 0.0)
                };
                let pt = com + rot * local;
                total += dm * (Matrix3::identity() * pt.norm_squared() - pt * pt.transpose());
            }
        }
        let exact = composite_inertia(phi, &p);
        for i in 0..3 {
            assert_relative_eq!(total[(i, i)], exact[(i, i)], max_relative = 0.01);
        }
    }

    #[test]
    fn critical_angle_examples() {
        let mut p = params();
        assert_relative_eq!(
            critical_angle(&p).unwrap().to_degrees(),
            (1.0f64 / 2.1).acos().to_degrees(),
            epsilon = 1e-9
        );
        assert!((critical_angle(&p).unwrap().to_degrees() - 61.56).abs() < 0.01);
        p.k_t = p.mass * p.gravity * 2.0 / 4.0;
        assert_relative_eq!(critical_angle(&p).unwrap().to_degrees(), 60.0, epsilon = 1e-9);
        p.k_t = p.mass * p.gravity / 4.0;
        assert_relative_eq!(critical_angle(&p).unwrap(), 0.0, epsilon = 1e-7);
        p.k_t *= 0.9;
        assert!(matches!(
            critical_angle(&p),
            Err(DynamicsError::NoCriticalAngle(_))
        ));
    }

    #[test]
    fn max_flight_tilt_examples() {
        let p = params();
        assert_relative_eq!(
            max_flight_tilt(&p, 1.35).unwrap().to_degrees(),
            50.0,
            epsilon = 0.01
        );
        assert_relative_eq!(max_flight_tilt(&p, 2.1).unwrap(), 0.0, epsilon = 1e-7);
        assert_relative_eq!(
            max_flight_tilt(&p, 1.0).unwrap(),
            critical_angle(&p).unwrap(),
            epsilon = 1e-12
        );
        assert!(max_flight_tilt(&p, 2.2).is_err());
        assert!(max_flight_tilt(&p, 0.5).is_err());
    }

    #[test]
    fn rk4_free_fall_is_exact() {
        let p = params();
        let model = DynamicsModel::new(&p, 0.0, 1.0);
        let mut x = StateVector::zero().to_vector();
        let u = AerialInput::zeros();
        for _ in 0..1000 {
            x = model.rk4_step(&x, &u, 1e-3).unwrap();
        }
        assert_relative_eq!(x[2], -0.5 * p.gravity, epsilon = 1e-9);
    }

    #[test]
    fn rk4_zero_dynamics_identity() {
        let mut p = params();
        p.gravity = 0.0;
        let model = DynamicsModel::new(&p, 0.3, 1.0);
        let x0 = StateVector::zero().to_vector();
        let x1 = model.rk4_step(&x0, &AerialInput::zeros(), 0.005).unwrap();
        assert_eq!(x1.fixed_rows::<3>(0), x0.fixed_rows::<3>(0));
        assert_eq!(x1.fixed_rows::<3>(6), x0.fixed_rows::<3>(6));
    }

    fn spinning_initial() -> StateVec {
        let mut s = StateVector::zero();
        s.v = Vector3::new(0.3, -0.2, 0.4);
        s.omega = Vector3::new(0.8, -0.5, 0.6);
        s.theta = Vector3::new(0.2, 0.1, -0.15);
        s.to_vector()
    }

    #[test]
    fn rk4_self_convergence_order() {
        let p = params();
        let model = DynamicsModel::new(&p, 0.5, 1.0);
        let u = Vector4::new(0.5, 0.55, 0.45, 0.5);
        let horizon = 0.2;
        let run = |dt: f64| {
            let mut x = spinning_initial();
            let steps = (horizon / dt).round() as usize;
            for _ in 0..steps {
                x = model.rk4_step(&x, &u, dt).unwrap();
            }
            x
        };
        let reference = run(horizon / 1024.0);
        let e1 = (run(horizon / 32.0) - reference).norm();
        let e2 = (run(horizon / 64.0) - reference).norm();
        let order = (e1 / e2).log2();
        assert!(order >= 3.8, "measured order {order}");
    }

    #[test]
    fn ballistic_energy_conservation() {
        let p = params();
        let model = DynamicsModel::new(&p, 0.4, 1.0);
        let mut x = spinning_initial();
        let e0 = model.energy(&x);
        for _ in 0..1000 {
            x = model.rk4_step(&x, &AerialInput::zeros(), 1e-3).unwrap();
        }
        let drift = ((model.energy(&x) - e0) / e0).abs();
        assert!(drift < 1e-6, "relative energy drift {drift}");
    }

    fn mirror_state(x: &StateVec) -> StateVec {
        let mut m = *x;
        m[1] = -x[1]; // y
        m[3] = -x[3]; // theta_z
        m[5] = -x[5]; // theta_x
        m[7] = -x[7]; // v_y
        m[9] = -x[9]; // omega_x
        m[11] = -x[11]; // omega_z
        m
    }

    fn mirror_input(u: &AerialInput) -> AerialInput {
        Vector4::new(u[1], u[0], u[3], u[2])
    }

    #[test]
    fn left_right_mirror_symmetry() {
        let p = params();
        let phi = 0.6;
        let model = DynamicsModel::new(&p, phi, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = spinning_initial();
        let mut xm = mirror_state(&x);
        for _ in 0..200 {
            let u = Vector4::from_fn(|_, _| rng.random::<f64>());
            x = model.rk4_step(&x, &u, 1e-3).unwrap();
            xm = model.rk4_step(&xm, &mirror_input(&u), 1e-3).unwrap();
        }
        let err = (mirror_state(&x) - xm).norm();
        assert!(err < 1e-9, "mirror mismatch {err}");
    }

    #[test]
    fn untilted_model_has_no_lateral_force() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let u = Vector4::from_fn(|_, _| rng.random::<f64>());
            let (f, _) = thrust_wrench(&u, 0.0, &p, 1.0);
            assert!(f.x.abs() < 1e-12 && f.y.abs() < 1e-12);
        }
    }

    #[test]
    fn linearize_blocks() {
        let p = params();
        let x = StateVector::zero().to_vector();
        let u = AerialInput::repeat(p.hover_command());
        let (a, b) = linearize(&x, &u, 0.0, &p).unwrap();
        // Velocity-to-position block is the identity.
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(a[(i, 6 + j)], expect, epsilon = 1e-7);
            }
        }
        // Untilted: no lateral-acceleration response to any rotor.
        for j in 0..4 {
            assert!(b[(7, j)].abs() < 1e-7);
        }
        // Tilted: lateral response appears, proportional to sin(phi).
        let phi = 50f64.to_radians();
        let (_, b50) = linearize(&x, &u, phi, &p).unwrap();
        let expected = p.k_t * phi.sin() / p.mass;
        assert_relative_eq!(b50[(7, 0)], expected, max_relative = 0.01);
        assert_relative_eq!(b50[(7, 1)], -expected, max_relative = 0.01);
    }

    #[test]
    fn state_rotation_matches_eom_frame() {
        // The explicit matrix inside eom and StateVector::rotation must be
        // the same zyx convention: free fall of a tilted body accelerates
        // straight down in both, and a rotated thrust must match R * f.
        let p = params();
        let model = DynamicsModel::new(&p, 0.0, 1.0);
        let mut s = StateVector::zero();
        s.theta = Vector3::new(0.7, 0.3, -0.4);
        let u = AerialInput::repeat(0.6);
        let dx = model.eom(&s.to_vector(), &u).unwrap();
        let accel = Vector3::new(dx[6], dx[7], dx[8]);
        let (f_body, _) = model.wrench(&u);
        let expected = s.rotation() * f_body / p.mass + Vector3::new(0.0, 0.0, -p.gravity);
        assert_relative_eq!(accel, expected, epsilon = 1e-12);
    }

    #[test]
    fn euler_rate_map_matches_rotation_exponential() {
        // With an isotropic inertia, torque-free body rates are constant and
        // the exact attitude is R0 * exp([omega t]). Integrating the Euler
        // rate map must reproduce it.
        let mut p = params();
        p.inertia.base.dims = [0.1, 0.1, 0.1];
        p.inertia.arm.mass = 0.0;
        p.inertia.propeller.mass = 0.0;
        let model = DynamicsModel::new(&p, 0.0, 1.0);
        let mut s = StateVector::zero();
        s.theta = Vector3::new(0.4, -0.3, 0.25);
        s.omega = Vector3::new(0.7, -0.4, 0.5);
        let r0 = s.rotation();
        let mut x = s.to_vector();
        let (dt, steps) = (1e-4, 2000);
        for _ in 0..steps {
            x = model.rk4_step(&x, &AerialInput::zeros(), dt).unwrap();
        }
        let end = StateVector::from_vector(&x);
        assert_relative_eq!(end.omega, s.omega, epsilon = 1e-10);
        let exact = r0 * Rotation3::from_scaled_axis(s.omega * dt * steps as f64);
        let diff = (end.rotation().matrix() - exact.matrix()).norm();
        assert!(diff < 1e-8, "attitude integration error {diff}");
    }

    #[test]
    fn euler_singularity_flagged() {
        let p = params();
        let mut s = StateVector::zero();
        s.theta[1] = 89.5f64.to_radians();
        assert!(matches!(
            eom(&s.to_vector(), &AerialInput::zeros(), 0.0, &p, 1.0),
            Err(DynamicsError::EulerSingularity(_))
        ));
    }

    proptest! {
        #[test]
        fn wrench_superposition(a in 0.0f64..1.0, b in 0.0f64..1.0, phi in 0.0f64..1.5) {
            let p = params();
            let u1 = Vector4::new(a, b, 1.0 - a, 1.0 - b);
            let u2 = Vector4::new(b, a, a, b);
            let (f1, t1) = thrust_wrench(&u1, phi, &p, 1.0);
            let (f2, t2) = thrust_wrench(&u2, phi, &p, 1.0);
            let (fs, ts) = thrust_wrench(&(u1 + u2), phi, &p, 1.0);
            prop_assert!((fs - (f1 + f2)).norm() < 1e-10);
            prop_assert!((ts - (t1 + t2)).norm() < 1e-10);
        }
    }
}

//! Closed-chain tilt-linkage kinematics and the rate-commanded tilt integrator.
//!
//! The appendage tilt angle `phi` is driven through a closed four-link chain:
//! a worm screw translates joint A by `x` along its axis, which rotates the
//! internal angle `theta` and the output tilt `phi`. With the fixed pivot at
//! (dx, dy) the loop closes when
//!
//! ```text
//!     dx = h + d1 cos(theta) + d2 cos(phi)
//!     dy = x + d1 sin(theta) - d2 sin(phi)
//! ```
//!
//! All linkage lengths are in centimeters, angles in radians. The physical
//! branch is the one passing through the flight configuration (phi = 0,
//! sin(theta) >= 0); on that branch phi(x) is monotone increasing.

use serde::{Deserialize, Serialize};

const CLOSURE_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERS: usize = 50;
const MAX_BISECT_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    /// No closure solution exists for the requested displacement.
    #[error("displacement {0} cm is outside the feasible linkage range")]
    InfeasibleDisplacement(f64),
    /// The iterative solver hit its iteration cap without meeting tolerance.
    #[error("linkage solver failed to converge")]
    NonConvergence,
    /// The geometry itself cannot reach the requested tilt angle.
    #[error("geometry is invalid: {0}")]
    BadGeometry(String),
}

/// Link lengths and screw constants of the tilt mechanism. Lengths in cm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkageGeometry {
    /// ||AB||.
    pub h: f64,
    /// ||BC||.
    pub d1: f64,
    /// ||CD||.
    pub d2: f64,
    /// Pivot x-coordinate.
    pub dx: f64,
    /// Pivot y-coordinate.
    pub dy: f64,
    /// Screw lead, cm of travel per output-shaft revolution.
    pub pitch: f64,
    /// Encoder counts per output-shaft revolution.
    pub counts_per_rev: f64,
}

impl LinkageGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |m: &str| Err(KinematicsError::BadGeometry(m.to_string()));
        if self.h <= 0.0 || self.d1 <= 0.0 || self.d2 < 0.0 {
            return bad("link lengths must be positive");
        }
        if self.pitch <= 0.0 || self.counts_per_rev <= 0.0 {
            return bad("screw constants must be positive");
        }
        Ok(())
    }
}

/// Joint-space snapshot of the mechanism; the four fields are mutually
/// consistent under the closure equations.
#[derive(Debug, Clone, Copy)]
pub struct MechanismState {
    pub encoder_count: i64,
    pub displacement_x: f64,
    pub internal_theta: f64,
    pub tilt_phi: f64,
}

/// Linkage solver. Construction resolves the calibration offset `x_zero`
/// (the displacement at phi = 0) from the geometry, so the geometry stays
/// the single source of truth.
#[derive(Debug, Clone)]
pub struct TiltMechanism {
    geom: LinkageGeometry,
    x_zero: f64,
    x_max: f64,
}

impl TiltMechanism {
    pub fn new(geom: LinkageGeometry) -> Result<Self, KinematicsError> {
        geom.validate()?;
        let x_zero = solve_inverse(0.0, &geom)?;
        let x_max = solve_inverse(std::f64::consts::FRAC_PI_2, &geom)?;
        if x_max <= x_zero {
            return Err(KinematicsError::BadGeometry(
                "displacement must increase with tilt over the operating branch".into(),
            ));
        }
        Ok(Self { geom, x_zero, x_max })
    }

    pub fn geometry(&self) -> &LinkageGeometry {
        &self.geom
    }

    /// Displacement at phi = 0 (encoder zero).
    pub fn x_zero(&self) -> f64 {
        self.x_zero
    }

    /// Displacement at phi = 90 deg (full drive posture).
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Screw map: displacement produced by an encoder count. Affine in the
    /// count by construction.
    pub fn count_to_displacement(&self, count: i64) -> f64 {
        self.x_zero + self.geom.pitch * count as f64 / self.geom.counts_per_rev
    }

    /// Tilt angle for an encoder count; count 0 maps to phi = 0.
    pub fn encoder_to_tilt(&self, count: i64) -> Result<f64, KinematicsError> {
        let x = self.count_to_displacement(count);
        solve_forward(x, &self.geom).map(|(_, phi)| phi)
    }

    /// Full joint-space state for an encoder count.
    pub fn state_for_count(&self, count: i64) -> Result<MechanismState, KinematicsError> {
        let x = self.count_to_displacement(count);
        let (theta, phi) = solve_forward(x, &self.geom)?;
        Ok(MechanismState {
            encoder_count: count,
            displacement_x: x,
            internal_theta: theta,
            tilt_phi: phi,
        })
    }
}

/// Residual of the two closure equations at (theta, phi) for displacement x.
pub fn closure_residual(x: f64, theta: f64, phi: f64, geom: &LinkageGeometry) -> (f64, f64) {
    let r1 = geom.h + geom.d1 * theta.cos() + geom.d2 * phi.cos() - geom.dx;
    let r2 = x + geom.d1 * theta.sin() - geom.d2 * phi.sin() - geom.dy;
    (r1, r2)
}

/// Scalar closure function with theta eliminated; g(phi; x) = 0 at a
/// solution and is monotone increasing in phi on the physical branch.
fn eliminated_closure(phi: f64, x: f64, geom: &LinkageGeometry) -> f64 {
    let a = geom.dx - geom.h - geom.d2 * phi.cos(); // d1 cos(theta)
    let b = geom.dy - x + geom.d2 * phi.sin(); // d1 sin(theta)
    a * a + b * b - geom.d1 * geom.d1
}

/// Solve the closure system for (theta, phi) at displacement `x`.
///
/// Newton on the 2x2 system, seeded on the branch through the flight
/// configuration; falls back to bisection of the eliminated scalar closure
/// when Newton strays. Residuals of any returned pair are below 1e-10 cm.
pub fn solve_forward(x: f64, geom: &LinkageGeometry) -> Result<(f64, f64), KinematicsError> {
    geom.validate()?;

    let g0 = eliminated_closure(0.0, x, geom);
    let g1 = eliminated_closure(std::f64::consts::FRAC_PI_2, x, geom);
    if g0 > 0.0 && g1 > 0.0 || g0 < 0.0 && g1 < 0.0 {
        // No sign change over the operating range: the displacement cannot
        // be reached (covers degenerate d2 = 0 grids as well).
        if g0.abs() > 1e-9 && g1.abs() > 1e-9 {
            return Err(KinematicsError::InfeasibleDisplacement(x));
        }
    }

    // Seed phi by linear interpolation between the range endpoints, then
    // polish with Newton.
    let frac = if g1 - g0 != 0.0 { (-g0 / (g1 - g0)).clamp(0.0, 1.0) } else { 0.0 };
    let phi_seed = frac * std::f64::consts::FRAC_PI_2;
    let theta_seed = branch_theta(phi_seed, x, geom);

    if let Some(sol) = newton_2x2(x, theta_seed, phi_seed, geom) {
        return Ok(sol);
    }

    // Bisection fallback on the monotone eliminated closure.
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
    let (mut g_lo, _g_hi) = (g0, g1);
    for _ in 0..MAX_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        let g_mid = eliminated_closure(mid, x, geom);
        if g_mid == 0.0 || (hi - lo) < 1e-15 {
            lo = mid;
            break;
        }
        if (g_lo > 0.0) == (g_mid > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    let phi = 0.5 * (lo + hi);
    let theta = branch_theta(phi, x, geom);
    let (r1, r2) = closure_residual(x, theta, phi, geom);
    if r1.abs() < 1e-10 && r2.abs() < 1e-10 {
        Ok((theta, phi))
    } else {
        newton_2x2(x, theta, phi, geom).ok_or(KinematicsError::NonConvergence)
    }
}

/// theta on the physical branch (sin(theta) >= 0) for a given phi and x.
fn branch_theta(phi: f64, x: f64, geom: &LinkageGeometry) -> f64 {
    let cos_t = (geom.dx - geom.h - geom.d2 * phi.cos()) / geom.d1;
    let sin_t = (geom.dy - x + geom.d2 * phi.sin()) / geom.d1;
    sin_t.atan2(cos_t)
}

fn newton_2x2(x: f64, theta0: f64, phi0: f64, geom: &LinkageGeometry) -> Option<(f64, f64)> {
    let (mut theta, mut phi) = (theta0, phi0);
    for _ in 0..MAX_NEWTON_ITERS {
        let (r1, r2) = closure_residual(x, theta, phi, geom);
        if r1.abs() < CLOSURE_TOL && r2.abs() < CLOSURE_TOL {
            // Stay on the branch through the flight configuration.
            if !(-1e-9..=std::f64::consts::FRAC_PI_2 + 1e-9).contains(&phi) {
                return None;
            }
            return Some((theta, phi.clamp(0.0, std::f64::consts::FRAC_PI_2)));
        }
        // Jacobian of the residual in (theta, phi).
        let j11 = -geom.d1 * theta.sin();
        let j12 = -geom.d2 * phi.sin();
        let j21 = geom.d1 * theta.cos();
        let j22 = -geom.d2 * phi.cos();
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 {
            return None;
        }
        let d_theta = (-r1 * j22 + r2 * j12) / det;
        let d_phi = (-j11 * r2 + j21 * r1) / det;
        theta += d_theta;
        phi += d_phi;
        if !theta.is_finite() || !phi.is_finite() || !(-0.5..=2.2).contains(&phi) {
            return None;
        }
    }
    None
}

/// Displacement that realizes a tilt angle `phi` in [0, pi/2].
///
/// theta is eliminable in closed form on the physical branch, so the inverse
/// is exact: cos(theta) follows from the first closure equation and the
/// displacement from the second.
pub fn solve_inverse(phi: f64, geom: &LinkageGeometry) -> Result<f64, KinematicsError> {
    geom.validate()?;
    if !(-1e-12..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&phi) {
        return Err(KinematicsError::BadGeometry(format!(
            "tilt angle {phi} outside [0, pi/2]"
        )));
    }
    let cos_t = (geom.dx - geom.h - geom.d2 * phi.cos()) / geom.d1;
    if cos_t.abs() > 1.0 + 1e-12 {
        return Err(KinematicsError::NonConvergence);
    }
    let sin_t = (1.0 - cos_t.clamp(-1.0, 1.0).powi(2)).max(0.0).sqrt();
    Ok(geom.dy - geom.d1 * sin_t + geom.d2 * phi.sin())
}

/// Rate-commanded tilt integration. The self-locking mechanism behaves as a
/// pure integrator; the configuration-dependent cap comes from the flight
/// mode supervisor.
pub fn tilt_integrate(phi: f64, rate: f64, dt: f64, phi_limit: f64) -> f64 {
    debug_assert!(dt > 0.0);
    (phi + rate * dt).clamp(0.0, phi_limit)
}

//! Blended-cost receding-horizon controller.
//!
//! The flight objective L1 and the near-ground transition objective L2 are
//! both quadratic; the controller tracks their convex combination
//! `alpha L1 + (1 - alpha) L2` where the blending factor
//! `alpha(z, phi) = f(z) cos(phi)` fades with tilt and vanishes at the
//! ground. The transition weights zero out position and velocity, so close
//! to touchdown the controller deliberately goes open loop vertically and
//! spends its saturated authority on rate damping.
//!
//! Each control cycle performs one warm-started Gauss-Newton iteration of
//! the shooting NLP (a real-time iteration); `alpha` is refreshed only every
//! `alpha_update_period` cycles.

pub mod qp;
pub mod sqp;

use std::time::Instant;

use nalgebra::SVector;

use crate::dynamics::{self, AerialInput, StateVec, StateVector};
use crate::params::RobotParams;
use serde::{Deserialize, Serialize};
pub use sqp::{
    condense, sqp_iterate, stationarity, transcribe, Iterate, Nlp, PredictionModel, Reference,
    SqpError, SqpMode, SqpOutcome,
};

/// Horizon and solver constants of the optimal control problem.
#[derive(Debug, Clone)]
pub struct OcpConfig {
    pub horizon_s: f64,
    pub nodes: usize,
    pub u_min: f64,
    pub u_max: f64,
    /// Controller cycles between blending-factor updates.
    pub alpha_update_period: u32,
    pub control_rate_hz: f64,
    /// Upper bound on the RK4 substep inside the node map.
    pub max_substep_s: f64,
}

impl Default for OcpConfig {
    fn default() -> Self {
        Self {
            horizon_s: 1.0,
            nodes: 10,
            u_min: 0.0,
            u_max: 1.0,
            alpha_update_period: 10,
            control_rate_hz: 150.0,
            max_substep_s: 0.01,
        }
    }
}

impl OcpConfig {
    pub fn dt_node(&self) -> f64 {
        self.horizon_s / self.nodes as f64
    }

    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate_hz
    }
}

/// Diagonal weight sets for the two flight phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPreset {
    /// Weights used for the original wheel-landing flights.
    Baseline,
    /// Later retuning with better disturbance rejection.
    Retuned,
}

#[derive(Debug, Clone)]
pub struct CostWeights {
    /// Flight-phase state weights, state order (p, theta_zyx, v, omega).
    pub q1: StateVec,
    /// Transition-phase state weights; position and velocity entries are
    /// zero, reflecting the loss of controllability there.
    pub q2: StateVec,
    pub r: AerialInput,
}

impl CostWeights {
    pub fn preset(preset: WeightPreset) -> Self {
        let r = AerialInput::repeat(0.1);
        match preset {
            WeightPreset::Baseline => Self {
                q1: SVector::from_row_slice(&[
                    1.0, 1.0, 1.0, 10.0, 10.0, 20.0, 0.1, 0.1, 0.1, 3.0, 5.0, 1.5,
                ]),
                q2: SVector::from_row_slice(&[
                    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 5.0, 1.5,
                ]),
                r,
            },
            WeightPreset::Retuned => Self {
                q1: SVector::from_row_slice(&[
                    1.0, 1.0, 1.0, 10.0, 10.0, 18.0, 0.1, 0.1, 0.8, 1.5, 2.7, 2.0,
                ]),
                q2: SVector::from_row_slice(&[
                    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5, 2.7, 2.0,
                ]),
                r,
            },
        }
    }

    /// alpha q1 + (1 - alpha) q2.
    pub fn blended_state_weights(&self, alpha: f64) -> StateVec {
        self.q1 * alpha + self.q2 * (1.0 - alpha)
    }
}

/// Heights defining the transition corridor for the blending factor.
#[derive(Debug, Clone, Copy)]
pub struct BlendContext {
    /// Height above which flight weights apply fully.
    pub z_star: f64,
    /// Ground height.
    pub z_ground: f64,
}

impl Default for BlendContext {
    fn default() -> Self {
        Self {
            z_star: 0.45,
            z_ground: 0.0,
        }
    }
}

/// Blending factor alpha(z, phi) = f(z) cos(phi), clamped to [0, 1]:
/// f(z) is 1 above z_star, ramps linearly to 0 at the ground, and is 0 below.
pub fn blend_alpha(z: f64, phi: f64, ctx: &BlendContext) -> f64 {
    debug_assert!(ctx.z_star > ctx.z_ground);
    let f = if z >= ctx.z_star {
        1.0
    } else if z >= ctx.z_ground {
        (z - ctx.z_ground) / (ctx.z_star - ctx.z_ground)
    } else {
        0.0
    };
    (f * phi.cos()).clamp(0.0, 1.0)
}

/// Blended quadratic stage cost
/// `alpha (|x-x_ref|^2_Q1 + |u-u_ref|^2_R) + (1-alpha) (|x-x_ref|^2_Q2 + |u-u_ref|^2_R)`.
pub fn stage_cost(
    x: &StateVec,
    u: &AerialInput,
    x_ref: &StateVec,
    u_ref: &AerialInput,
    alpha: f64,
    weights: &CostWeights,
) -> f64 {
    let w = weights.blended_state_weights(alpha);
    let e = x - x_ref;
    let f = u - u_ref;
    let state: f64 = e.iter().zip(w.iter()).map(|(e, w)| w * e * e).sum();
    let input: f64 = f.iter().zip(weights.r.iter()).map(|(f, r)| r * f * f).sum();
    state + input
}

/// Per-cycle solver telemetry.
#[derive(Debug, Clone, Copy)]
pub struct NmpcDiagnostics {
    pub alpha: f64,
    pub objective: f64,
    pub qp_kkt_residual: f64,
    pub solve_time_s: f64,
    /// True when the solver failed and the previous input was replayed.
    pub fallback: bool,
}

/// Receding-horizon controller instance. Owns its warm-start trajectory;
/// calls must be sequential per instance.
pub struct NmpcController {
    cfg: OcpConfig,
    weights: CostWeights,
    blend: BlendContext,
    params: RobotParams,
    /// Tilt cap used for the input reference; the hover equilibrium is
    /// evaluated at min(phi, cap) so past-critical postures do not drag the
    /// reference to full throttle.
    u_ref_tilt_cap: f64,
    warm: Option<Iterate>,
    alpha: f64,
    cycle: u64,
    last_input: AerialInput,
    pub diagnostics: Vec<NmpcDiagnostics>,
}

impl NmpcController {
    pub fn new(
        params: &RobotParams,
        cfg: OcpConfig,
        preset: WeightPreset,
        blend: BlendContext,
    ) -> Self {
        let u_ref_tilt_cap = dynamics::max_flight_tilt(params, 1.35).unwrap_or(0.0);
        Self {
            cfg,
            weights: CostWeights::preset(preset),
            blend,
            params: params.clone(),
            u_ref_tilt_cap,
            warm: None,
            alpha: 1.0,
            cycle: 0,
            last_input: AerialInput::repeat(params.hover_command()),
            diagnostics: Vec::new(),
        }
    }

    pub fn config(&self) -> &OcpConfig {
        &self.cfg
    }

    pub fn current_alpha(&self) -> f64 {
        self.alpha
    }

    /// Hover-equilibrium input at tilt `phi`, with the tilt capped so the
    /// reference stays meaningful past the critical angle.
    pub fn input_reference(&self, phi: f64) -> AerialInput {
        let phi_eff = phi.min(self.u_ref_tilt_cap);
        let u = (self.params.hover_command() / phi_eff.cos()).clamp(0.0, 1.0);
        AerialInput::repeat(u)
    }

    /// Reset warm-start state (for example after a mode change on the
    /// ground).
    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// One control cycle: returns the first input of the updated plan,
    /// guaranteed inside the box bounds by the QP itself.
    pub fn step(
        &mut self,
        x_hat: &StateVector,
        x_ref: &StateVec,
        phi: f64,
        z_above_ground: f64,
    ) -> AerialInput {
        let started = Instant::now();
        if !x_hat.is_finite() || !x_ref.iter().all(|v| v.is_finite()) {
            return self.fallback(started);
        }
        if self.cycle.is_multiple_of(self.alpha_update_period()) {
            self.alpha = blend_alpha(z_above_ground, phi, &self.blend);
        }
        self.cycle += 1;

        let reference = Reference {
            x_ref: *x_ref,
            u_ref: self.input_reference(phi),
        };
        let nlp = transcribe(
            x_hat.to_vector(),
            reference,
            phi,
            self.alpha,
            &self.cfg,
            &self.weights,
            &self.params,
        );

        let start = match self.warm.take() {
            Some(prev) => prev.shifted(),
            None => match nlp.cold_start(nlp.reference.u_ref) {
                Ok(it) => it,
                Err(_) => return self.fallback(started),
            },
        };

        match sqp_iterate(&nlp, start, SqpMode::RealTimeSingleStep) {
            Ok(out) => {
                let u = out.iterate.inputs[0];
                self.warm = Some(out.iterate);
                self.last_input = u;
                self.diagnostics.push(NmpcDiagnostics {
                    alpha: self.alpha,
                    objective: out.objective,
                    qp_kkt_residual: out.qp_kkt,
                    solve_time_s: started.elapsed().as_secs_f64(),
                    fallback: false,
                });
                u
            }
            Err(_) => self.fallback(started),
        }
    }

    fn alpha_update_period(&self) -> u64 {
        self.cfg.alpha_update_period.max(1) as u64
    }

    /// Documented failsafe: replay the previous input and cold-start the
    /// next cycle.
    fn fallback(&mut self, started: Instant) -> AerialInput {
        self.warm = None;
        self.diagnostics.push(NmpcDiagnostics {
            alpha: self.alpha,
            objective: f64::NAN,
            qp_kkt_residual: f64::NAN,
            solve_time_s: started.elapsed().as_secs_f64(),
            fallback: true,
        });
        self.last_input
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn blend_examples() {
        let ctx = BlendContext::default();
        assert_eq!(blend_alpha(0.45, 0.0, &ctx), 1.0);
        assert_eq!(blend_alpha(2.0, 0.0, &ctx), 1.0);
        assert_eq!(blend_alpha(0.0, 0.3, &ctx), 0.0);
        assert_eq!(blend_alpha(-0.1, 0.0, &ctx), 0.0);
        let mid = 0.5 * (0.45 + 0.0);
        assert_relative_eq!(
            blend_alpha(mid, 60f64.to_radians(), &ctx),
            0.25,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            blend_alpha(1.0, std::f64::consts::FRAC_PI_2, &ctx),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stage_cost_examples() {
        let w = CostWeights::preset(WeightPreset::Baseline);
        let x = StateVec::zeros();
        let u = AerialInput::repeat(0.4);
        assert_eq!(stage_cost(&x, &u, &x, &u, 1.0, &w), 0.0);

        // At alpha = 0 the transition weights zero out position error.
        let mut x_off = x;
        x_off[0] = 3.0;
        x_off[2] = -1.0;
        let mut u_off = u;
        u_off[0] += 0.5;
        let c = stage_cost(&x_off, &u_off, &x, &u, 0.0, &w);
        assert_relative_eq!(c, 0.1 * 0.25, epsilon = 1e-12);

        // Unit yaw-rate error with equal weights in both phases.
        let mut x_wz = x;
        x_wz[11] = 1.0;
        assert_relative_eq!(stage_cost(&x_wz, &u, &x, &u, 0.5, &w), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn alpha_held_between_update_ticks() {
        let params = assets::default_params();
        let mut ctl = NmpcController::new(
            &params,
            OcpConfig::default(),
            WeightPreset::Baseline,
            BlendContext::default(),
        );
        let hover = StateVector::at_position(Vector3::new(0.0, 0.0, 2.0));
        let x_ref = hover.to_vector();
        ctl.step(&hover, &x_ref, 0.0, 2.0);
        let a0 = ctl.current_alpha();
        assert_eq!(a0, 1.0);
        // Height now inside the corridor; alpha must stay frozen for the
        // rest of the period.
        for _ in 0..9 {
            ctl.step(&hover, &x_ref, 0.0, 0.2);
            assert_eq!(ctl.current_alpha(), a0);
        }
        ctl.step(&hover, &x_ref, 0.0, 0.2);
        assert!(ctl.current_alpha() < a0);
    }

    #[test]
    fn hover_regulation_settles_to_equilibrium_input() {
        let params = assets::default_params();
        let mut ctl = NmpcController::new(
            &params,
            OcpConfig::default(),
            WeightPreset::Baseline,
            BlendContext::default(),
        );
        let hover = StateVector::at_position(Vector3::new(0.0, 0.0, 2.0));
        let x_ref = hover.to_vector();
        let mut u = AerialInput::zeros();
        for _ in 0..20 {
            u = ctl.step(&hover, &x_ref, 0.0, 2.0);
        }
        let mean = u.mean();
        assert_relative_eq!(mean, 1.0 / 2.1, epsilon = 1e-6);
        for i in 0..4 {
            assert!((0.0..=1.0).contains(&u[i]));
        }
    }

    #[test]
    fn deterministic_given_identical_state() {
        let params = assets::default_params();
        let mk = || {
            NmpcController::new(
                &params,
                OcpConfig::default(),
                WeightPreset::Retuned,
                BlendContext::default(),
            )
        };
        let mut a = mk();
        let mut b = mk();
        let mut s = StateVector::at_position(Vector3::new(0.1, -0.2, 1.5));
        s.v = Vector3::new(0.1, 0.0, -0.3);
        let x_ref = StateVector::at_position(Vector3::new(0.0, 0.0, 1.5)).to_vector();
        for _ in 0..5 {
            let ua = a.step(&s, &x_ref, 0.4, 1.5);
            let ub = b.step(&s, &x_ref, 0.4, 1.5);
            assert_eq!(ua, ub);
        }
    }

    #[test]
    fn solver_failure_replays_previous_input() {
        let params = assets::default_params();
        let mut ctl = NmpcController::new(
            &params,
            OcpConfig::default(),
            WeightPreset::Baseline,
            BlendContext::default(),
        );
        let hover = StateVector::at_position(Vector3::new(0.0, 0.0, 2.0));
        let x_ref = hover.to_vector();
        let good = ctl.step(&hover, &x_ref, 0.0, 2.0);
        // Non-finite estimate: the solver must refuse and fall back.
        let mut broken = hover;
        broken.v.x = f64::NAN;
        let fallback = ctl.step(&broken, &x_ref, 0.0, 2.0);
        assert_eq!(fallback, good);
        assert!(ctl.diagnostics.last().unwrap().fallback);
        // And recover cleanly on the next valid estimate.
        let recovered = ctl.step(&hover, &x_ref, 0.0, 2.0);
        assert!(!ctl.diagnostics.last().unwrap().fallback);
        assert!((recovered.mean() - 1.0 / 2.1).abs() < 1e-3);
    }

    #[test]
    fn input_reference_capped_past_flight_tilt() {
        let params = assets::default_params();
        let ctl = NmpcController::new(
            &params,
            OcpConfig::default(),
            WeightPreset::Baseline,
            BlendContext::default(),
        );
        let at_50 = ctl.input_reference(50f64.to_radians())[0];
        let at_70 = ctl.input_reference(70f64.to_radians())[0];
        assert_relative_eq!(at_50, (1.0 / 2.1) / 50f64.to_radians().cos(), epsilon = 1e-3);
        assert_relative_eq!(at_70, at_50, epsilon = 1e-12);
        assert!(at_70 < 0.8);
    }

    proptest! {
        #[test]
        fn blend_alpha_in_unit_interval(z in -1.0f64..3.0, phi in 0.0f64..std::f64::consts::FRAC_PI_2) {
            let ctx = BlendContext::default();
            let a = blend_alpha(z, phi, &ctx);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn stage_cost_is_convex_combination(
            alpha in 0.0f64..1.0,
            e in -2.0f64..2.0,
            i in 0usize..12,
        ) {
            let w = CostWeights::preset(WeightPreset::Baseline);
            let x_ref = StateVec::zeros();
            let u = AerialInput::repeat(0.5);
            let mut x = x_ref;
            x[i] = e;
            let l1 = stage_cost(&x, &u, &x_ref, &u, 1.0, &w);
            let l2 = stage_cost(&x, &u, &x_ref, &u, 0.0, &w);
            let blended = stage_cost(&x, &u, &x_ref, &u, alpha, &w);
            prop_assert!(blended >= l1.min(l2) - 1e-12);
            prop_assert!(blended <= l1.max(l2) + 1e-12);
        }
    }
}

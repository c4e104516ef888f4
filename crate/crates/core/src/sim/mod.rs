//! Closed-loop scenario engine.
//!
//! Fixed-step physics (RK4, 1 ms default) with the controller held in
//! zero-order hold between cycles. Each control cycle: estimate -> mode
//! supervisor -> tilt and position references -> thrust controller and
//! drive controller -> actuator switch. The plant applies the sampled
//! ground-effect ratio, scheduled body-frame impulses, touchdown resolution
//! against the (possibly sloped) surface, and wheel-driven unicycle motion
//! once on the ground. Runs are deterministic for a given scenario and seed.

pub mod contact;
pub mod log;
pub mod pid;
pub mod scenario;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;

use crate::dynamics::{composite_inertia, AerialInput, DynamicsModel, StateVec, StateVector};
use crate::ground_effect::GroundEffectTable;
use crate::guidance::{
    actuator_switch, drive_track, mode_update, position_reference, tilt_reference, unicycle_rates,
    unicycle_step, wheel_speeds, DriveGains, DrivePose, FlightMode, ModeConfig, ModeState,
    WheelCommand,
};
use crate::nmpc::{blend_alpha, BlendContext, NmpcController, OcpConfig};
use crate::params::RobotParams;
use crate::tilt::tilt_integrate;

use contact::{contact_resolve, wheel_contact_height, ContactOutcome, Surface};
use log::{EventKind, LogRow, SimEvent, SimLog, SimError, TouchdownRecord};
use pid::{PidBaseline, PidGains};
use scenario::{ReferenceMode, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Nmpc,
    PidBaseline,
}

/// Summary statistics of the thrust controller's solves, copied into the
/// log for throughput reporting.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolverStats {
    pub cycles: usize,
    pub mean_solve_time_s: f64,
    pub max_solve_time_s: f64,
    pub fallbacks: usize,
}

pub struct RunResult {
    pub log: SimLog,
    pub solver: SolverStats,
}

/// Execute a scenario to completion (or early termination on body strike /
/// tip-over, which is recorded in the log rather than treated as an error).
pub fn run(
    sc: &Scenario,
    params: &RobotParams,
    table: &GroundEffectTable,
    controller: ControllerKind,
) -> Result<RunResult, SimError> {
    sc.validate()
        .map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;

    let surface = Surface {
        height: sc.environment.ground_height_m,
        slope: sc.environment.slope_deg.to_radians(),
    };
    let mode_cfg = ModeConfig {
        z_star: sc.guidance.z_star_m,
        phi_limit_flight: sc.guidance.phi_limit_flight_deg.to_radians(),
        phi_limit_transition: sc.guidance.phi_limit_transition_deg.to_radians(),
        ..ModeConfig::default()
    };
    let blend = BlendContext {
        z_star: sc.guidance.z_star_m,
        z_ground: sc.guidance.blend_ground_m,
    };
    let mut nmpc = NmpcController::new(params, OcpConfig::default(), sc.weight_preset, blend);
    let pid = PidBaseline::new(params, PidGains::default());
    let drive_gains = DriveGains::default();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

    let dt = sc.physics_dt_s;
    let steps_per_cycle = sc.steps_per_cycle();
    let t_c = sc.control_period();
    let total_steps = (sc.duration_s / dt).round() as usize;

    let mut phi = sc.initial.tilt_deg.to_radians();
    let mut state = StateVector {
        p: Vector3::from_row_slice(&sc.initial.position_m),
        theta: Vector3::new(sc.initial.heading_deg.to_radians(), 0.0, 0.0),
        v: Vector3::from_row_slice(&sc.initial.velocity_m_s),
        omega: Vector3::zeros(),
    };
    let mut mode = if sc.initial.grounded {
        ModeState::on_ground(&mode_cfg)
    } else {
        ModeState::airborne(&mode_cfg)
    };
    let mut on_surface = sc.initial.grounded;
    let mut drive = plane_pose(&state, &surface);
    if on_surface {
        conform_to_surface(&mut state, &drive, phi, &surface, params, 0.0, 0.0);
    }

    let mut log = SimLog::new(&sc.name, sc.seed, sc.ground_effect);
    log.events.push(SimEvent {
        t: 0.0,
        kind: EventKind::ModeChange(mode.mode),
    });

    let mut tilt_rate = 0.0;
    let mut u_thrust = AerialInput::zeros();
    let mut u_wheels = WheelCommand::default();
    // Velocity steering integrates the command into a reference carrot,
    // leashed to the vehicle so it cannot wind up out of reach.
    let mut carrot = state.p;
    let carrot_leash = 0.5;
    let mut ge_noise = 0.0;
    let mut ge_now = 1.0;
    let mut disturb_idx = 0usize;
    let mut was_in_flight = !sc.initial.grounded;
    let mut touchdown_recorded = false;
    let mut last_plane_xy: Option<(f64, f64)> = None;

    for step in 0..total_steps {
        let t = step as f64 * dt;

        if step % steps_per_cycle == 0 {
            // --- Control cycle ---
            let x_meas = measure(&state, &sc.noise, &mut rng);
            let z_rel = surface.distance(&x_meas.p);
            let v_n = surface.normal().dot(&x_meas.v);
            let cmd = sc.pilot_at(t).limited();
            let contact_h = wheel_contact_height(phi, params);

            let prev = mode;
            mode = mode_update(z_rel, v_n, phi, &cmd, contact_h, &mode_cfg, t_c, &prev);
            if mode.mode != prev.mode {
                log.events.push(SimEvent {
                    t,
                    kind: EventKind::ModeChange(mode.mode),
                });
            }
            if mode.takeoff_pending() && !prev.takeoff_pending() {
                log.events.push(SimEvent {
                    t,
                    kind: EventKind::TakeoffRelease,
                });
            }
            if mode.mode == FlightMode::Flight {
                was_in_flight = true;
            }

            tilt_rate = tilt_reference(
                z_rel,
                cmd.throttle,
                mode.grounded,
                sc.guidance.z_phi_m,
                sc.guidance.tilt_rate_rad_s,
            );

            let p_ref = match sc.reference {
                ReferenceMode::Pilot => {
                    carrot = position_reference(&carrot, &cmd, t_c);
                    let rel = carrot - x_meas.p;
                    carrot = x_meas.p + rel.map(|c| c.clamp(-carrot_leash, carrot_leash));
                    carrot
                }
                ReferenceMode::Setpoint => sc.setpoint_at(t).unwrap_or(x_meas.p),
            };
            let mut x_ref = StateVec::zeros();
            x_ref.fixed_rows_mut::<3>(0).copy_from(&p_ref);

            let (u_a, alpha_now) = if mode.mode == FlightMode::Grounded {
                nmpc.reset();
                (AerialInput::zeros(), 0.0)
            } else {
                match controller {
                    ControllerKind::Nmpc => {
                        let u = nmpc.step(&x_meas, &x_ref, phi, z_rel.max(0.0));
                        (u, nmpc.current_alpha())
                    }
                    ControllerKind::PidBaseline => (
                        pid.step(&x_meas, &x_ref, phi),
                        blend_alpha(z_rel.max(0.0), phi, &blend),
                    ),
                }
            };

            let pose_est = plane_pose(&x_meas, &surface);
            let target = plane_coords(&p_ref, &surface);
            let (v_d, w_d) = drive_track(&pose_est, &target, &drive_gains);
            let u_g = wheel_speeds(v_d, w_d, params.wheels.radius, params.wheels.half_base);
            let routed = actuator_switch(mode.mode, &u_a, &u_g);
            u_thrust = routed.0;
            u_wheels = routed.1;

            ge_noise = if sc.ground_effect {
                StandardNormal.sample(&mut rng)
            } else {
                0.0
            };

            let drift = (state.p - p_ref).xy().norm();
            log.max_lateral_drift = log.max_lateral_drift.max(drift);
            if t >= sc.duration_s - 1.0 {
                log.final_position_error = log.final_position_error.max(drift);
            }

            log.rows.push(LogRow {
                t,
                state,
                phi,
                alpha: alpha_now,
                u: u_thrust,
                wheels: u_wheels,
                mode: mode.mode,
                ge_ratio: ge_now,
            });
        }

        // --- Physics step ---
        phi = tilt_integrate(phi, tilt_rate, dt, mode.phi_limit);

        if !on_surface {
            let rot = state.rotation();
            let rotor_plane = state.p + rot * Vector3::new(0.0, 0.0, params.rotor_z);
            let z_rotor = surface.distance(&rotor_plane).max(0.0);
            ge_now = if sc.ground_effect {
                (table.thrust_ratio(z_rotor, phi) + table.sigma_at(z_rotor, phi) * ge_noise)
                    .max(0.05)
            } else {
                1.0
            };

            while disturb_idx < sc.disturbance.len() && sc.disturbance[disturb_idx].t_s <= t {
                let d = &sc.disturbance[disturb_idx];
                let imp = Vector3::from_row_slice(&d.impulse_n_s);
                let tau = Vector3::from_row_slice(&d.torque_n_m_s);
                state.v += rot * imp / params.mass;
                let inertia = composite_inertia(phi, params);
                state.omega += inertia
                    .try_inverse()
                    .unwrap_or_else(Matrix3::identity)
                    * tau;
                disturb_idx += 1;
            }

            let model = DynamicsModel::new(params, phi, ge_now);
            let x_next = model
                .rk4_step(&state.to_vector(), &u_thrust, dt)
                .map_err(|_| SimError::Diverged(t))?;
            if !x_next.iter().all(|v| v.is_finite()) {
                return Err(SimError::Diverged(t));
            }
            state = StateVector::from_vector(&x_next);

            match contact_resolve(&state, phi, &surface, params) {
                ContactOutcome::Airborne => {}
                ContactOutcome::BodyStrike => {
                    log.events.push(SimEvent {
                        t,
                        kind: EventKind::BodyStrike,
                    });
                    break;
                }
                ContactOutcome::Touchdown { tipped } => {
                    if was_in_flight && !touchdown_recorded {
                        touchdown_recorded = true;
                        log.touchdown = Some(TouchdownRecord {
                            t,
                            phi_g: phi,
                            impact_speed: state.v.z.abs(),
                            roll: state.theta[2],
                            pitch: state.theta[1],
                            tipped,
                        });
                        log.events.push(SimEvent {
                            t,
                            kind: EventKind::Touchdown,
                        });
                        if tipped {
                            log.events.push(SimEvent {
                                t,
                                kind: EventKind::Tipover,
                            });
                            break;
                        }
                    }
                    on_surface = true;
                    was_in_flight = false;
                    drive = plane_pose(&state, &surface);
                    last_plane_xy = Some((drive.x, drive.y));
                    let v_plane = (state.v - surface.normal() * v_component(&state, &surface))
                        .norm();
                    conform_to_surface(&mut state, &drive, phi, &surface, params, v_plane, 0.0);
                }
            }
        } else {
            let (v_uni, w_uni) =
                unicycle_rates(&u_wheels, params.wheels.radius, params.wheels.half_base);
            drive = unicycle_step(&drive, v_uni, w_uni, dt);
            conform_to_surface(&mut state, &drive, phi, &surface, params, v_uni, w_uni);

            if touchdown_recorded {
                if let Some((px, py)) = last_plane_xy {
                    let dist = ((drive.x - px).powi(2) + (drive.y - py).powi(2)).sqrt();
                    log.drive_distance_after_touchdown += dist;
                }
                last_plane_xy = Some((drive.x, drive.y));
            }

            // Takeoff handoff: once the thrust path is open and the net
            // normal acceleration turns positive, the wheels leave the
            // ground.
            if mode.mode != FlightMode::Grounded {
                let contact_h = wheel_contact_height(phi, params);
                let ge = if sc.ground_effect {
                    table.thrust_ratio(contact_h.max(0.0), phi)
                } else {
                    1.0
                };
                let model = DynamicsModel::new(params, phi, ge);
                let (f_b, _) = model.wrench(&u_thrust);
                let f_world = state.rotation() * f_b;
                let n = surface.normal();
                let a_n = n.dot(&f_world) / params.mass - params.gravity * n.z;
                if a_n > 0.0 {
                    on_surface = false;
                    ge_now = ge;
                }
            }
        }
    }

    let solver = if controller == ControllerKind::Nmpc {
        let d = &nmpc.diagnostics;
        let cycles = d.len();
        let sum: f64 = d.iter().map(|x| x.solve_time_s).sum();
        SolverStats {
            cycles,
            mean_solve_time_s: if cycles > 0 { sum / cycles as f64 } else { 0.0 },
            max_solve_time_s: d.iter().map(|x| x.solve_time_s).fold(0.0, f64::max),
            fallbacks: d.iter().filter(|x| x.fallback).count(),
        }
    } else {
        SolverStats::default()
    };

    Ok(RunResult { log, solver })
}

fn measure(state: &StateVector, noise: &scenario::NoiseConfig, rng: &mut ChaCha8Rng) -> StateVector {
    if !noise.enabled {
        return *state;
    }
    let mut draw = |sigma: f64| -> Vector3<f64> {
        Vector3::from_fn(|_, _| {
            let n: f64 = StandardNormal.sample(rng);
            sigma * n
        })
    };
    StateVector {
        p: state.p + draw(noise.sigma_pos_m),
        theta: state.theta + draw(noise.sigma_att_rad),
        v: state.v + draw(noise.sigma_vel_m_s),
        omega: state.omega,
    }
}

fn v_component(state: &StateVector, surface: &Surface) -> f64 {
    surface.normal().dot(&state.v)
}

/// Project a world position into (uphill, cross-slope) plane coordinates.
fn plane_coords(p: &Vector3<f64>, surface: &Surface) -> [f64; 2] {
    let rel = p - Vector3::new(0.0, 0.0, surface.height);
    [surface.uphill().dot(&rel), rel.y]
}

/// Planar pose estimate of the vehicle on (or above) the surface.
fn plane_pose(state: &StateVector, surface: &Surface) -> DrivePose {
    let xy = plane_coords(&state.p, surface);
    let x_body = state.rotation() * Vector3::x();
    let heading = x_body.y.atan2(surface.uphill().dot(&x_body));
    DrivePose {
        x: xy[0],
        y: xy[1],
        heading,
    }
}

/// Place the vehicle on the surface at the wheel contact height for the
/// current tilt, aligned with the surface, moving along its heading.
fn conform_to_surface(
    state: &mut StateVector,
    drive: &DrivePose,
    phi: f64,
    surface: &Surface,
    params: &RobotParams,
    speed: f64,
    yaw_rate: f64,
) {
    let n = surface.normal();
    let e1 = surface.uphill();
    let e2 = Vector3::y();
    let contact_h = wheel_contact_height(phi, params);
    let base = Vector3::new(0.0, 0.0, surface.height) + e1 * drive.x + e2 * drive.y;
    state.p = base + n * contact_h;

    let x_b = e1 * drive.heading.cos() + e2 * drive.heading.sin();
    let z_b = n;
    let y_b = z_b.cross(&x_b);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x_b, y_b, z_b]));
    let (roll, pitch, yaw) = rot.euler_angles();
    state.theta = Vector3::new(yaw, pitch, roll);
    state.v = x_b * speed;
    state.omega = Vector3::new(0.0, 0.0, yaw_rate);
}

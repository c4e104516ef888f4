//! End-to-end verification suite.
//!
//! Each criterion runs against the shipped parameter set, ground-effect
//! table and scenarios, compares measured values against fixed targets and
//! tolerances, and reports one pass/fail line. Criterion 12 (controller
//! throughput) is informational: it is reported but does not fail the
//! suite, since it depends on the host machine.
//!
//! Independent oracles used here (closure-residual bisection for the
//! linkage, brute-force active-set enumeration for small QPs) are written
//! against the math, not against the implementation paths they check.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assets;
use crate::dynamics::{
    self, AerialInput, DynamicsModel, StateVector,
};
use crate::ground_effect::GroundEffectTable;
use crate::guidance::FlightMode;
use crate::nmpc::{
    blend_alpha, sqp_iterate, stationarity, transcribe, BlendContext, CostWeights, OcpConfig,
    Reference, SqpMode, WeightPreset,
};
use crate::params::RobotParams;
use crate::sim::log::{EventKind, SimError, SimLog};
use crate::sim::{run, ControllerKind, RunResult};
use crate::tilt::{self, LinkageGeometry};

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Informational criterion: reported, never fails the suite.
    pub soft: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let status = if self.passed {
            "PASS"
        } else if self.soft {
            "SOFT-FAIL"
        } else {
            "FAIL"
        };
        format!("[{status:9}] {:2}. {:32} {}", self.id, self.name, self.detail)
    }
}

pub fn format_report(results: &[CriterionResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "{}", r.line());
    }
    let hard_failures = results.iter().filter(|r| !r.passed && !r.soft).count();
    let _ = writeln!(
        out,
        "{} criteria, {} hard failure(s)",
        results.len(),
        hard_failures
    );
    out
}

pub fn all_passed(results: &[CriterionResult]) -> bool {
    results.iter().all(|r| r.passed || r.soft)
}

/// Run the full suite with the shipped assets.
pub fn run_all() -> Vec<CriterionResult> {
    let params = assets::default_params();
    let table = assets::default_ge_table();
    run_all_with(&params, &table)
}

pub fn run_all_with(params: &RobotParams, table: &GroundEffectTable) -> Vec<CriterionResult> {
    let mut results = Vec::new();
    let mut logs_for_bounds: Vec<SimLog> = Vec::new();

    // Shared closed-loop runs.
    let landing_started = Instant::now();
    let landing = run_named("wheel_landing", params, table, ControllerKind::Nmpc, |_| {});
    let landing_runtime = landing_started.elapsed().as_secs_f64();
    // Ground-effect benefit pair: ride a tilt cap just past the critical
    // angle so both runs finish in the thrust-deficit regime and the
    // comparison isolates the near-ground braking. With the tilt free
    // running to the 70 deg cap, the extra thrust converts into additional
    // touchdown tilt instead of a lower impact speed.
    let ge_cap = |sc: &mut crate::sim::scenario::Scenario| {
        sc.guidance.tilt_rate_rad_s = 0.30;
        sc.guidance.phi_limit_transition_deg = 62.0;
    };
    let ge_pair_on = run_named("wheel_landing", params, table, ControllerKind::Nmpc, ge_cap);
    let ge_pair_off = run_named("wheel_landing", params, table, ControllerKind::Nmpc, |sc| {
        ge_cap(sc);
        sc.ground_effect = false;
    });
    let takeoff = run_named("driving_takeoff", params, table, ControllerKind::Nmpc, |_| {});
    let slope = run_named("slope_landing", params, table, ControllerKind::Nmpc, |_| {});
    let slope_control = run_named(
        "slope_landing_control",
        params,
        table,
        ControllerKind::Nmpc,
        |_| {},
    );
    let hover = run_named("hover", params, table, ControllerKind::Nmpc, |_| {});
    let step = run_named("step_response", params, table, ControllerKind::Nmpc, |_| {});
    let impulse_nmpc = run_named("lateral_impulse", params, table, ControllerKind::Nmpc, |_| {});
    let impulse_pid = run_named(
        "lateral_impulse",
        params,
        table,
        ControllerKind::PidBaseline,
        |_| {},
    );

    results.push(criterion_1(&landing, landing_runtime));
    results.push(criterion_2(&landing, params));
    results.push(criterion_3(&ge_pair_on, &ge_pair_off));
    results.push(criterion_4(&takeoff));
    results.push(criterion_5(&slope, &slope_control));
    results.push(criterion_6());
    for rr in [&landing, &ge_pair_on, &ge_pair_off, &takeoff, &slope, &hover, &step, &impulse_nmpc]
        .into_iter()
        .flatten()
    {
        logs_for_bounds.push(rr.log.clone());
    }
    results.push(criterion_7(params, &logs_for_bounds));
    results.push(criterion_8(&step, params));
    results.push(criterion_9(params));
    results.push(criterion_10(params));
    results.push(criterion_11(&impulse_nmpc, &impulse_pid));
    results.push(criterion_12(&hover));
    results
}

fn run_named(
    name: &str,
    params: &RobotParams,
    table: &GroundEffectTable,
    kind: ControllerKind,
    mutate: impl FnOnce(&mut crate::sim::scenario::Scenario),
) -> Result<RunResult, SimError> {
    let mut sc = assets::builtin_scenario(name)
        .unwrap_or_else(|| panic!("builtin scenario {name} missing"));
    mutate(&mut sc);
    run(&sc, params, table, kind)
}

fn fail(id: usize, name: &'static str, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed: false,
        soft: false,
        detail,
    }
}

fn criterion_1(landing: &Result<RunResult, SimError>, runtime_s: f64) -> CriterionResult {
    let name = "dynamic wheel landing";
    let rr = match landing {
        Ok(rr) => rr,
        Err(e) => return fail(1, name, format!("run failed: {e}")),
    };
    let m = match rr.log.metrics() {
        Ok(m) => m,
        Err(e) => return fail(1, name, format!("{e}")),
    };
    let ok = m.phi_g_deg >= 60.0
        && m.roll_deg.abs() <= 5.0
        && m.pitch_deg.abs() <= 5.0
        && m.impact_speed <= 0.5
        && m.max_mean_thrust <= 0.9
        && runtime_s <= 60.0;
    CriterionResult {
        id: 1,
        name,
        passed: ok,
        soft: false,
        detail: format!(
            "phi_g={:.1} deg (>=60), |roll|={:.2}, |pitch|={:.2} deg (<=5), impact={:.3} m/s (<=0.5), u_peak={:.3} (<=0.9), runtime={:.1} s (<=60)",
            m.phi_g_deg,
            m.roll_deg.abs(),
            m.pitch_deg.abs(),
            m.impact_speed,
            m.max_mean_thrust,
            runtime_s
        ),
    }
}

fn criterion_2(landing: &Result<RunResult, SimError>, params: &RobotParams) -> CriterionResult {
    let name = "past-saturation landing";
    let rr = match landing {
        Ok(rr) => rr,
        Err(e) => return fail(2, name, format!("run failed: {e}")),
    };
    let critical = dynamics::critical_angle(params).unwrap();
    match rr.log.touchdown {
        Some(td) => {
            let ok = td.phi_g > critical;
            CriterionResult {
                id: 2,
                name,
                passed: ok,
                soft: false,
                detail: format!(
                    "phi_g={:.2} deg vs critical {:.2} deg",
                    td.phi_g.to_degrees(),
                    critical.to_degrees()
                ),
            }
        }
        None => fail(2, name, "no touchdown".into()),
    }
}

fn criterion_3(
    with_ge: &Result<RunResult, SimError>,
    without_ge: &Result<RunResult, SimError>,
) -> CriterionResult {
    let name = "ground-effect benefit";
    let (a, b) = match (with_ge, without_ge) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return fail(3, name, "paired runs failed".into()),
    };
    match (a.log.touchdown, b.log.touchdown) {
        (Some(on), Some(off)) => {
            let ok = off.impact_speed > on.impact_speed;
            CriterionResult {
                id: 3,
                name,
                passed: ok,
                soft: false,
                detail: format!(
                    "impact with ge {:.3} m/s < without {:.3} m/s",
                    on.impact_speed, off.impact_speed
                ),
            }
        }
        _ => fail(3, name, "a run never touched down".into()),
    }
}

fn criterion_4(takeoff: &Result<RunResult, SimError>) -> CriterionResult {
    let name = "driving takeoff + landing";
    let rr = match takeoff {
        Ok(rr) => rr,
        Err(e) => return fail(4, name, format!("run failed: {e}")),
    };
    let sequence_ok = rr.log.modes_visited_in_order(&[
        FlightMode::Grounded,
        FlightMode::Flight,
        FlightMode::Transition,
        FlightMode::Grounded,
    ]);
    let m = match rr.log.metrics() {
        Ok(m) => m,
        Err(e) => return fail(4, name, format!("{e}")),
    };
    let ok = sequence_ok && m.phi_g_deg >= 55.0 && m.max_mean_thrust <= 0.95;
    CriterionResult {
        id: 4,
        name,
        passed: ok,
        soft: false,
        detail: format!(
            "sequence_ok={}, phi_g={:.1} deg (>=55), u_peak={:.3} (<=0.95)",
            sequence_ok, m.phi_g_deg, m.max_mean_thrust
        ),
    }
}

fn criterion_5(
    slope: &Result<RunResult, SimError>,
    control: &Result<RunResult, SimError>,
) -> CriterionResult {
    let name = "slope landing";
    let rr = match slope {
        Ok(rr) => rr,
        Err(e) => return fail(5, name, format!("morphed slope run failed: {e}")),
    };
    let landed_clean = rr.log.touchdown.map(|td| !td.tipped).unwrap_or(false)
        && !rr.log.has_event(&EventKind::BodyStrike)
        && !rr.log.has_event(&EventKind::Tipover);
    let drove = rr.log.drive_distance_after_touchdown >= 1.0;
    let control_flagged = match control {
        Ok(c) => c.log.has_event(&EventKind::BodyStrike) || c.log.has_event(&EventKind::Tipover),
        Err(_) => false,
    };
    CriterionResult {
        id: 5,
        name,
        passed: landed_clean && drove && control_flagged,
        soft: false,
        detail: format!(
            "morphed landing clean={}, drove {:.2} m (>=1), untilted run flagged={}",
            landed_clean, rr.log.drive_distance_after_touchdown, control_flagged
        ),
    }
}

fn criterion_6() -> CriterionResult {
    let name = "blending factor";
    let ctx = BlendContext {
        z_star: 0.45,
        z_ground: 0.0,
    };
    let exact = blend_alpha(0.45, 0.0, &ctx) == 1.0
        && blend_alpha(1.7, 0.0, &ctx) == 1.0
        && blend_alpha(0.0, 0.0, &ctx) == 0.0
        && blend_alpha(0.0, 1.2, &ctx) == 0.0
        && (blend_alpha(0.225, 60f64.to_radians(), &ctx) - 0.25).abs() < 1e-15;

    // Continuity probe with 1e-6 spacing around the corridor kinks and a
    // coarse sweep elsewhere. The analytic Lipschitz bound in z is
    // 1/(z_star - z_g) ~ 2.3, so adjacent probes may differ by ~2.3e-6.
    let mut continuous = true;
    let mut worst = 0.0f64;
    for phi_deg in [0.0f64, 30.0, 60.0, 89.0] {
        let phi = phi_deg.to_radians();
        for center in [0.0, 0.45] {
            let mut prev: Option<f64> = None;
            for i in -1000..=1000 {
                let z = center + i as f64 * 1e-6;
                let a = blend_alpha(z, phi, &ctx);
                if let Some(p) = prev {
                    let jump = (a - p).abs();
                    worst = worst.max(jump);
                    if jump > 1e-5 {
                        continuous = false;
                    }
                }
                prev = Some(a);
            }
        }
    }
    CriterionResult {
        id: 6,
        name,
        passed: exact && continuous,
        soft: false,
        detail: format!(
            "exact_values={exact}, max probe jump {worst:.2e} (<=1e-5)"
        ),
    }
}

/// Brute-force active-set enumeration for small box QPs.
fn brute_force_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = g.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    'combo: for c in 0..3usize.pow(n as u32) {
        let mut kind = Vec::with_capacity(n);
        let mut rem = c;
        for _ in 0..n {
            kind.push(rem % 3);
            rem /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| kind[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[i] = match kind[i] {
                1 => lo[i],
                2 => hi[i],
                _ => 0.0,
            };
        }
        if !free.is_empty() {
            let nf = free.len();
            let mut h_ff = DMatrix::zeros(nf, nf);
            let mut rhs = DVector::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = -g[i];
                for j in 0..n {
                    if kind[j] != 0 {
                        rhs[a] -= h[(i, j)] * x[j];
                    }
                }
                for (b, &j) in free.iter().enumerate() {
                    h_ff[(a, b)] = h[(i, j)];
                }
            }
            match Cholesky::new(h_ff) {
                Some(ch) => {
                    let sol = ch.solve(&rhs);
                    for (a, &i) in free.iter().enumerate() {
                        x[i] = sol[a];
                    }
                }
                None => continue 'combo,
            }
        }
        for &i in &free {
            if x[i] < lo[i] - 1e-9 || x[i] > hi[i] + 1e-9 {
                continue 'combo;
            }
        }
        let grad = h * &x + g;
        for i in 0..n {
            match kind[i] {
                1 if grad[i] < -1e-9 => continue 'combo,
                2 if grad[i] > 1e-9 => continue 'combo,
                _ => {}
            }
        }
        let obj = 0.5 * (h * &x).dot(&x) + g.dot(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

fn criterion_7(params: &RobotParams, logs: &[SimLog]) -> CriterionResult {
    let name = "solver correctness";

    // Box bounds hold in every logged sample of every run.
    let mut samples = 0usize;
    let mut violations = 0usize;
    for log in logs {
        for row in &log.rows {
            samples += 1;
            for i in 0..4 {
                if !(0.0..=1.0).contains(&row.u[i]) {
                    violations += 1;
                }
            }
        }
    }

    // QP solver vs brute-force enumeration on random 2-variable problems.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut qp_mismatch = 0usize;
    for _ in 0..60 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let h = &a * a.transpose() + DMatrix::identity(2, 2) * 0.2;
        let g = DVector::from_fn(2, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let lo = DVector::from_row_slice(&[0.0, 0.0]);
        let hi = DVector::from_row_slice(&[1.0, 1.0]);
        let sol = crate::nmpc::qp::solve_box_qp(&h, &g, &lo, &hi, None);
        let oracle = brute_force_box_qp(&h, &g, &lo, &hi);
        match (sol, oracle) {
            (Ok(s), Some(o)) => {
                if (s.x - o).amax() > 1e-10 {
                    qp_mismatch += 1;
                }
            }
            _ => qp_mismatch += 1,
        }
    }

    // Converge-mode SQP stationarity on randomized instances.
    let cfg = OcpConfig::default();
    let weights = CostWeights::preset(WeightPreset::Baseline);
    let mut worst_stat = 0.0f64;
    let mut failures = 0usize;
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let mut r = || rng.random::<f64>() * 2.0 - 1.0;
        let phi = (trial as f64 / 19.0) * 1.1;
        let mut hover = StateVector::at_position(Vector3::new(0.0, 0.0, 1.5));
        hover.p += Vector3::new(0.3 * r(), 0.3 * r(), 0.3 * r());
        hover.v = Vector3::new(0.3 * r(), 0.3 * r(), 0.3 * r());
        hover.theta = Vector3::new(0.15 * r(), 0.15 * r(), 0.15 * r());
        hover.omega = Vector3::new(0.3 * r(), 0.3 * r(), 0.3 * r());
        let alpha = 0.5 + 0.5 * r();
        let u_eq = (params.hover_command() / phi.cos().max(0.5)).min(1.0);
        let nlp = transcribe(
            hover.to_vector(),
            Reference {
                x_ref: StateVector::at_position(Vector3::new(0.0, 0.0, 1.5)).to_vector(),
                u_ref: Vector4::repeat(u_eq),
            },
            phi,
            alpha.clamp(0.0, 1.0),
            &cfg,
            &weights,
            params,
        );
        let start = match nlp.cold_start(nlp.reference.u_ref) {
            Ok(s) => s,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        match sqp_iterate(&nlp, start, SqpMode::Converge) {
            Ok(out) => match stationarity(&nlp, &out.iterate) {
                Ok(s) => {
                    worst_stat = worst_stat.max(s);
                    if s >= 1e-6 {
                        failures += 1;
                    }
                }
                Err(_) => failures += 1,
            },
            Err(_) => failures += 1,
        }
    }

    let ok = violations == 0 && qp_mismatch == 0 && failures == 0;
    CriterionResult {
        id: 7,
        name,
        passed: ok,
        soft: false,
        detail: format!(
            "bound violations {violations}/{samples} samples, qp mismatches {qp_mismatch}/60, sqp failures {failures}/20 (worst stationarity {worst_stat:.2e})"
        ),
    }
}

fn criterion_8(step: &Result<RunResult, SimError>, params: &RobotParams) -> CriterionResult {
    let name = "hover step response";
    let rr = match step {
        Ok(rr) => rr,
        Err(e) => return fail(8, name, format!("run failed: {e}")),
    };
    // The step to z = 2.5 happens at t = 2; find the settling time and the
    // steady-state thrust.
    let target = 2.5;
    let mut settle_time = f64::INFINITY;
    for row in rr.log.rows.iter().filter(|r| r.t >= 2.0) {
        if (row.state.p.z - target).abs() <= 0.02 {
            // Must stay settled afterwards.
            let stays = rr
                .log
                .rows
                .iter()
                .filter(|r| r.t >= row.t)
                .all(|r| (r.state.p.z - target).abs() <= 0.02);
            if stays {
                settle_time = row.t - 2.0;
                break;
            }
        }
    }
    let tail: Vec<f64> = rr
        .log
        .rows
        .iter()
        .filter(|r| r.t >= rr.log.rows.last().unwrap().t - 1.0)
        .map(|r| r.mean_thrust())
        .collect();
    let steady = tail.iter().sum::<f64>() / tail.len() as f64;
    let expected = params.hover_command();
    let ok = settle_time <= 2.0 && (steady - expected).abs() <= 0.01;
    CriterionResult {
        id: 8,
        name,
        passed: ok,
        soft: false,
        detail: format!(
            "settle {:.2} s (<=2), steady mean thrust {:.4} vs {:.4} +-0.01",
            settle_time, steady, expected
        ),
    }
}

fn criterion_9(params: &RobotParams) -> CriterionResult {
    let name = "dynamics fidelity";

    // Ballistic energy drift.
    let model = DynamicsModel::new(params, 0.4, 1.0);
    let mut s = StateVector::zero();
    s.v = Vector3::new(0.3, -0.2, 0.4);
    s.omega = Vector3::new(0.8, -0.5, 0.6);
    s.theta = Vector3::new(0.2, 0.1, -0.15);
    let mut x = s.to_vector();
    let e0 = model.energy(&x);
    for _ in 0..1000 {
        x = model.rk4_step(&x, &AerialInput::zeros(), 1e-3).unwrap();
    }
    let drift = ((model.energy(&x) - e0) / e0).abs();

    // RK4 self-convergence order.
    let model2 = DynamicsModel::new(params, 0.5, 1.0);
    let u = Vector4::new(0.5, 0.55, 0.45, 0.5);
    let run_dt = |dt: f64| {
        let mut y = s.to_vector();
        let steps = (0.2 / dt).round() as usize;
        for _ in 0..steps {
            y = model2.rk4_step(&y, &u, dt).unwrap();
        }
        y
    };
    let reference = run_dt(0.2 / 1024.0);
    let e1 = (run_dt(0.2 / 32.0) - reference).norm();
    let e2 = (run_dt(0.2 / 64.0) - reference).norm();
    let order = (e1 / e2).log2();

    // Left/right mirror symmetry over a thrusting trajectory.
    let mirror = |x: &crate::dynamics::StateVec| {
        let mut m = *x;
        for idx in [1, 3, 5, 7, 9, 11] {
            m[idx] = -x[idx];
        }
        m
    };
    let model3 = DynamicsModel::new(params, 0.6, 1.0);
    let mut xa = s.to_vector();
    let mut xb = mirror(&xa);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let u = Vector4::from_fn(|_, _| rng.random::<f64>());
        let um = Vector4::new(u[1], u[0], u[3], u[2]);
        xa = model3.rk4_step(&xa, &u, 1e-3).unwrap();
        xb = model3.rk4_step(&xb, &um, 1e-3).unwrap();
    }
    let mirror_err = (mirror(&xa) - xb).amax();

    // Roll-command -> lateral-force coupling proportional to sin(phi).
    let hoverx = StateVector::zero().to_vector();
    let u_eq = AerialInput::repeat(params.hover_command());
    let (_, b0) = dynamics::linearize(&hoverx, &u_eq, 0.0, params).unwrap();
    let phi = 50f64.to_radians();
    let (_, b50) = dynamics::linearize(&hoverx, &u_eq, phi, params).unwrap();
    let expected = params.k_t * phi.sin() / params.mass;
    let coupling = b50[(7, 0)];
    let coupling_ok = b0[(7, 0)].abs() < 1e-7
        && coupling.abs() > 1e-3
        && ((coupling - expected) / expected).abs() <= 0.01;

    let ok = drift < 1e-6 && order >= 3.8 && mirror_err <= 1e-9 && coupling_ok;
    CriterionResult {
        id: 9,
        name,
        passed: ok,
        soft: false,
        detail: format!(
            "energy drift {drift:.2e} (<1e-6), rk4 order {order:.2} (>=3.8), mirror {mirror_err:.2e} (<=1e-9), coupling {coupling:.5} vs {expected:.5} (1%)"
        ),
    }
}

/// Displacement oracle: dense scan of x plus bisection on the closure
/// residual; independent of the Newton solver.
fn oracle_x_of_phi(phi_target: f64, geom: &LinkageGeometry) -> f64 {
    let r = |x: f64| {
        let a = geom.dx - geom.h - geom.d2 * phi_target.cos();
        let b = geom.dy - x + geom.d2 * phi_target.sin();
        a * a + b * b - geom.d1 * geom.d1
    };
    let (scan_lo, scan_hi, n) = (-2.0f64, 12.0f64, 8000);
    let mut prev = (scan_lo, r(scan_lo));
    for i in 1..=n {
        let x = scan_lo + (scan_hi - scan_lo) * i as f64 / n as f64;
        let rx = r(x);
        if prev.1.signum() != rx.signum() {
            let (mut lo, mut hi, mut r_lo) = (prev.0, x, prev.1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if r(mid).signum() == r_lo.signum() {
                    lo = mid;
                    r_lo = r(mid);
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        prev = (x, rx);
    }
    // Tangency (double root): bisect the finite-difference slope of the
    // residual to its minimum.
    let h = 1e-7;
    let slope = |x: f64| (r(x + h) - r(x - h)) / (2.0 * h);
    let (mut lo, mut hi) = (scan_lo, scan_hi);
    if !(slope(lo) < 0.0 && slope(hi) > 0.0) {
        return f64::NAN;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    if r(x).abs() < 1e-9 {
        x
    } else {
        f64::NAN
    }
}

fn criterion_10(params: &RobotParams) -> CriterionResult {
    let name = "linkage kinematics";
    let geom = &params.linkage;
    let mech = match tilt::TiltMechanism::new(geom.clone()) {
        Ok(m) => m,
        Err(e) => return fail(10, name, format!("{e}")),
    };

    let mut worst_roundtrip = 0.0f64;
    let mut worst_residual = 0.0f64;
    for i in 0..=100 {
        let phi = std::f64::consts::FRAC_PI_2 * i as f64 / 100.0;
        let x = match tilt::solve_inverse(phi, geom) {
            Ok(x) => x,
            Err(e) => return fail(10, name, format!("inverse failed at {phi}: {e}")),
        };
        match tilt::solve_forward(x, geom) {
            Ok((theta, phi_back)) => {
                worst_roundtrip = worst_roundtrip.max((phi_back - phi).abs());
                let (r1, r2) = tilt::closure_residual(x, theta, phi_back, geom);
                worst_residual = worst_residual.max(r1.abs().max(r2.abs()));
            }
            Err(e) => return fail(10, name, format!("forward failed at x={x}: {e}")),
        }
    }

    let phi_zero = mech.encoder_to_tilt(0).map(|p| p.abs()).unwrap_or(1.0);
    let x0_oracle = oracle_x_of_phi(0.0, geom);
    let x90_oracle = oracle_x_of_phi(std::f64::consts::FRAC_PI_2, geom);
    let x0_err = (mech.x_zero() - x0_oracle).abs();
    let x90_err = (mech.x_max() - x90_oracle).abs();

    let ok = worst_roundtrip <= 1e-9
        && worst_residual <= 1e-10
        && phi_zero < 1e-9
        && x0_err <= 1e-4
        && x90_err <= 1e-4
        && (x0_oracle + 0.065).abs() < 1e-3
        && (x90_oracle - 9.7).abs() < 1e-3;
    CriterionResult {
        id: 10,
        name,
        passed: ok,
        soft: false,
        detail: format!(
            "roundtrip {worst_roundtrip:.1e} (<=1e-9), residual {worst_residual:.1e} (<=1e-10), endpoints {:.4}/{:.4} cm vs oracle err {:.1e}/{:.1e} (<=1e-4)",
            mech.x_zero(), mech.x_max(), x0_err, x90_err
        ),
    }
}

fn criterion_11(
    nmpc: &Result<RunResult, SimError>,
    pid: &Result<RunResult, SimError>,
) -> CriterionResult {
    let name = "cascaded-PID contrast";
    let nm = match nmpc {
        Ok(rr) => rr,
        Err(e) => return fail(11, name, format!("model-based run failed: {e}")),
    };
    let nm_excursion = nm.log.max_lateral_drift;
    let nm_recovered = nm.log.final_position_error <= 0.05
        && !nm.log.has_event(&EventKind::Touchdown);
    // The PID fails either laterally (>= 2x the excursion) or, with its
    // hover-tuned vertical authority, by losing altitude outright at the
    // morphed posture and hitting the ground.
    let pid_verdict = match pid {
        Ok(rr) => {
            if rr.log.has_event(&EventKind::Touchdown)
                || rr.log.has_event(&EventKind::BodyStrike)
            {
                "crashed (altitude collapse)".to_string()
            } else if rr.log.max_lateral_drift >= 2.0 * nm_excursion {
                format!("excursion {:.3} m (>=2x)", rr.log.max_lateral_drift)
            } else {
                format!("held on: excursion {:.3} m", rr.log.max_lateral_drift)
            }
        }
        Err(SimError::Diverged(t)) => format!("diverged at t = {t:.2} s"),
        Err(e) => return fail(11, name, format!("PID run failed unexpectedly: {e}")),
    };
    let pid_failed = !pid_verdict.starts_with("held on");
    CriterionResult {
        id: 11,
        name,
        passed: pid_failed && nm_recovered,
        soft: false,
        detail: format!(
            "nmpc excursion {:.3} m, recovered to {:.3} m (<=0.05); pid {}",
            nm_excursion, nm.log.final_position_error, pid_verdict
        ),
    }
}

fn criterion_12(hover: &Result<RunResult, SimError>) -> CriterionResult {
    let name = "controller throughput (soft)";
    match hover {
        Ok(rr) => {
            let mean = rr.solver.mean_solve_time_s;
            CriterionResult {
                id: 12,
                name,
                passed: mean <= 6.7e-3,
                soft: true,
                detail: format!(
                    "mean solve {:.2} ms over {} cycles (budget 6.7 ms), max {:.2} ms, fallbacks {}",
                    mean * 1e3,
                    rr.solver.cycles,
                    rr.solver.max_solve_time_s * 1e3,
                    rr.solver.fallbacks
                ),
            }
        }
        Err(e) => CriterionResult {
            id: 12,
            name,
            passed: false,
            soft: true,
            detail: format!("hover run failed: {e}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_endpoints_match_closed_form() {
        let geom = assets::default_params().linkage;
        let x0 = oracle_x_of_phi(0.0, &geom);
        let x90 = oracle_x_of_phi(std::f64::consts::FRAC_PI_2, &geom);
        assert!((x0 + 0.0652676).abs() < 1e-4, "{x0}");
        assert!((x90 - 9.7).abs() < 1e-4, "{x90}");
    }

    #[test]
    fn report_formatting() {
        let results = vec![CriterionResult {
            id: 1,
            name: "example",
            passed: true,
            soft: false,
            detail: "ok".into(),
        }];
        let text = format_report(&results);
        assert!(text.contains("PASS"));
        assert!(all_passed(&results));
    }
}

//! Simulation and control stack for a tilt-morphing flying/driving robot.
//!
//! The vehicle flies as a quadrotor, drives on wheel-thruster appendages,
//! and transitions between the two by tilting its appendages mid-air close
//! to the ground. The crate provides:
//!
//! - [`tilt`]: closed-chain tilt-linkage kinematics (encoder count <->
//!   screw displacement <-> tilt angle) and the rate-commanded integrator.
//! - [`dynamics`]: 12-state rigid-body model with the tilt-dependent
//!   actuation map, composite inertia and an RK4 integrator.
//! - [`ground_effect`]: tabulated near-ground thrust-ratio model with
//!   stochastic thrust variability.
//! - [`nmpc`]: the blended-cost receding-horizon controller (multiple
//!   shooting, condensed Gauss-Newton SQP, box-constrained active-set QP,
//!   real-time iteration).
//! - [`guidance`]: pilot references, the flight/transition/ground mode
//!   supervisor, and the differential-drive ground controller.
//! - [`sim`]: deterministic closed-loop scenario engine with touchdown
//!   resolution, slope support, disturbances and a cascaded-PID baseline.
//! - [`acceptance`]: the end-to-end verification suite used by the CLI and
//!   the integration tests.

pub mod assets;
pub mod dynamics;
pub mod ground_effect;
pub mod guidance;
pub mod nmpc;
pub mod params;
pub mod sim;
pub mod tilt;

pub mod acceptance;

pub use dynamics::{AerialInput, StateVector};
pub use params::RobotParams;

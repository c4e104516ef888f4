//! Shipped default parameter set, ground-effect table and scenarios,
//! compiled into the library so the tooling works from any directory.

use crate::ground_effect::GroundEffectTable;
use crate::params::RobotParams;
use crate::sim::scenario::Scenario;

pub const PARAMS_DEFAULT_TOML: &str = include_str!("../assets/params_default.toml");
pub const GE_TABLE_DEFAULT_CSV: &str = include_str!("../assets/ge_table_default.csv");

const SCENARIOS: &[(&str, &str)] = &[
    (
        "wheel_landing",
        include_str!("../assets/scenario_wheel_landing.toml"),
    ),
    (
        "driving_takeoff",
        include_str!("../assets/scenario_driving_takeoff.toml"),
    ),
    (
        "slope_landing",
        include_str!("../assets/scenario_slope_landing.toml"),
    ),
    (
        "slope_landing_control",
        include_str!("../assets/scenario_slope_landing_control.toml"),
    ),
    ("hover", include_str!("../assets/scenario_hover.toml")),
    (
        "step_response",
        include_str!("../assets/scenario_step_response.toml"),
    ),
    (
        "lateral_impulse",
        include_str!("../assets/scenario_lateral_impulse.toml"),
    ),
];

pub fn default_params() -> RobotParams {
    RobotParams::from_toml_str(PARAMS_DEFAULT_TOML).expect("shipped parameter file is valid")
}

pub fn default_ge_table() -> GroundEffectTable {
    GroundEffectTable::parse(GE_TABLE_DEFAULT_CSV).expect("shipped ground-effect table is valid")
}

pub fn builtin_scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_scenario_text(name: &str) -> Option<&'static str> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenario_text(name)
        .map(|text| Scenario::from_toml_str(text).expect("shipped scenario is valid"))
}

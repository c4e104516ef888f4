//! Command-line front end: scenario execution, the verification suite and
//! parameter sweeps.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use morphsim_core::acceptance;
use morphsim_core::assets;
use morphsim_core::ground_effect::GroundEffectTable;
use morphsim_core::nmpc::WeightPreset;
use morphsim_core::params::RobotParams;
use morphsim_core::sim::scenario::Scenario;
use morphsim_core::sim::{run, ControllerKind, RunResult};

#[derive(Parser)]
#[command(
    name = "morphsim",
    about = "Flight/drive transition simulator for a tilt-morphing robot",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one scenario and write the log, summary and plots.
    Run(RunArgs),
    /// Run the full verification suite and report per-criterion results.
    Check(CheckArgs),
    /// Run a batch of scenarios over a swept parameter.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn as_bool(self) -> bool {
        matches!(self, OnOff::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Nmpc,
    Pid,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Baseline,
    Retuned,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario: path to a TOML file or the name of a shipped scenario.
    #[arg(long)]
    scenario: String,
    /// Robot parameter file (defaults to the shipped set).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Ground-effect table (defaults to the shipped table).
    #[arg(long = "ge-table")]
    ge_table: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Force the ground-effect model on or off.
    #[arg(long = "ground-effect")]
    ground_effect: Option<OnOff>,
    /// Force measurement noise on or off.
    #[arg(long)]
    noise: Option<OnOff>,
    /// Controller selection.
    #[arg(long)]
    controller: Option<ControllerArg>,
    /// Weight preset selection.
    #[arg(long)]
    preset: Option<PresetArg>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Output directory for the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Robot parameter file (defaults to the shipped set).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Ground-effect table (defaults to the shipped table).
    #[arg(long = "ge-table")]
    ge_table: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swept parameter: seed, tilt_rate, tilt_cap_deg, z_phi_m or slope_deg.
    #[arg(long)]
    param: String,
    /// Comma-separated list of values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_inputs(common: &CommonArgs) -> Result<(Scenario, RobotParams, GroundEffectTable)> {
    let mut scenario = if Path::new(&common.scenario).exists() {
        let text = fs::read_to_string(&common.scenario)
            .with_context(|| format!("reading scenario {}", common.scenario))?;
        Scenario::from_toml_str(&text).context("parsing scenario")?
    } else {
        assets::builtin_scenario(&common.scenario).ok_or_else(|| {
            anyhow!(
                "scenario `{}` is neither a file nor one of the shipped scenarios ({})",
                common.scenario,
                assets::builtin_scenario_names().join(", ")
            )
        })?
    };

    let params = match &common.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading parameter file {}", path.display()))?;
            RobotParams::from_toml_str(&text).context("parsing parameter file")?
        }
        None => assets::default_params(),
    };
    let table = match &common.ge_table {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading ground-effect table {}", path.display()))?;
            GroundEffectTable::parse(&text).context("parsing ground-effect table")?
        }
        None => assets::default_ge_table(),
    };

    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    if let Some(ge) = common.ground_effect {
        scenario.ground_effect = ge.as_bool();
    }
    if let Some(noise) = common.noise {
        scenario.noise.enabled = noise.as_bool();
    }
    if let Some(preset) = common.preset {
        scenario.weight_preset = match preset {
            PresetArg::Baseline => WeightPreset::Baseline,
            PresetArg::Retuned => WeightPreset::Retuned,
        };
    }
    Ok((scenario, params, table))
}

fn controller_kind(common: &CommonArgs) -> ControllerKind {
    match common.controller {
        Some(ControllerArg::Pid) => ControllerKind::PidBaseline,
        _ => ControllerKind::Nmpc,
    }
}

/// Write a file atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn write_run_outputs(out: &Path, rr: &RunResult) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let name = &rr.log.scenario_name;
    let csv = rr.log.to_csv();
    write_atomic(&out.join(format!("{name}_log.csv")), &csv)?;

    // The summary is byte-for-byte reproducible; wall-clock solver timing
    // goes to its own file.
    write_atomic(&out.join(format!("{name}_summary.txt")), &rr.log.summary_text())?;
    let timing = format!(
        "solver_mean_ms = {:.3}\nsolver_max_ms = {:.3}\nsolver_cycles = {}\nsolver_fallbacks = {}\n",
        rr.solver.mean_solve_time_s * 1e3,
        rr.solver.max_solve_time_s * 1e3,
        rr.solver.cycles,
        rr.solver.fallbacks
    );
    write_atomic(&out.join(format!("{name}_timing.txt")), &timing)?;

    let t = plot::csv_column(&csv, "t").ok_or_else(|| anyhow!("log has no time column"))?;
    let panels: [(&str, &str, Vec<f64>); 4] = [
        ("altitude", "z [m]", plot::csv_column(&csv, "z").unwrap()),
        ("tilt angle", "phi [rad]", plot::csv_column(&csv, "phi").unwrap()),
        ("blending factor", "alpha", plot::csv_column(&csv, "alpha").unwrap()),
        ("mean normalized thrust", "u", plot::csv_mean_thrust(&csv).unwrap()),
    ];
    for (title, label, series) in panels {
        let file = title.replace(' ', "_");
        let svg = plot::line_chart(title, label, &t, &series);
        write_atomic(&out.join(format!("{name}_{file}.svg")), &svg)?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let (scenario, params, table) = load_inputs(&args.common)?;
    let kind = controller_kind(&args.common);
    match run(&scenario, &params, &table, kind) {
        Ok(rr) => {
            write_run_outputs(&args.common.out, &rr)?;
            println!("{}", rr.log.summary_text());
            println!("outputs written to {}", args.common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("simulation failed: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let params = match &args.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading parameter file {}", path.display()))?;
            RobotParams::from_toml_str(&text).context("parsing parameter file")?
        }
        None => assets::default_params(),
    };
    let table = match &args.ge_table {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading ground-effect table {}", path.display()))?;
            GroundEffectTable::parse(&text).context("parsing ground-effect table")?
        }
        None => assets::default_ge_table(),
    };
    let results = acceptance::run_all_with(&params, &table);
    let report = acceptance::format_report(&results);
    print!("{report}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        write_atomic(&out.join("check_report.txt"), &report)?;
    }
    if acceptance::all_passed(&results) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn apply_sweep_value(sc: &mut Scenario, param: &str, value: &str) -> Result<()> {
    match param {
        "seed" => sc.seed = value.parse().context("seed must be an integer")?,
        "tilt_rate" => {
            sc.guidance.tilt_rate_rad_s = value.parse().context("tilt_rate must be a number")?
        }
        "tilt_cap_deg" => {
            sc.guidance.phi_limit_transition_deg =
                value.parse().context("tilt_cap_deg must be a number")?
        }
        "z_phi_m" => sc.guidance.z_phi_m = value.parse().context("z_phi_m must be a number")?,
        "slope_deg" => {
            sc.environment.slope_deg = value.parse().context("slope_deg must be a number")?
        }
        other => bail!(
            "unknown sweep parameter `{other}` (expected seed, tilt_rate, tilt_cap_deg, z_phi_m or slope_deg)"
        ),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let values: Vec<&str> = args
        .values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        println!("no sweep values given; nothing to do");
        return Ok(ExitCode::SUCCESS);
    }
    let (base, params, table) = load_inputs(&args.common)?;
    let kind = controller_kind(&args.common);

    // Validate the parameter name against the first value before running.
    {
        let mut probe = base.clone();
        apply_sweep_value(&mut probe, &args.param, values[0])?;
    }

    let mut lines = vec![format!(
        "{:>12}  {:>9} {:>9} {:>9} {:>9}  outcome",
        args.param, "phi_g_deg", "impact", "u_peak", "drift_m"
    )];
    for value in &values {
        let mut sc = base.clone();
        apply_sweep_value(&mut sc, &args.param, value)?;
        match run(&sc, &params, &table, kind) {
            Ok(rr) => {
                let outcome = rr
                    .log
                    .mode_sequence()
                    .iter()
                    .map(|m| m.as_str())
                    .collect::<Vec<_>>()
                    .join("->");
                match rr.log.metrics() {
                    Ok(m) => lines.push(format!(
                        "{:>12}  {:>9.2} {:>9.3} {:>9.3} {:>9.3}  {}",
                        value, m.phi_g_deg, m.impact_speed, m.max_mean_thrust, m.lateral_drift_m, outcome
                    )),
                    Err(_) => lines.push(format!(
                        "{:>12}  {:>9} {:>9} {:>9} {:>9}  {}",
                        value, "-", "-", "-", "-", outcome
                    )),
                }
            }
            Err(e) => lines.push(format!("{:>12}  failed: {e}", value)),
        }
    }
    let table_text = lines.join("\n") + "\n";
    print!("{table_text}");
    fs::create_dir_all(&args.common.out)?;
    write_atomic(&args.common.out.join("sweep_summary.txt"), &table_text)?;
    Ok(ExitCode::SUCCESS)
}

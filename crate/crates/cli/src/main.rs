use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use lhp_core::fluid_props::AntoineParams;
use lhp_core::param_ident::{friction_pressure_loss, identify, IdentifyConfig, OperatingPoint};
use lhp_core::scenario::{props_table, run_scenario, FitConfig, Manifest, Mode, RunConfig, Status};
use lhp_core::LhpError;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "lhp", version, about = "Loop heat pipe model, identification and control-heater simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Batch {
    /// Scenario config files (TOML, or a run manifest JSON to replay).
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Scenarios run in parallel.
    #[arg(long, short, default_value_t = 1)]
    jobs: usize,
    /// Write each scenario to <DIR>/<name> instead of its configured directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the saturated property correlations as CSV.
    Props {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        from_degc: f64,
        #[arg(long, default_value_t = 40.0, allow_hyphen_values = true)]
        to_degc: f64,
        #[arg(long, default_value_t = 1.0)]
        step_degc: f64,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Identify the lumped parameters from an operating-point file.
    FitParams { op_file: PathBuf },
    /// Open-loop simulation.
    Sim(Batch),
    /// Closed-loop simulation with the control-heater law.
    Control(Batch),
    /// Equilibrium at the scenario's initial inputs, with Jacobian eigenvalues.
    Equilibrium(Batch),
    /// Setpoint response for each decay rate in `sweep.lambdas_per_s`.
    SweepLambda(Batch),
}

fn exit_code(e: &LhpError) -> u8 {
    if e.is_config() || matches!(e, LhpError::Io { .. }) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

fn props(from: f64, to: f64, step: f64, output: Option<&Path>) -> Result<(), LhpError> {
    let antoine = AntoineParams::default();
    match output {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|source| LhpError::Io {
                path: path.display().to_string(),
                source,
            })?;
            props_table(std::io::BufWriter::new(file), from, to, step, &antoine)
        }
        None => props_table(std::io::stdout().lock(), from, to, step, &antoine),
    }
}

fn fit_params(path: &Path) -> Result<(), LhpError> {
    let text = std::fs::read_to_string(path).map_err(|source| LhpError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg = FitConfig::from_toml_str(&text)?;
    let geometry = cfg.geometry.build()?;
    let fluid = cfg.fluid.antoine()?;
    let op = OperatingPoint::from(&cfg.operating_point);
    let icfg = IdentifyConfig {
        alpha_bar: cfg.alpha_bar,
        t_amb: cfg.fluid.T_amb_K,
        fluid,
        ..IdentifyConfig::default()
    };
    let id = identify(&op, &geometry, &icfg)?;
    let report = serde_json::json!({
        "R_wick_K_per_W": id.params.r_wick,
        "k_2phi_W_per_m2K": id.params.k_2phi,
        "k_sc_W_per_m2K": id.params.k_sc,
        "k_ll_W_per_m2K": id.params.k_ll,
        "dp_fri_Pa": friction_pressure_loss(&op, &geometry, &fluid)?,
        "T_cc_in_K": id.t_cc_in,
        "alpha_bar": id.params.alpha_bar,
        "residual_norm": id.residual_norm,
        "iterations": id.iterations,
    });
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &report).map_err(|e| LhpError::Io {
        path: "<stdout>".into(),
        source: e.into(),
    })?;
    writeln!(out).ok();
    Ok(())
}

fn run_one(path: &Path, mode: Mode, out_dir: Option<&Path>) -> Result<Manifest, LhpError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(dir) = out_dir {
        cfg.output.dir = Some(dir.join(&cfg.name));
    }
    run_scenario(&cfg, mode)
}

fn summary(m: &Manifest) -> String {
    let mut s = format!("{}: {:?}", m.name, m.status).to_lowercase();
    if let Some(d) = &m.diagnostics {
        s += &format!(", {} samples, {} steps in {:.2} s", d.samples, d.stats.steps, d.wall_time_s);
    }
    if let Some(e) = &m.event {
        s += &format!(", halted at t = {:.3} s: {}", e.t, e.boundary);
    }
    for metric in &m.metrics {
        s += &format!(", {} MAD {:.4e} K RMSE {:.4e} K", metric.reference, metric.mad, metric.rmse);
    }
    if let Some(eq) = &m.equilibrium {
        let x = &eq.equilibrium.state;
        s += &format!(", T_cc {:.6} K, eta {:.6} m, mdot_l {:.6e} kg/s", x.t_cc, x.eta, x.mdot_l);
    }
    for r in &m.sweep {
        s += &format!(
            "\n  lambda {:.3} 1/s: MAD {:.4e} K, deviation from exp(-lambda t) {:.4e} K, saturated {:.0}%",
            r.lambda_per_s,
            r.mad,
            r.max_linear_deviation,
            100.0 * r.saturated_fraction
        );
    }
    for e in &m.errors {
        s += &format!("\n  error: {}", e.message);
    }
    s
}

fn batch(b: &Batch, mode: Mode) -> u8 {
    let run = |p: &PathBuf| (p.clone(), run_one(p, mode, b.out_dir.as_deref()));
    let results: Vec<_> = match rayon::ThreadPoolBuilder::new().num_threads(b.jobs.max(1)).build() {
        Ok(pool) => pool.install(|| b.configs.par_iter().map(run).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running sequentially");
            b.configs.iter().map(run).collect()
        }
    };
    let codes: Vec<u8> = results
        .into_iter()
        .map(|(path, r)| match r {
            Ok(m) => {
                println!("{}", summary(&m));
                if m.status == Status::Failed {
                    EXIT_NUMERICAL
                } else {
                    0
                }
            }
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                exit_code(&e)
            }
        })
        .collect();
    // A config error anywhere in the batch takes precedence.
    if codes.contains(&EXIT_CONFIG) {
        EXIT_CONFIG
    } else {
        codes.into_iter().max().unwrap_or(0)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let single = |r: Result<(), LhpError>| match r {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    let code = match &cli.command {
        Command::Props {
            from_degc,
            to_degc,
            step_degc,
            output,
        } => single(props(*from_degc, *to_degc, *step_degc, output.as_deref())),
        Command::FitParams { op_file } => single(fit_params(op_file)),
        Command::Sim(b) => batch(b, Mode::OpenLoop),
        Command::Control(b) => batch(b, Mode::ClosedLoop),
        Command::Equilibrium(b) => batch(b, Mode::Equilibrium),
        Command::SweepLambda(b) => batch(b, Mode::SweepLambda),
    };
    ExitCode::from(code)
}

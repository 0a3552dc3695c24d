use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::controller::{closed_loop, sweep_lambda, ControlRecord, LambdaSweepRow};
use crate::error::{LhpError, Result};
use crate::model::{ExogenousInputs, LhpModel, LhpState, LumpedParams};
use crate::ode::{continue_equilibrium, equilibrium_at_temperature, integrate, jacobian_eigenvalues, Equilibrium, EquilibriumOptions, IntegrationStats, ModeEvent, Trajectory};
use crate::param_ident::{identify, IdentifiedParams, IdentifyConfig, OperatingPoint};

use super::config::{InitialConfig, ParamsConfig, RunConfig};
use super::export::{self, TRAJECTORY_COLUMNS, TRAJECTORY_SCHEMA};
use super::metrics::{compute_metrics, Metrics};

pub const MANIFEST_SCHEMA: &str = "lhp-manifest/1";

/// Continuation steps from the reference operating point to the initial
/// equilibrium.
const INITIAL_CONTINUATION_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
    Equilibrium,
    SweepLambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    /// Model time of the failure, s, when known.
    pub t_s: Option<f64>,
    pub unix_time_s: f64,
    pub message: String,
}

impl RunError {
    fn from_error(e: &LhpError) -> Self {
        Self {
            t_s: match e {
                LhpError::AtTime { t, .. } => Some(*t),
                _ => None,
            },
            unix_time_s: unix_now(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelEcho {
    pub params: LumpedParams,
    pub identified: Option<IdentifiedParams>,
    pub t_amb_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub stats: IntegrationStats,
    pub samples: usize,
    pub wall_time_s: f64,
    pub range_warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub name: String,
    pub mode: Mode,
    pub status: Status,
    pub started_unix_s: f64,
    pub config: RunConfig,
    pub csv_schema: &'static str,
    pub csv_columns: Vec<&'static str>,
    pub model: Option<ModelEcho>,
    pub initial_state: Option<LhpState>,
    pub equilibrium: Option<EquilibriumReport>,
    pub diagnostics: Option<Diagnostics>,
    pub event: Option<ModeEvent>,
    pub metrics: Vec<Metrics>,
    pub sweep: Vec<LambdaSweepRow>,
    pub errors: Vec<RunError>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub equilibrium: Equilibrium,
    /// Jacobian eigenvalues as (re, im), 1/s.
    pub eigenvalues: Vec<(f64, f64)>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Model described by the config, identifying the parameters when asked.
pub fn build_model(cfg: &RunConfig) -> Result<(LhpModel, Option<IdentifiedParams>)> {
    let geometry = cfg.geometry.build()?;
    let fluid = cfg.fluid.antoine()?;
    let (params, identified) = match &cfg.params {
        ParamsConfig::Identify {
            operating_point,
            alpha_bar,
        } => {
            let icfg = IdentifyConfig {
                alpha_bar: *alpha_bar,
                t_amb: cfg.fluid.T_amb_K,
                fluid,
                ..IdentifyConfig::default()
            };
            let id = identify(&OperatingPoint::from(operating_point), &geometry, &icfg)?;
            (id.params, Some(id))
        }
        ParamsConfig::Explicit {
            R_wick_K_per_W,
            k_2phi_W_per_m2K,
            k_sc_W_per_m2K,
            k_ll_W_per_m2K,
            dp_fri_Pa,
            alpha_bar,
        } => {
            let p = LumpedParams {
                r_wick: *R_wick_K_per_W,
                k_2phi: *k_2phi_W_per_m2K,
                k_sc: *k_sc_W_per_m2K,
                k_ll: *k_ll_W_per_m2K,
                dp_fri: *dp_fri_Pa,
                alpha_bar: *alpha_bar,
            };
            p.validate().map_err(|e| LhpError::config("params", e.to_string()))?;
            (p, None)
        }
    };
    let mut model = LhpModel::new(geometry, params);
    model.fluid = fluid;
    model.t_amb = cfg.fluid.T_amb_K;
    model.fixed_point.tol = cfg.integrator.fixed_point_tol_K;
    Ok((model, identified))
}

/// Equilibrium reached by continuation from the reference operating point.
pub fn equilibrium_from_reference(u: &ExogenousInputs, model: &LhpModel) -> Result<Equilibrium> {
    continue_equilibrium(
        &ExogenousInputs::reference_operating_point(),
        u,
        &LhpState::reference_operating_point(),
        model,
        INITIAL_CONTINUATION_STEPS,
        &EquilibriumOptions::default(),
    )
}

fn initial_inputs(cfg: &RunConfig) -> Result<ExogenousInputs> {
    let u0 = cfg.input_profile()?.at(0.0);
    Ok(match cfg.initial {
        InitialConfig::Equilibrium {
            Q_evap_W,
            T_sink_K,
            Q_cc_W,
        } => ExogenousInputs {
            q_evap: Q_evap_W.unwrap_or(u0.q_evap),
            t_sink: T_sink_K.unwrap_or(u0.t_sink),
            q_cc: Q_cc_W.unwrap_or(u0.q_cc),
        },
        InitialConfig::SetpointEquilibrium { Q_evap_W, T_sink_K } => ExogenousInputs {
            q_evap: Q_evap_W.unwrap_or(u0.q_evap),
            t_sink: T_sink_K.unwrap_or(u0.t_sink),
            q_cc: ExogenousInputs::reference_operating_point().q_cc,
        },
        InitialConfig::State { .. } => u0,
    })
}

/// Equilibrium described by the initial-state section; a prescribed state
/// is replaced by the equilibrium at the profile's t = 0 inputs.
pub fn initial_equilibrium(cfg: &RunConfig, model: &LhpModel) -> Result<Equilibrium> {
    let u = initial_inputs(cfg)?;
    let eq = equilibrium_from_reference(&u, model)?;
    match cfg.initial {
        InitialConfig::SetpointEquilibrium { .. } => {
            equilibrium_at_temperature(&u, cfg.controller.t_set_k, model, &eq.state, &EquilibriumOptions::default())
        }
        _ => Ok(eq),
    }
}

pub fn initial_state(cfg: &RunConfig, model: &LhpModel) -> Result<LhpState> {
    match cfg.initial {
        InitialConfig::State {
            T_cc_K,
            eta_m,
            V_cc_l_m3,
            mdot_l_kg_per_s,
        } => Ok(LhpState {
            t_cc: T_cc_K,
            eta: eta_m,
            v_cc_l: V_cc_l_m3,
            mdot_l: mdot_l_kg_per_s,
        }),
        _ => Ok(initial_equilibrium(cfg, model)?.state),
    }
}

fn create(dir: &Path, file: &str) -> Result<BufWriter<File>> {
    let path = dir.join(file);
    File::create(&path).map(BufWriter::new).map_err(|source| LhpError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// T_cc against the setpoint on the trajectory's sample grid.
pub fn setpoint_metrics(traj: &Trajectory, t_set: f64) -> Result<Metrics> {
    let a: Vec<(f64, f64)> = traj.records.iter().map(|r| (r.t, r.state.t_cc)).collect();
    let b: Vec<(f64, f64)> = a.iter().map(|(t, _)| (*t, t_set)).collect();
    compute_metrics(&a, &b, "T_cc vs T_set")
}

struct Outcome {
    trajectory: Option<Trajectory>,
    control: Vec<ControlRecord>,
    equilibrium: Option<EquilibriumReport>,
    sweep: Vec<LambdaSweepRow>,
}

fn execute(cfg: &RunConfig, mode: Mode, model: &LhpModel, x0: Option<LhpState>) -> Result<Outcome> {
    let profile = cfg.input_profile()?;
    let opts = cfg.integrator.options()?;
    let mut out = Outcome {
        trajectory: None,
        control: Vec::new(),
        equilibrium: None,
        sweep: Vec::new(),
    };
    let x0 = || x0.ok_or_else(|| LhpError::InvalidParameter("no initial state".into()));
    match mode {
        Mode::OpenLoop => out.trajectory = Some(integrate(x0()?, &profile, model, cfg.t_end_s, &opts)?),
        Mode::ClosedLoop => {
            let run = closed_loop(x0()?, &profile, &cfg.controller, model, cfg.t_end_s, &opts)?;
            out.trajectory = Some(run.trajectory);
            out.control = run.control;
        }
        Mode::Equilibrium => {
            let equilibrium = initial_equilibrium(cfg, model)?;
            let eigenvalues = jacobian_eigenvalues(model, &equilibrium.state, &equilibrium.inputs)?;
            out.equilibrium = Some(EquilibriumReport { equilibrium, eigenvalues });
        }
        Mode::SweepLambda => {
            out.sweep = sweep_lambda(&cfg.sweep.lambdas_per_s, x0()?, &profile, &cfg.controller, model, cfg.t_end_s, &opts)?;
        }
    }
    Ok(out)
}

/// Runs one scenario and writes its artifacts into the output directory.
/// Config problems are returned as errors before anything is written;
/// numerical failures are recorded in the manifest, whose status is then
/// `Failed`.
pub fn run_scenario(cfg: &RunConfig, mode: Mode) -> Result<Manifest> {
    cfg.validate()?;
    let dir: PathBuf = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|source| LhpError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        name: cfg.name.clone(),
        mode,
        status: Status::Ok,
        started_unix_s: unix_now(),
        config: cfg.clone(),
        csv_schema: TRAJECTORY_SCHEMA,
        csv_columns: TRAJECTORY_COLUMNS.to_vec(),
        model: None,
        initial_state: None,
        equilibrium: None,
        diagnostics: None,
        event: None,
        metrics: Vec::new(),
        sweep: Vec::new(),
        errors: Vec::new(),
        files: Vec::new(),
    };

    let started = Instant::now();
    let result = build_model(cfg).and_then(|(model, identified)| {
        manifest.model = Some(ModelEcho {
            params: model.params,
            identified,
            t_amb_k: model.t_amb,
        });
        let x0 = match mode {
            Mode::Equilibrium => None,
            _ => Some(initial_state(cfg, &model)?),
        };
        manifest.initial_state = x0;
        execute(cfg, mode, &model, x0)
    });

    match result {
        Ok(out) => {
            if let Some(traj) = &out.trajectory {
                let mut warnings: Vec<String> = Vec::new();
                for r in &traj.records {
                    for w in r.inputs.range_warnings() {
                        if !warnings.contains(&w) {
                            warnings.push(w);
                        }
                    }
                }
                manifest.diagnostics = Some(Diagnostics {
                    stats: traj.stats,
                    samples: traj.records.len(),
                    wall_time_s: started.elapsed().as_secs_f64(),
                    range_warnings: warnings,
                });
                manifest.event = traj.event;
                export::write_trajectory(create(&dir, "trajectory.csv")?, &traj.records)?;
                manifest.files.push("trajectory.csv".into());
                if mode == Mode::ClosedLoop {
                    manifest.metrics.push(setpoint_metrics(traj, cfg.controller.t_set_k)?);
                    export::write_control(create(&dir, "control.csv")?, &out.control)?;
                    manifest.files.push("control.csv".into());
                }
            }
            manifest.equilibrium = out.equilibrium;
            manifest.sweep = out.sweep;
        }
        Err(e) if e.is_config() => return Err(e),
        Err(e) => {
            manifest.status = Status::Failed;
            manifest.errors.push(RunError::from_error(&e));
        }
    }

    manifest.files.push("manifest.json".into());
    let w = create(&dir, "manifest.json")?;
    serde_json::to_writer_pretty(w, &manifest).map_err(|e| LhpError::Io {
        path: dir.join("manifest.json").display().to_string(),
        source: e.into(),
    })?;
    Ok(manifest)
}

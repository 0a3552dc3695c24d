//! Run configuration file schema. Every physical key carries its unit in
//! the name; temperatures are absolute (K).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{LhpError, Result};
use crate::fluid_props::AntoineParams;
use crate::model::{ExogenousInputs, Geometry, LhpState, LumpedParams, ALPHA_BAR_DEFAULT, T_AMB_DEFAULT};
use crate::ode::{InputProfile, IntegrateOptions, Method};
use crate::param_ident::OperatingPoint;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "LHP_";
/// Separator between nested keys in an override variable name.
pub const ENV_SEPARATOR: &str = "__";

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub V_cc_m3: f64,
    pub L_cond_m: f64,
    pub L_ll_m: f64,
    pub D_c_m: f64,
    pub R_p_m: f64,
    pub theta_rad: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = Geometry::reconstructed();
        Self {
            V_cc_m3: g.v_cc(),
            L_cond_m: g.l_cond(),
            L_ll_m: g.l_ll(),
            D_c_m: g.d_c(),
            R_p_m: g.r_p(),
            theta_rad: g.theta(),
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<Geometry> {
        Geometry::new(self.V_cc_m3, self.L_cond_m, self.L_ll_m, self.D_c_m, self.R_p_m, self.theta_rad)
            .map_err(|e| LhpError::config("geometry", e.to_string()))
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    /// Antoine constant for ln(p / Pa).
    pub A_wf: f64,
    pub B_wf_K: f64,
    pub C_wf_K: f64,
    pub R_gas_J_per_kgK: f64,
    pub T_amb_K: f64,
}

impl Default for FluidConfig {
    fn default() -> Self {
        let a = AntoineParams::default();
        Self {
            A_wf: a.a_wf,
            B_wf_K: a.b_wf,
            C_wf_K: a.c_wf,
            R_gas_J_per_kgK: a.r_gas,
            T_amb_K: T_AMB_DEFAULT,
        }
    }
}

impl FluidConfig {
    pub fn antoine(&self) -> Result<AntoineParams> {
        let a = AntoineParams {
            a_wf: self.A_wf,
            b_wf: self.B_wf_K,
            c_wf: self.C_wf_K,
            r_gas: self.R_gas_J_per_kgK,
        };
        a.validate().map_err(|e| LhpError::config("fluid", e.to_string()))?;
        Ok(a)
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointConfig {
    pub Q_evap_W: f64,
    pub T_sink_K: f64,
    pub Q_cc_W: f64,
    pub T_cc_K: f64,
    pub eta_m: f64,
    pub V_cc_l_m3: f64,
    pub mdot_l_kg_per_s: f64,
    pub T_evap_K: f64,
    pub T_cond_K: f64,
    pub T_cond_out_K: f64,
}

impl Default for OperatingPointConfig {
    fn default() -> Self {
        let op = OperatingPoint::reference();
        Self {
            Q_evap_W: op.inputs.q_evap,
            T_sink_K: op.inputs.t_sink,
            Q_cc_W: op.inputs.q_cc,
            T_cc_K: op.state.t_cc,
            eta_m: op.state.eta,
            V_cc_l_m3: op.state.v_cc_l,
            mdot_l_kg_per_s: op.state.mdot_l,
            T_evap_K: op.t_evap,
            T_cond_K: op.t_cond,
            T_cond_out_K: op.t_cond_out,
        }
    }
}

impl From<&OperatingPointConfig> for OperatingPoint {
    fn from(c: &OperatingPointConfig) -> Self {
        OperatingPoint {
            inputs: ExogenousInputs {
                q_evap: c.Q_evap_W,
                t_sink: c.T_sink_K,
                q_cc: c.Q_cc_W,
            },
            state: LhpState {
                t_cc: c.T_cc_K,
                eta: c.eta_m,
                v_cc_l: c.V_cc_l_m3,
                mdot_l: c.mdot_l_kg_per_s,
            },
            t_evap: c.T_evap_K,
            t_cond: c.T_cond_K,
            t_cond_out: c.T_cond_out_K,
        }
    }
}

/// Where the lumped parameters come from.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamsConfig {
    /// Identify from an operating point (the reference one by default).
    Identify {
        #[serde(default)]
        operating_point: OperatingPointConfig,
        #[serde(default = "alpha_bar_default")]
        alpha_bar: f64,
    },
    Explicit {
        R_wick_K_per_W: f64,
        k_2phi_W_per_m2K: f64,
        k_sc_W_per_m2K: f64,
        k_ll_W_per_m2K: f64,
        dp_fri_Pa: f64,
        #[serde(default = "alpha_bar_default")]
        alpha_bar: f64,
    },
}

fn alpha_bar_default() -> f64 {
    ALPHA_BAR_DEFAULT
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig::Identify {
            operating_point: OperatingPointConfig::default(),
            alpha_bar: ALPHA_BAR_DEFAULT,
        }
    }
}

impl ParamsConfig {
    pub fn explicit(p: &LumpedParams) -> Self {
        ParamsConfig::Explicit {
            R_wick_K_per_W: p.r_wick,
            k_2phi_W_per_m2K: p.k_2phi,
            k_sc_W_per_m2K: p.k_sc,
            k_ll_W_per_m2K: p.k_ll,
            dp_fri_Pa: p.dp_fri,
            alpha_bar: p.alpha_bar,
        }
    }
}

/// Initial state of a run.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Equilibrium at the given inputs, or at the profile's t = 0 inputs
    /// when they are omitted.
    Equilibrium {
        Q_evap_W: Option<f64>,
        T_sink_K: Option<f64>,
        Q_cc_W: Option<f64>,
    },
    /// Equilibrium holding the controller setpoint, with the heater power
    /// as the unknown. Omitted inputs come from the profile at t = 0.
    SetpointEquilibrium {
        Q_evap_W: Option<f64>,
        T_sink_K: Option<f64>,
    },
    State {
        T_cc_K: f64,
        eta_m: f64,
        V_cc_l_m3: f64,
        mdot_l_kg_per_s: f64,
    },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Equilibrium {
            Q_evap_W: None,
            T_sink_K: None,
            Q_cc_W: None,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub step_s: f64,
    pub sample_interval_s: f64,
    pub atol_T_cc_K: f64,
    pub atol_eta_m: f64,
    pub atol_V_cc_l_m3: f64,
    pub atol_mdot_l_kg_per_s: f64,
    pub rtol: f64,
    pub event_tol_s: f64,
    pub rho_refresh: usize,
    /// Step budget; unlimited when absent.
    pub max_steps: Option<u64>,
    /// Tolerance of the auxiliary temperature fixed points, K.
    pub fixed_point_tol_K: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::from(&IntegrateOptions::default())
    }
}

impl From<&IntegrateOptions> for IntegratorConfig {
    fn from(o: &IntegrateOptions) -> Self {
        Self {
            method: o.method,
            step_s: o.step_s,
            sample_interval_s: o.sample_interval_s,
            atol_T_cc_K: o.atol[0],
            atol_eta_m: o.atol[1],
            atol_V_cc_l_m3: o.atol[2],
            atol_mdot_l_kg_per_s: o.atol[3],
            rtol: o.rtol,
            event_tol_s: o.event_tol_s,
            rho_refresh: o.rho_refresh,
            max_steps: (o.max_steps != u64::MAX).then_some(o.max_steps),
            fixed_point_tol_K: crate::model::FixedPointOptions::default().tol,
        }
    }
}

impl IntegratorConfig {
    pub fn options(&self) -> Result<IntegrateOptions> {
        let o = IntegrateOptions {
            method: self.method,
            step_s: self.step_s,
            sample_interval_s: self.sample_interval_s,
            atol: [self.atol_T_cc_K, self.atol_eta_m, self.atol_V_cc_l_m3, self.atol_mdot_l_kg_per_s],
            rtol: self.rtol,
            event_tol_s: self.event_tol_s,
            rho_refresh: self.rho_refresh,
            max_steps: self.max_steps.unwrap_or(u64::MAX),
        };
        o.validate()?;
        if !(self.fixed_point_tol_K > 0.0) {
            return Err(LhpError::config("integrator.fixed_point_tol_K", "must be positive"));
        }
        Ok(o)
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilePoint {
    pub t_s: f64,
    pub Q_evap_W: f64,
    pub T_sink_K: f64,
    /// Ignored in closed loop.
    #[serde(default)]
    pub Q_cc_W: f64,
}

impl ProfilePoint {
    pub fn inputs(&self) -> ExogenousInputs {
        ExogenousInputs {
            q_evap: self.Q_evap_W,
            t_sink: self.T_sink_K,
            q_cc: self.Q_cc_W,
        }
    }
}

/// Replaces each profile jump after t = 0 by `increments` equal sub-steps
/// spread over `duration_s`, starting at the breakpoint time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampConfig {
    pub duration_s: f64,
    pub increments: usize,
}

impl RampConfig {
    pub fn expand(&self, points: &[(f64, ExogenousInputs)]) -> Result<Vec<(f64, ExogenousInputs)>> {
        if !(self.duration_s > 0.0) || self.increments == 0 {
            return Err(LhpError::config("ramp", "needs a positive duration_s and at least one increment"));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].0 - w[0].0 <= self.duration_s) {
            return Err(LhpError::config(
                "ramp.duration_s",
                format!("must be shorter than the profile spacing ({} s to {} s)", w[0].0, w[1].0),
            ));
        }
        let mut out = Vec::with_capacity(points.len() * self.increments);
        out.extend(points.first().copied());
        for w in points.windows(2) {
            let ((_, a), (t, b)) = (w[0], w[1]);
            out.extend((1..=self.increments).map(|i| {
                let s = i as f64 / self.increments as f64;
                let lerp = |x: f64, y: f64| if i == self.increments { y } else { x + s * (y - x) };
                (
                    t + self.duration_s * (i - 1) as f64 / self.increments as f64,
                    ExogenousInputs {
                        q_evap: lerp(a.q_evap, b.q_evap),
                        t_sink: lerp(a.t_sink, b.t_sink),
                        q_cc: lerp(a.q_cc, b.q_cc),
                    },
                )
            }));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambdas_per_s: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas_per_s: vec![0.25, 0.5, 1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; `out/<name>` when absent.
    pub dir: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub t_end_s: f64,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub ramp: Option<RampConfig>,
    pub profile: Vec<ProfilePoint>,
}

impl RunConfig {
    pub fn input_profile(&self) -> Result<InputProfile> {
        let points: Vec<_> = self.profile.iter().map(|p| (p.t_s, p.inputs())).collect();
        let profile = InputProfile::new(points)
            .map_err(|e| LhpError::config("profile", e.to_string().trim_start_matches("invalid parameter: ")))?;
        match &self.ramp {
            None => Ok(profile),
            Some(r) => InputProfile::new(r.expand(profile.points())?),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| Path::new("out").join(&self.name))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(LhpError::config("name", "must be a non-empty file name"));
        }
        if !(self.t_end_s > 0.0 && self.t_end_s.is_finite()) {
            return Err(LhpError::config("t_end_s", "must be positive"));
        }
        self.geometry.build()?;
        self.fluid.antoine()?;
        self.integrator.options()?;
        self.controller.validate()?;
        self.input_profile()?;
        if let Some(l) = self.sweep.lambdas_per_s.iter().find(|l| !(**l > 0.0)) {
            return Err(LhpError::config("sweep.lambdas_per_s", format!("{l} is not positive")));
        }
        Ok(())
    }

    /// Parses TOML text, applying `overrides` (dotted key, raw value) first.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let value: toml::Value = text.parse().map_err(|e: toml::de::Error| LhpError::config("<file>", e.message()))?;
        Self::from_value(value, overrides)
    }

    fn from_value(mut value: toml::Value, overrides: &[(String, String)]) -> Result<Self> {
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            LhpError::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML config, or the `config` object of a JSON run manifest,
    /// with overrides from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LhpError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let overrides = env_overrides(std::env::vars());
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| LhpError::config("<file>", e.to_string()))?;
            let cfg = manifest
                .get("config")
                .ok_or_else(|| LhpError::config("config", "manifest has no config object"))?;
            let value = toml::Value::try_from(without_nulls(cfg.clone()))
                .map_err(|e| LhpError::config("config", e.to_string()))?;
            return Self::from_value(value, &overrides);
        }
        Self::from_toml_str(&text, &overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }
}

/// Unset optional fields appear as `null` in a manifest; TOML has no null.
fn without_nulls(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, without_nulls(v)))
                .collect(),
        ),
        Value::Array(items) => Value::Array(items.into_iter().map(without_nulls).collect()),
        other => other,
    }
}

/// Collects `LHP_A__B=value` variables as (`a.b`, `value`) pairs, sorted by
/// key so the order of application is reproducible.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            (!rest.is_empty()).then(|| (rest.split(ENV_SEPARATOR).collect::<Vec<_>>().join("."), v))
        })
        .collect();
    out.sort();
    out
}

/// Sets a dotted key in a TOML tree. Segments match existing keys
/// case-insensitively, numeric segments index arrays, and the value is
/// parsed as a TOML literal, falling back to a string.
pub fn apply_override(root: &mut toml::Value, dotted: &str, raw: &str) -> Result<()> {
    let segments: Vec<&str> = dotted.split('.').collect();
    let parsed = parse_literal(raw);
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            toml::Value::Table(table) => {
                let key = table
                    .keys()
                    .find(|k| k.eq_ignore_ascii_case(seg))
                    .cloned()
                    .unwrap_or_else(|| seg.to_ascii_lowercase());
                if last {
                    table.insert(key, parsed);
                    return Ok(());
                }
                table.entry(key).or_insert_with(|| toml::Value::Table(Default::default()))
            }
            toml::Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| LhpError::config(dotted, format!("`{seg}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| LhpError::config(dotted, format!("index {idx} out of range for {len} entries")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(LhpError::config(dotted, format!("`{seg}` is not inside a table or array"))),
        };
    }
    Err(LhpError::config(dotted, "empty override key"))
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Operating-point file accepted by `fit-params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default = "alpha_bar_default")]
    pub alpha_bar: f64,
    pub operating_point: OperatingPointConfig,
}

impl FitConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            LhpError::config(path, e.into_inner().message().to_string())
        })
    }
}

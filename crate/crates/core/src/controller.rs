//! Lyapunov-based feedback-linearizing law for the chamber heater and the
//! closed-loop driver.

use serde::{Deserialize, Serialize};

use crate::error::{LhpError, Result};
use crate::fluid_props::{self as fp, kelvin_to_celsius};
use crate::model::{relations, AuxOutputs, Evaluator, ExogenousInputs, LhpModel, LhpState};
use crate::ode::{integrate_with, InputProfile, InputSource, IntegrateOptions, Trajectory};

pub const T_SET_DEFAULT: f64 = 300.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Prescribed error decay rate, 1/s.
    pub lambda_per_s: f64,
    #[serde(rename = "T_set_K")]
    pub t_set_k: f64,
    #[serde(rename = "Q_cc_min_W")]
    pub q_cc_min_w: f64,
    #[serde(rename = "Q_cc_max_W")]
    pub q_cc_max_w: f64,
    /// Zero-order-hold period of the heater command; every integration
    /// step when absent.
    pub update_interval_s: Option<f64>,
    /// Re-evaluate the law at every integrator stage instead of holding it
    /// over the step.
    pub continuous: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda_per_s: 1.0,
            t_set_k: T_SET_DEFAULT,
            q_cc_min_w: 0.0,
            q_cc_max_w: 10.0,
            update_interval_s: None,
            continuous: false,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_per_s > 0.0 && self.lambda_per_s.is_finite()) {
            return Err(LhpError::config("controller.lambda_per_s", "must be positive"));
        }
        if !(self.t_set_k > 0.0) {
            return Err(LhpError::config("controller.T_set_K", "must be a positive absolute temperature"));
        }
        if !(self.q_cc_min_w <= self.q_cc_max_w) {
            return Err(LhpError::config("controller.Q_cc_min_W", "must not exceed Q_cc_max_W"));
        }
        if let Some(dt) = self.update_interval_s {
            if !(dt > 0.0) {
                return Err(LhpError::config("controller.update_interval_s", "must be positive"));
            }
            if self.continuous {
                return Err(LhpError::config("controller.continuous", "excludes update_interval_s"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub t: f64,
    /// Setpoint error T_set - T_cc, K.
    pub e: f64,
    pub q_cc_unsat: f64,
    pub q_cc_applied: f64,
    pub saturated: bool,
}

impl ControlRecord {
    /// Lyapunov function e²/2.
    pub fn lyapunov(&self) -> f64 {
        0.5 * self.e * self.e
    }
}

/// Heater power that makes dT_cc/dt = λ(T_set − T_cc), and its clipped
/// value. Uses only the state and the auxiliary outputs.
pub fn control_law(x: &LhpState, aux: &AuxOutputs, cfg: &ControllerConfig, model: &LhpModel) -> Result<(f64, f64)> {
    let c = kelvin_to_celsius(x.t_cc);
    let (rl, rv, dh) = (fp::rho_l(c)?, fp::rho_v(c)?, fp::dh_v(c)?);
    if rl == rv {
        return Err(LhpError::Singularity("liquid and vapor densities coincide".into()));
    }
    let g = &model.geometry;
    let r = model.fluid.r_gas;
    let k = relations::cc_coefficients(rl, rv, dh, r, x.t_cc, g.v_cc(), x.v_cc_l);
    let capacity = relations::cc_capacity(&k, rl, rv, fp::cp_l(c)?, dh, g.v_cc(), x.v_cc_l, r, x.t_cc);
    let cp_in = 0.5 * (fp::cp_l(kelvin_to_celsius(aux.t_cc_in))? + fp::cp_l(c)?);
    let e = cfg.t_set_k - x.t_cc;
    let unsat = relations::linearizing_heat(cfg.lambda_per_s, e, capacity, k.a, x.mdot_l, aux.mdot_v, cp_in, aux.t_cc_in, x.t_cc, aux.q_wick);
    Ok((unsat, unsat.clamp(cfg.q_cc_min_w, cfg.q_cc_max_w)))
}

/// Input source that overrides the heater power with the control law.
struct ClosedLoop<'a> {
    disturbances: &'a InputProfile,
    cfg: ControllerConfig,
    model: &'a LhpModel,
    t_end: f64,
    next_update: f64,
    held: Option<f64>,
    log: Vec<ControlRecord>,
}

impl InputSource for ClosedLoop<'_> {
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.disturbances.breakpoints().collect();
        if let Some(dt) = self.cfg.update_interval_s {
            let n = (self.t_end / dt).floor() as u64;
            b.extend((1..=n).map(|k| k as f64 * dt));
        }
        b
    }

    fn inputs(&mut self, t: f64, x: &LhpState, ev: &mut Evaluator) -> Result<ExogenousInputs> {
        let d = self.disturbances.at(t);
        let due = match (self.cfg.update_interval_s, self.held) {
            (_, None) | (None, _) => true,
            (Some(_), Some(_)) => t >= self.next_update - 1e-9,
        };
        if due {
            let aux = ev.evaluate(x, &d)?.aux;
            let (unsat, applied) = control_law(x, &aux, &self.cfg, self.model)?;
            if let Some(dt) = self.cfg.update_interval_s {
                self.next_update = ((t / dt + 1e-9).floor() + 1.0) * dt;
            }
            self.held = Some(applied);
            let rec = ControlRecord {
                t,
                e: self.cfg.t_set_k - x.t_cc,
                q_cc_unsat: unsat,
                q_cc_applied: applied,
                saturated: applied != unsat,
            };
            // Repeated calls at the same instant (sampling) replace the entry.
            match self.log.last_mut() {
                Some(last) if last.t == t => *last = rec,
                _ => self.log.push(rec),
            }
        }
        Ok(ExogenousInputs {
            q_cc: self.held.unwrap_or(0.0),
            ..d
        })
    }

    fn stage_inputs(&mut self, t: f64, x: &LhpState, ev: &mut Evaluator) -> Option<Result<ExogenousInputs>> {
        if !self.cfg.continuous {
            return None;
        }
        let d = self.disturbances.at(t);
        Some(
            ev.evaluate(x, &d)
                .and_then(|e| control_law(x, &e.aux, &self.cfg, self.model))
                .map(|(_, applied)| ExogenousInputs { q_cc: applied, ..d }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    pub control: Vec<ControlRecord>,
}

/// Simulates the loop with the heater driven by the control law; the
/// profile's heater column is ignored.
pub fn closed_loop(
    x0: LhpState,
    disturbances: &InputProfile,
    cfg: &ControllerConfig,
    model: &LhpModel,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<ClosedLoopRun> {
    cfg.validate()?;
    let mut src = ClosedLoop {
        disturbances,
        cfg: *cfg,
        model,
        t_end,
        next_update: 0.0,
        held: None,
        log: Vec::new(),
    };
    let trajectory = integrate_with(x0, &mut src, model, t_end, opts)?;
    Ok(ClosedLoopRun {
        trajectory,
        control: src.log,
    })
}

/// Largest increase of e²/2 between consecutive control updates, counting
/// only updates whose command was unsaturated.
pub fn max_unsaturated_lyapunov_increase(control: &[ControlRecord]) -> f64 {
    control
        .windows(2)
        .filter(|w| !w[0].saturated)
        .map(|w| w[1].lyapunov() - w[0].lyapunov())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaSweepRow {
    pub lambda_per_s: f64,
    /// Max |T_cc − T_set| over the run, K.
    pub mad: f64,
    pub rmse: f64,
    /// Max deviation of e(t) from e(0)·exp(−λt), K.
    pub max_linear_deviation: f64,
    pub saturated_fraction: f64,
    pub completed: bool,
}

/// Setpoint step response for each λ from `x0` under constant
/// disturbances.
pub fn sweep_lambda(
    lambdas: &[f64],
    x0: LhpState,
    disturbances: &InputProfile,
    base: &ControllerConfig,
    model: &LhpModel,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Vec<LambdaSweepRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = ControllerConfig {
                lambda_per_s: lambda,
                ..*base
            };
            let run = closed_loop(x0, disturbances, &cfg, model, t_end, opts)?;
            let recs = &run.trajectory.records;
            let e0 = cfg.t_set_k - recs[0].state.t_cc;
            let errs: Vec<f64> = recs.iter().map(|r| cfg.t_set_k - r.state.t_cc).collect();
            let mad = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            let lin = recs
                .iter()
                .zip(&errs)
                .map(|(r, e)| (e - e0 * (-lambda * r.t).exp()).abs())
                .fold(0.0f64, f64::max);
            let sat = run.control.iter().filter(|c| c.saturated).count() as f64 / run.control.len().max(1) as f64;
            Ok(LambdaSweepRow {
                lambda_per_s: lambda,
                mad,
                rmse,
                max_linear_deviation: lin,
                saturated_fraction: sat,
                completed: run.trajectory.event.is_none(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;
    use crate::ode::{equilibrium_at_temperature, find_equilibrium, EquilibriumOptions};
    use crate::param_ident::{identify, IdentifyConfig, OperatingPoint};

    fn setup() -> (LhpModel, LhpState) {
        let cfg = IdentifyConfig::default();
        let g = Geometry::reconstructed();
        let m = identify(&OperatingPoint::reference(), &g, &cfg).unwrap().model(g, &cfg);
        let eq = find_equilibrium(
            &ExogenousInputs::reference_operating_point(),
            &m,
            &LhpState::reference_operating_point(),
            &EquilibriumOptions::default(),
        )
        .unwrap();
        (m, eq.state)
    }

    /// Heater power and equilibrium whose chamber temperature is `target`,
    /// by secant iteration on the heater power.
    fn equilibrium_at(m: &LhpModel, d: ExogenousInputs, target: f64, guess: &LhpState) -> (ExogenousInputs, LhpState) {
        let eq = equilibrium_at_temperature(&d, target, m, guess, &EquilibriumOptions::default()).unwrap();
        (eq.inputs, eq.state)
    }

    #[test]
    fn zero_error_is_pure_feedforward() {
        let (m, x) = setup();
        let u = ExogenousInputs::reference_operating_point();
        let e = m.evaluator().evaluate(&x, &u).unwrap();
        let cfg = ControllerConfig {
            t_set_k: x.t_cc,
            ..ControllerConfig::default()
        };
        let (unsat, _) = control_law(&x, &e.aux, &cfg, &m).unwrap();
        let ff = -e.coeffs.a * (x.mdot_l - e.aux.mdot_v) - e.cp_in * x.mdot_l * (e.aux.t_cc_in - x.t_cc) - e.aux.q_wick;
        assert!((unsat - ff).abs() < 1e-12);
        // At the equilibrium the feedforward equals the applied heater power.
        assert!((unsat - u.q_cc).abs() < 1e-6, "{unsat}");
    }

    #[test]
    fn applied_law_linearizes_chamber_temperature() {
        let (m, x) = setup();
        let d = ExogenousInputs::reference_operating_point();
        let cfg = ControllerConfig::default();
        for dt in [-0.1, 0.0, 0.14, 0.3] {
            let x = LhpState { t_cc: x.t_cc + dt, ..x };
            let aux = m.evaluator().evaluate(&x, &d).unwrap().aux;
            let (unsat, applied) = control_law(&x, &aux, &cfg, &m).unwrap();
            assert_eq!(unsat, applied);
            let rate = m.evaluator().evaluate(&x, &ExogenousInputs { q_cc: applied, ..d }).unwrap().rates.t_cc;
            assert!((rate - (cfg.t_set_k - x.t_cc)).abs() < 1e-9, "{rate}");
        }
    }

    #[test]
    fn hot_chamber_saturates_at_zero() {
        let (m, x) = setup();
        let cfg = ControllerConfig::default();
        let x = LhpState {
            t_cc: cfg.t_set_k + 2.0,
            ..x
        };
        let aux = m.evaluator().evaluate(&x, &ExogenousInputs::reference_operating_point()).unwrap().aux;
        let (unsat, applied) = control_law(&x, &aux, &cfg, &m).unwrap();
        assert!(unsat < 0.0);
        assert_eq!(applied, 0.0);
    }

    #[test]
    fn setpoint_equilibrium_is_held() {
        let (m, x0) = setup();
        let cfg = ControllerConfig::default();
        let d = ExogenousInputs::reference_operating_point();
        let (d, x) = equilibrium_at(&m, d, cfg.t_set_k, &x0);
        let run = closed_loop(x, &InputProfile::constant(d), &cfg, &m, 20.0, &IntegrateOptions::rkc(0.01)).unwrap();
        let max_e = run.control.iter().map(|c| c.e.abs()).fold(0.0, f64::max);
        assert!(max_e < 1e-6, "{max_e}");
    }

    #[test]
    fn step_response_follows_exponential() {
        // Low load keeps the command within the heater range for e(0) = 0.5 K.
        let (m, x0) = setup();
        let cfg = ControllerConfig::default();
        let low = ExogenousInputs {
            q_evap: 20.0,
            q_cc: 0.5,
            ..ExogenousInputs::reference_operating_point()
        };
        let start = crate::ode::continue_equilibrium(
            &ExogenousInputs::reference_operating_point(),
            &low,
            &x0,
            &m,
            10,
            &EquilibriumOptions::default(),
        )
        .unwrap();
        let (d, x) = equilibrium_at(&m, low, cfg.t_set_k - 0.5, &start.state);
        // The per-step hold adds an O(h) lag; 0.1 s steps would exceed 5 mK.
        let opts = IntegrateOptions {
            step_s: 0.01,
            sample_interval_s: 0.5,
            ..IntegrateOptions::default()
        };
        let run = closed_loop(x, &InputProfile::constant(d), &cfg, &m, 10.0, &opts).unwrap();
        assert!(run.control.iter().all(|c| !c.saturated));
        for r in &run.trajectory.records {
            let e = cfg.t_set_k - r.state.t_cc;
            assert!((e - 0.5 * (-r.t).exp()).abs() < 5e-3, "t = {}: {e}", r.t);
        }
        assert!(max_unsaturated_lyapunov_increase(&run.control) <= 0.0);
    }

    #[test]
    fn update_interval_holds_command() {
        let (m, x0) = setup();
        let cfg = ControllerConfig {
            update_interval_s: Some(0.5),
            ..ControllerConfig::default()
        };
        let run = closed_loop(
            x0,
            &InputProfile::constant(ExogenousInputs::reference_operating_point()),
            &cfg,
            &m,
            3.0,
            &IntegrateOptions::rkc(0.05),
        )
        .unwrap();
        let times: Vec<f64> = run.control.iter().map(|c| c.t).collect();
        assert_eq!(times.len(), 7, "{times:?}");
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.5 * k as f64).abs() < 1e-9);
        }
    }
}

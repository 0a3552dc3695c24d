//! Lumped-parameter identification from a single stationary operating point.

use serde::{Deserialize, Serialize};

use crate::error::{LhpError, Result};
use crate::fluid_props::{self as fp, celsius_to_kelvin, kelvin_to_celsius, AntoineParams};
use crate::model::{
    capillary_pressure, relations, AuxOutputs, ExogenousInputs, Geometry, LhpModel, LhpState, LumpedParams,
    ALPHA_BAR_DEFAULT, T_AMB_DEFAULT,
};
use crate::solver::{newton, NewtonOptions};

/// Default clearance of the condenser outlet above the sink, K.
pub const OUTLET_MARGIN_DEFAULT: f64 = 1e-4;

/// Stationary operating point: inputs, states and the measured
/// evaporator and condenser temperatures (all in K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub inputs: ExogenousInputs,
    pub state: LhpState,
    pub t_evap: f64,
    pub t_cond: f64,
    pub t_cond_out: f64,
}

impl OperatingPoint {
    /// The reference operating point.
    pub fn reference() -> Self {
        let inputs = ExogenousInputs::reference_operating_point();
        Self {
            inputs,
            state: LhpState::reference_operating_point(),
            t_evap: celsius_to_kelvin(26.95),
            t_cond: celsius_to_kelvin(26.93),
            t_cond_out: clamp_condenser_outlet(inputs.t_sink, inputs.t_sink, OUTLET_MARGIN_DEFAULT),
        }
    }

    /// Operating point read off a model equilibrium.
    pub fn from_equilibrium(state: LhpState, inputs: ExogenousInputs, aux: &AuxOutputs) -> Self {
        Self {
            inputs,
            state,
            t_evap: aux.t_evap,
            t_cond: aux.t_cond,
            t_cond_out: aux.t_cond_out,
        }
    }

    pub fn validate(&self, geom: &Geometry) -> Result<()> {
        self.state.check_mode(geom)?;
        if !(self.state.mdot_l > 0.0) {
            return Err(LhpError::InconsistentOperatingPoint("liquid mass flow must be positive".into()));
        }
        let sink = self.inputs.t_sink;
        if !(sink < self.t_cond_out && self.t_cond_out < self.t_cond) {
            return Err(LhpError::InconsistentOperatingPoint(format!(
                "need T_sink < T_cond_out < T_cond, got {sink} K, {} K, {} K; clamp the outlet above the sink",
                self.t_cond_out, self.t_cond
            )));
        }
        Ok(())
    }
}

pub fn clamp_condenser_outlet(t_cond_out: f64, t_sink: f64, margin: f64) -> f64 {
    t_cond_out.max(t_sink + margin)
}

/// Wick friction loss that reproduces the operating-point evaporator
/// temperature, Pa.
pub fn friction_pressure_loss(op: &OperatingPoint, geom: &Geometry, fluid: &AntoineParams) -> Result<f64> {
    let t_cc = op.state.t_cc;
    let dp = fp::antoine_pressure(t_cc, fluid)? + capillary_pressure(t_cc, geom)?
        - fp::antoine_pressure(op.t_evap, fluid)?;
    if dp < 0.0 {
        return Err(LhpError::InconsistentOperatingPoint(format!(
            "friction loss {dp} Pa is negative; T_evap exceeds the capillary limit"
        )));
    }
    Ok(dp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    pub newton: NewtonOptions,
    pub alpha_bar: f64,
    /// Ambient temperature around the liquid line, K.
    pub t_amb: f64,
    pub fluid: AntoineParams,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            alpha_bar: ALPHA_BAR_DEFAULT,
            t_amb: T_AMB_DEFAULT,
            fluid: AntoineParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedParams {
    pub params: LumpedParams,
    /// Chamber inlet temperature at the operating point, K.
    pub t_cc_in: f64,
    /// Initial guess from the decoupled solve.
    pub sequential: [f64; 5],
    pub residual_norm: f64,
    pub iterations: usize,
}

impl IdentifiedParams {
    pub fn unknowns(&self) -> [f64; 5] {
        [self.params.r_wick, self.params.k_2phi, self.params.k_sc, self.params.k_ll, self.t_cc_in]
    }

    pub fn model(&self, geometry: Geometry, cfg: &IdentifyConfig) -> LhpModel {
        let mut m = LhpModel::new(geometry, self.params);
        m.fluid = cfg.fluid;
        m.t_amb = cfg.t_amb;
        m
    }
}

const NAMES: [&str; 5] = ["R_wick", "k_2phi", "k_sc", "k_ll", "T_cc_in"];

fn cp_mean(t1: f64, t2: f64) -> Result<f64> {
    Ok(0.5 * (fp::cp_l(kelvin_to_celsius(t1))? + fp::cp_l(kelvin_to_celsius(t2))?))
}

struct Stationary<'a> {
    op: &'a OperatingPoint,
    geom: &'a Geometry,
    cfg: &'a IdentifyConfig,
}

impl Stationary<'_> {
    fn sequential(&self) -> Result<[f64; 5]> {
        let (op, g) = (self.op, self.geom);
        let x = &op.state;
        let u = &op.inputs;
        let m = x.mdot_l;

        let per_kg = cp_mean(op.t_evap, x.t_cc)? * (op.t_evap - x.t_cc) + fp::dh_v(kelvin_to_celsius(op.t_evap))?;
        let q_wick = u.q_evap - m * per_kg;
        let r_wick = (op.t_evap - x.t_cc) / q_wick;

        let dh_cond = fp::dh_v(kelvin_to_celsius(op.t_cond))?;
        let k_2phi = dh_cond * m / (std::f64::consts::PI * g.d_c() * x.eta * (op.t_cond - u.t_sink));

        let cp_sc = cp_mean(op.t_cond, op.t_cond_out)?;
        let k_sc = m * cp_sc * ((op.t_cond - u.t_sink) / (op.t_cond_out - u.t_sink)).ln()
            / (std::f64::consts::PI * g.d_c() * (g.l_cond() - x.eta));

        let mut t_in = x.t_cc;
        for _ in 0..100 {
            let next = x.t_cc - (u.q_cc + q_wick) / (m * cp_mean(t_in, x.t_cc)?);
            let done = (next - t_in).abs() < 1e-13;
            t_in = next;
            if done {
                break;
            }
        }

        let t_amb = self.cfg.t_amb;
        let cp_ll = cp_mean(t_in, op.t_cond_out)?;
        let k_ll = m * cp_ll * ((op.t_cond_out - t_amb) / (t_in - t_amb)).ln() / (std::f64::consts::PI * g.d_c() * g.l_ll());
        Ok([r_wick, k_2phi, k_sc, k_ll, t_in])
    }

    /// The five stationary equations: dT_cc/dt, dη/dt and the T_cond,
    /// T_cond_out and T_cc_in defects.
    fn residual(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (op, g) = (self.op, self.geom);
        let x = &op.state;
        let u = &op.inputs;
        let [r_wick, k_2phi, k_sc, k_ll, t_in] = [p[0], p[1], p[2], p[3], p[4]];
        let c = |t: f64| kelvin_to_celsius(t);

        let q_wick = relations::heat_leak(op.t_evap, x.t_cc, r_wick);
        let cp_ev = cp_mean(op.t_evap, x.t_cc)?;
        let mdot_v = relations::vapor_flow(u.q_evap, q_wick, cp_ev, op.t_evap, x.t_cc, fp::dh_v(c(op.t_evap))?)
            .ok_or_else(|| LhpError::ModelValidity("evaporator enthalpy rise is not positive".into()))?;

        let rl = fp::rho_l(c(x.t_cc))?;
        let rv = fp::rho_v(c(x.t_cc))?;
        let dh = fp::dh_v(c(x.t_cc))?;
        let k = relations::cc_coefficients(rl, rv, dh, self.cfg.fluid.r_gas, x.t_cc, g.v_cc(), x.v_cc_l);
        let cap = relations::cc_capacity(&k, rl, rv, fp::cp_l(c(x.t_cc))?, dh, g.v_cc(), x.v_cc_l, self.cfg.fluid.r_gas, x.t_cc);
        let heat = relations::cc_heat_input(&k, x.mdot_l, mdot_v, cp_mean(t_in, x.t_cc)?, t_in, x.t_cc, u.q_cc, q_wick);

        let rl_c = fp::rho_l(c(op.t_cond))?;
        let rv_c = fp::rho_v(c(op.t_cond))?;
        let dh_c = fp::dh_v(c(op.t_cond))?;
        let deta = relations::interface_rate(k_2phi, g.d_c(), op.t_cond, u.t_sink, rv_c, self.cfg.alpha_bar, g.a_c(), dh_c, x.eta, mdot_v);
        let rho2 = relations::two_phase_density(rl_c, rv_c, self.cfg.alpha_bar);
        let mstar = relations::interface_flow(mdot_v, x.mdot_l, rl_c, rho2);
        let t_cond = relations::condensation_temperature(u.t_sink, dh_c, mstar, k_2phi, g.d_c(), x.eta);

        let t_out = relations::exchanger_outlet(
            u.t_sink,
            op.t_cond,
            g.d_c(),
            k_sc,
            g.l_cond() - x.eta,
            x.mdot_l,
            cp_mean(op.t_cond, op.t_cond_out)?,
        );
        let t_in_model = relations::exchanger_outlet(
            self.cfg.t_amb,
            op.t_cond_out,
            g.d_c(),
            k_ll,
            g.l_ll(),
            x.mdot_l,
            cp_mean(t_in, op.t_cond_out)?,
        );
        Ok(vec![heat / cap, deta, op.t_cond - t_cond, op.t_cond_out - t_out, t_in - t_in_model])
    }
}

fn check_feasible(p: &[f64; 5]) -> Result<()> {
    for (name, v) in NAMES.iter().zip(p).take(4) {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(LhpError::Infeasible { name, value: *v });
        }
    }
    if !(p[4] > 0.0) || !p[4].is_finite() {
        return Err(LhpError::Infeasible { name: NAMES[4], value: p[4] });
    }
    Ok(())
}

/// Solves the stationary system for R_wick, k_2phi, k_sc, k_ll and T_cc_in.
/// The decoupled solution seeds a simultaneous damped Newton solve.
pub fn identify(op: &OperatingPoint, geom: &Geometry, cfg: &IdentifyConfig) -> Result<IdentifiedParams> {
    op.validate(geom)?;
    let dp_fri = friction_pressure_loss(op, geom, &cfg.fluid)?;
    let sys = Stationary { op, geom, cfg };
    let seq = sys.sequential()?;
    check_feasible(&seq)?;

    let scale: Vec<f64> = seq.iter().map(|v| v.abs()).collect();
    let rep = newton(|p| sys.residual(p), &seq, &scale, &cfg.newton, "parameter identification")?;
    let sol: [f64; 5] = rep.x.as_slice().try_into().expect("five unknowns");
    check_feasible(&sol)?;

    Ok(IdentifiedParams {
        params: LumpedParams {
            r_wick: sol[0],
            k_2phi: sol[1],
            k_sc: sol[2],
            k_ll: sol[3],
            dp_fri,
            alpha_bar: cfg.alpha_bar,
        },
        t_cc_in: sol[4],
        sequential: seq,
        residual_norm: rep.residual_norm,
        iterations: rep.iterations,
    })
}

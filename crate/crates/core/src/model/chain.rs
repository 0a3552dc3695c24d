use serde::{Deserialize, Serialize};

use super::relations::{self, CcCoefficients};
use super::{AuxOutputs, ExogenousInputs, FixedPointOptions, Geometry, LhpModel, LhpState, LumpedParams, StateRates};
use crate::error::{LhpError, Result};
use crate::fluid_props::{self as fp, kelvin_to_celsius, AntoineParams};

/// Laminar-turbulent transition Reynolds number for pipe flow.
const RE_LAMINAR_LIMIT: f64 = 2300.0;

fn rho_l(t: f64) -> Result<f64> {
    fp::rho_l(kelvin_to_celsius(t))
}
fn rho_v(t: f64) -> Result<f64> {
    fp::rho_v(kelvin_to_celsius(t))
}
fn cp_l(t: f64) -> Result<f64> {
    fp::cp_l(kelvin_to_celsius(t))
}
fn dh_v(t: f64) -> Result<f64> {
    fp::dh_v(kelvin_to_celsius(t))
}
fn mu_l(t: f64) -> Result<f64> {
    fp::mu_l(kelvin_to_celsius(t))
}

fn cp_mean(t1: f64, t2: f64) -> Result<f64> {
    Ok(0.5 * (cp_l(t1)? + cp_l(t2)?))
}

/// Damped fixed-point iteration `x = g(x)`. The relaxation factor is halved
/// whenever the update grows.
fn fixed_point(
    quantity: &'static str,
    x0: f64,
    opts: &FixedPointOptions,
    mut g: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let mut x = x0;
    let mut omega = 1.0;
    let mut prev = f64::INFINITY;
    let mut step = f64::NAN;
    for _ in 0..opts.max_iter {
        let gx = g(x)?;
        step = gx - x;
        if !step.is_finite() {
            break;
        }
        if step.abs() <= opts.tol {
            return Ok(gx);
        }
        if step.abs() >= prev {
            omega *= 0.5;
        }
        prev = step.abs();
        x += omega * step;
    }
    Err(LhpError::FixedPointDivergence {
        quantity,
        iterations: opts.max_iter,
        last_step: step,
    })
}

/// Young–Laplace capillary pressure of the primary wick, Pa.
pub fn capillary_pressure(t_cc: f64, geom: &Geometry) -> Result<f64> {
    let sigma = fp::sigma(kelvin_to_celsius(t_cc))?;
    Ok(relations::capillary(sigma, geom.theta(), geom.r_p()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorState {
    pub p_cc: f64,
    pub dp_cap: f64,
    pub p_evap: f64,
    pub t_evap: f64,
}

pub fn evaporator_chain(t_cc: f64, model: &LhpModel) -> Result<EvaporatorState> {
    let p_cc = fp::antoine_pressure(t_cc, &model.fluid)?;
    let dp_cap = capillary_pressure(t_cc, &model.geometry)?;
    let p_evap = p_cc + dp_cap - model.params.dp_fri;
    let t_evap = fp::antoine_temperature(p_evap, &model.fluid)?;
    Ok(EvaporatorState {
        p_cc,
        dp_cap,
        p_evap,
        t_evap,
    })
}

pub fn wick_heat_leak(t_evap: f64, t_cc: f64, params: &LumpedParams) -> f64 {
    relations::heat_leak(t_evap, t_cc, params.r_wick)
}

pub fn vapor_mass_flow(q_evap: f64, q_wick: f64, t_evap: f64, t_cc: f64) -> Result<f64> {
    let cp = cp_mean(t_evap, t_cc)?;
    let dh = dh_v(t_evap)?;
    relations::vapor_flow(q_evap, q_wick, cp, t_evap, t_cc, dh).ok_or_else(|| {
        LhpError::ModelValidity(format!(
            "evaporator enthalpy rise is not positive (T_evap = {t_evap} K, T_cc = {t_cc} K)"
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondenserState {
    pub rho_2phi: f64,
    pub mdot_star: f64,
    pub t_cond: f64,
    pub t_cond_out: f64,
}

/// Previous converged values of the implicit temperatures, used as initial
/// guesses by the next evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub t_cond: Option<f64>,
    pub t_cond_out: Option<f64>,
    pub t_cc_in: Option<f64>,
}

fn condenser_impl(
    eta: f64,
    mdot_v: f64,
    mdot_l: f64,
    t_sink: f64,
    t_seed: f64,
    model: &LhpModel,
    warm: &mut WarmStart,
) -> Result<CondenserState> {
    let geom = &model.geometry;
    let p = &model.params;
    if !(eta > 0.0) {
        return Err(LhpError::Singularity(format!("two-phase length {eta} m makes T_cond singular")));
    }
    if !(mdot_l > 0.0) {
        return Err(LhpError::Singularity(format!("liquid mass flow {mdot_l} kg/s is not positive")));
    }

    let two_phase = |t: f64| -> Result<(f64, f64)> {
        let rl = rho_l(t)?;
        let rho2 = relations::two_phase_density(rl, rho_v(t)?, p.alpha_bar);
        if rl == rho2 {
            return Err(LhpError::Singularity("two-phase density equals liquid density".into()));
        }
        Ok((rho2, relations::interface_flow(mdot_v, mdot_l, rl, rho2)))
    };

    let t_cond = fixed_point("T_cond", warm.t_cond.unwrap_or(t_seed), &model.fixed_point, |t| {
        let (_, mstar) = two_phase(t)?;
        Ok(relations::condensation_temperature(t_sink, dh_v(t)?, mstar, p.k_2phi, geom.d_c(), eta))
    })?;
    let (rho_2phi, mdot_star) = two_phase(t_cond)?;

    let length = geom.l_cond() - eta;
    let t_cond_out = fixed_point("T_cond_out", warm.t_cond_out.unwrap_or(t_sink), &model.fixed_point, |t| {
        let cp = cp_mean(t_cond, t)?;
        Ok(relations::exchanger_outlet(t_sink, t_cond, geom.d_c(), p.k_sc, length, mdot_l, cp))
    })?;

    warm.t_cond = Some(t_cond);
    warm.t_cond_out = Some(t_cond_out);
    Ok(CondenserState {
        rho_2phi,
        mdot_star,
        t_cond,
        t_cond_out,
    })
}

/// Two-phase and subcooled condenser regions. The density iteration is
/// seeded from `t_cc`.
pub fn condenser_chain(
    eta: f64,
    mdot_v: f64,
    mdot_l: f64,
    t_sink: f64,
    t_cc: f64,
    model: &LhpModel,
) -> Result<CondenserState> {
    condenser_impl(eta, mdot_v, mdot_l, t_sink, t_cc, model, &mut WarmStart::default())
}

fn liquid_line_impl(t_cond_out: f64, mdot_l: f64, model: &LhpModel, warm: &mut WarmStart) -> Result<f64> {
    if !(mdot_l > 0.0) {
        return Err(LhpError::Singularity(format!("liquid mass flow {mdot_l} kg/s is not positive")));
    }
    let geom = &model.geometry;
    let t_amb = model.t_amb;
    let t_in = fixed_point("T_cc_in", warm.t_cc_in.unwrap_or(t_amb), &model.fixed_point, |t| {
        let cp = cp_mean(t, t_cond_out)?;
        Ok(relations::exchanger_outlet(t_amb, t_cond_out, geom.d_c(), model.params.k_ll, geom.l_ll(), mdot_l, cp))
    })?;
    warm.t_cc_in = Some(t_in);
    Ok(t_in)
}

/// Temperature at which the returning liquid enters the chamber.
pub fn liquid_line_outlet(t_cond_out: f64, mdot_l: f64, model: &LhpModel) -> Result<f64> {
    liquid_line_impl(t_cond_out, mdot_l, model, &mut WarmStart::default())
}

/// Chamber coefficients with properties at `t_cc`.
pub fn cc_coefficients(t_cc: f64, v_cc_l: f64, geom: &Geometry, fluid: &AntoineParams) -> Result<CcCoefficients> {
    if !(t_cc > 0.0) {
        return Err(LhpError::Domain(format!("absolute temperature must be positive, got {t_cc} K")));
    }
    let rl = rho_l(t_cc)?;
    let rv = rho_v(t_cc)?;
    if rl == rv {
        return Err(LhpError::Singularity("liquid and vapor densities coincide".into()));
    }
    Ok(relations::cc_coefficients(rl, rv, dh_v(t_cc)?, fluid.r_gas, t_cc, geom.v_cc(), v_cc_l))
}

/// One full right-hand-side evaluation with the chamber terms exposed for
/// the control law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub rates: StateRates,
    pub aux: AuxOutputs,
    pub coeffs: CcCoefficients,
    /// Denominator of dT_cc/dt, J/K.
    pub capacity: f64,
    /// Mean liquid heat capacity between T_cc_in and T_cc, J/(kg K).
    pub cp_in: f64,
    pub reynolds: f64,
}

/// Evaluation context holding the fixed-point warm start. Not shareable
/// across threads; create one per simulation.
#[derive(Debug, Clone)]
pub struct Evaluator<'m> {
    model: &'m LhpModel,
    warm: WarmStart,
    reynolds_warned: bool,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m LhpModel) -> Self {
        Self {
            model,
            warm: WarmStart::default(),
            reynolds_warned: false,
        }
    }

    pub fn model(&self) -> &'m LhpModel {
        self.model
    }

    pub fn warm_start(&self) -> WarmStart {
        self.warm
    }

    pub fn set_warm_start(&mut self, warm: WarmStart) {
        self.warm = warm;
    }

    pub fn reset(&mut self) {
        self.warm = WarmStart::default();
    }

    pub fn evaluate(&mut self, x: &LhpState, u: &ExogenousInputs) -> Result<Evaluation> {
        let m = self.model;
        let geom = &m.geometry;
        let p = &m.params;
        x.check_mode(geom)?;
        if !(x.mdot_l > 0.0) {
            return Err(LhpError::ModelValidity(format!("liquid mass flow {} kg/s is not positive", x.mdot_l)));
        }

        let evap = evaporator_chain(x.t_cc, m)?;
        let q_wick = wick_heat_leak(evap.t_evap, x.t_cc, p);
        let mdot_v = vapor_mass_flow(u.q_evap, q_wick, evap.t_evap, x.t_cc)?;

        let cond = condenser_impl(x.eta, mdot_v, x.mdot_l, u.t_sink, x.t_cc, m, &mut self.warm)?;
        let t_cc_in = liquid_line_impl(cond.t_cond_out, x.mdot_l, m, &mut self.warm)?;
        let p_cond = fp::antoine_pressure(cond.t_cond, &m.fluid)?;

        // Chamber
        let rl = rho_l(x.t_cc)?;
        let rv = rho_v(x.t_cc)?;
        let dh = dh_v(x.t_cc)?;
        let coeffs = cc_coefficients(x.t_cc, x.v_cc_l, geom, &m.fluid)?;
        let capacity = relations::cc_capacity(&coeffs, rl, rv, cp_l(x.t_cc)?, dh, geom.v_cc(), x.v_cc_l, m.fluid.r_gas, x.t_cc);
        if !(capacity > 0.0) {
            return Err(LhpError::ModelValidity(format!(
                "chamber heat capacity {capacity} J/K is not positive"
            )));
        }
        let cp_in = cp_mean(t_cc_in, x.t_cc)?;
        let heat = relations::cc_heat_input(&coeffs, x.mdot_l, mdot_v, cp_in, t_cc_in, x.t_cc, u.q_cc, q_wick);
        let dt_cc = heat / capacity;
        let dv = relations::cc_liquid_rate(&coeffs, x.mdot_l, mdot_v, rl, rv, dt_cc);

        // Condenser interface
        let deta = relations::interface_rate(
            p.k_2phi,
            geom.d_c(),
            cond.t_cond,
            u.t_sink,
            rho_v(cond.t_cond)?,
            p.alpha_bar,
            geom.a_c(),
            dh_v(cond.t_cond)?,
            x.eta,
            mdot_v,
        );

        // Liquid column
        let column = geom.l_cond() - x.eta + geom.l_ll();
        let mu = mu_l(0.5 * (cond.t_cond_out + t_cc_in))?;
        let dmdot = relations::momentum_rate(
            x.mdot_l,
            rho_l(cond.t_cond)?,
            rho_l(t_cc_in)?,
            geom.a_c(),
            p_cond,
            evap.p_cc,
            column,
            geom.d_c(),
            mu,
        );
        let re = relations::reynolds(x.mdot_l, geom.d_c(), mu);
        if re > RE_LAMINAR_LIMIT && !self.reynolds_warned {
            log::warn!("liquid Reynolds number {re:.0} exceeds {RE_LAMINAR_LIMIT}; laminar friction kept");
            self.reynolds_warned = true;
        }

        Ok(Evaluation {
            rates: StateRates {
                t_cc: dt_cc,
                eta: deta,
                v_cc_l: dv,
                mdot_l: dmdot,
            },
            aux: AuxOutputs {
                t_evap: evap.t_evap,
                t_cond: cond.t_cond,
                t_cond_out: cond.t_cond_out,
                t_cc_in,
                mdot_v,
                mdot_star: cond.mdot_star,
                p_cc: evap.p_cc,
                p_evap: evap.p_evap,
                p_cond,
                q_wick,
                dp_cap: evap.dp_cap,
                rho_2phi: cond.rho_2phi,
            },
            coeffs,
            capacity,
            cp_in,
            reynolds: re,
        })
    }

    pub fn derivatives(&mut self, x: &LhpState, u: &ExogenousInputs) -> Result<(StateRates, AuxOutputs)> {
        let e = self.evaluate(x, u)?;
        Ok((e.rates, e.aux))
    }
}

/// Four state derivatives and all intermediates, evaluated without a warm
/// start.
pub fn state_derivatives(x: &LhpState, u: &ExogenousInputs, model: &LhpModel) -> Result<(StateRates, AuxOutputs)> {
    Evaluator::new(model).derivatives(x, u)
}

/// State derivatives as a residual vector; zero exactly at an equilibrium.
pub fn steady_state_residual(x: &LhpState, u: &ExogenousInputs, model: &LhpModel) -> Result<[f64; 4]> {
    Ok(state_derivatives(x, u, model)?.0.to_array())
}

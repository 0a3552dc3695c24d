//! Four-state nonlinear loop heat pipe model.
//!
//! States are the compensation-chamber (CC) saturation temperature, the
//! length of the condenser two-phase region, the CC liquid volume and the
//! liquid mass flow. Inputs are the evaporator heat load, the sink
//! temperature and the CC control-heater power.
//!
//! All temperatures crossing this module's interface are in Kelvin.

mod chain;
pub mod relations;

pub use chain::{
    capillary_pressure, cc_coefficients, condenser_chain, evaporator_chain, liquid_line_outlet, state_derivatives,
    steady_state_residual, vapor_mass_flow, wick_heat_leak, CondenserState, Evaluator, EvaporatorState, WarmStart,
};
pub use relations::CcCoefficients;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{LhpError, ModeBoundary, Result};
use crate::fluid_props::{celsius_to_kelvin, AntoineParams};

/// Ambient temperature around the liquid line, K.
pub const T_AMB_DEFAULT: f64 = 298.15;

/// Mean void fraction of the condensing region.
pub const ALPHA_BAR_DEFAULT: f64 = 0.82;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhpState {
    /// CC saturation temperature, K.
    pub t_cc: f64,
    /// Two-phase length in the condenser, m.
    pub eta: f64,
    /// CC liquid volume, m³.
    pub v_cc_l: f64,
    /// Liquid mass flow, kg/s.
    pub mdot_l: f64,
}

impl LhpState {
    pub fn to_array(self) -> [f64; 4] {
        [self.t_cc, self.eta, self.v_cc_l, self.mdot_l]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            t_cc: a[0],
            eta: a[1],
            v_cc_l: a[2],
            mdot_l: a[3],
        }
    }

    /// Reference operating point state.
    pub fn reference_operating_point() -> Self {
        Self {
            t_cc: celsius_to_kelvin(26.86),
            eta: 0.3268,
            v_cc_l: 6.276e-6,
            mdot_l: 50.85e-6,
        }
    }

    /// Checks the variable-conductance validity region.
    pub fn check_mode(&self, geom: &Geometry) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(LhpError::ModeBoundary(ModeBoundary::CondenserEmpty));
        }
        if !(self.eta < geom.l_cond()) {
            return Err(LhpError::ModeBoundary(ModeBoundary::CondenserFull));
        }
        if !(self.v_cc_l > 0.0) {
            return Err(LhpError::ModeBoundary(ModeBoundary::ChamberDry));
        }
        if !(self.v_cc_l < geom.v_cc()) {
            return Err(LhpError::ModeBoundary(ModeBoundary::ChamberFlooded));
        }
        Ok(())
    }
}

/// Time derivatives of the four states, in the same order and units per
/// second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateRates {
    pub t_cc: f64,
    pub eta: f64,
    pub v_cc_l: f64,
    pub mdot_l: f64,
}

impl StateRates {
    pub fn to_array(self) -> [f64; 4] {
        [self.t_cc, self.eta, self.v_cc_l, self.mdot_l]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExogenousInputs {
    /// Evaporator heat load, W.
    pub q_evap: f64,
    /// Sink temperature, K.
    pub t_sink: f64,
    /// Control-heater power, W.
    pub q_cc: f64,
}

impl ExogenousInputs {
    pub fn reference_operating_point() -> Self {
        Self {
            q_evap: 60.0,
            t_sink: celsius_to_kelvin(0.0),
            q_cc: 4.653,
        }
    }

    /// Describes every violation of the nominal operating range. The model
    /// is still evaluated outside it.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(20.0..=100.0).contains(&self.q_evap) {
            out.push(format!("Q_evap = {} W outside [20, 100] W", self.q_evap));
        }
        let sink_c = self.t_sink - crate::fluid_props::KELVIN_OFFSET;
        if !(-15.0..=15.0).contains(&sink_c) {
            out.push(format!("T_sink = {sink_c} °C outside [-15, 15] °C"));
        }
        if !(0.0..=10.0).contains(&self.q_cc) {
            out.push(format!("Q_cc = {} W outside [0, 10] W", self.q_cc));
        }
        out
    }
}

/// Loop geometry. The cross-section is derived from the diameter on
/// construction; the condenser and the transport lines share it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    v_cc: f64,
    l_cond: f64,
    l_ll: f64,
    d_c: f64,
    a_c: f64,
    r_p: f64,
    theta: f64,
}

impl Geometry {
    pub fn new(v_cc: f64, l_cond: f64, l_ll: f64, d_c: f64, r_p: f64, theta: f64) -> Result<Self> {
        for (name, v) in [("V_cc", v_cc), ("L_cond", l_cond), ("L_ll", l_ll), ("D_c", d_c), ("R_p", r_p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LhpError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !theta.is_finite() {
            return Err(LhpError::InvalidParameter("contact angle must be finite".into()));
        }
        Ok(Self {
            v_cc,
            l_cond,
            l_ll,
            d_c,
            a_c: PI * d_c * d_c / 4.0,
            r_p,
            theta,
        })
    }

    /// Geometry reconstructed from the reference lumped parameters at the
    /// reference operating point (not measured): D_c from the two-phase
    /// coefficient, L_cond from the subcooled coefficient, L_ll from the
    /// liquid-line coefficient. V_cc is illustrative, giving a liquid fill
    /// fraction of about one half at the reference point.
    pub fn reconstructed() -> Self {
        Self::new(12.5e-6, 1.850, 0.889, 2.0e-3, 1.0e-6, 0.0).expect("valid constants")
    }

    pub fn v_cc(&self) -> f64 {
        self.v_cc
    }
    pub fn l_cond(&self) -> f64 {
        self.l_cond
    }
    pub fn l_ll(&self) -> f64 {
        self.l_ll
    }
    pub fn d_c(&self) -> f64 {
        self.d_c
    }
    pub fn a_c(&self) -> f64 {
        self.a_c
    }
    pub fn r_p(&self) -> f64 {
        self.r_p
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn with_v_cc(self, v_cc: f64) -> Result<Self> {
        Self::new(v_cc, self.l_cond, self.l_ll, self.d_c, self.r_p, self.theta)
    }
    pub fn with_r_p(self, r_p: f64) -> Result<Self> {
        Self::new(self.v_cc, self.l_cond, self.l_ll, self.d_c, r_p, self.theta)
    }
    pub fn with_theta(self, theta: f64) -> Result<Self> {
        Self::new(self.v_cc, self.l_cond, self.l_ll, self.d_c, self.r_p, theta)
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::reconstructed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpedParams {
    /// Wick thermal resistance, K/W.
    pub r_wick: f64,
    /// Two-phase heat transfer coefficient, W/(m² K).
    pub k_2phi: f64,
    /// Subcooled-region heat transfer coefficient, W/(m² K).
    pub k_sc: f64,
    /// Liquid-line heat transfer coefficient to ambient, W/(m² K).
    pub k_ll: f64,
    /// Friction pressure loss in the primary wick, Pa.
    pub dp_fri: f64,
    /// Mean void fraction of the two-phase region.
    pub alpha_bar: f64,
}

impl LumpedParams {
    /// Values reported for the reference operating point.
    pub fn reference() -> Self {
        Self {
            r_wick: 0.07720,
            k_2phi: 1064.0,
            k_sc: 312.8,
            k_ll: 4.804,
            dp_fri: 36.71e3,
            alpha_bar: ALPHA_BAR_DEFAULT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("R_wick", self.r_wick),
            ("k_2phi", self.k_2phi),
            ("k_sc", self.k_sc),
            ("k_ll", self.k_ll),
            ("dp_fri", self.dp_fri),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LhpError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha_bar > 0.0 && self.alpha_bar < 1.0) {
            return Err(LhpError::InvalidParameter(format!(
                "mean void fraction must lie in (0, 1), got {}",
                self.alpha_bar
            )));
        }
        Ok(())
    }
}

/// Algebraic intermediates of one right-hand-side evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxOutputs {
    pub t_evap: f64,
    pub t_cond: f64,
    pub t_cond_out: f64,
    pub t_cc_in: f64,
    pub mdot_v: f64,
    pub mdot_star: f64,
    pub p_cc: f64,
    pub p_evap: f64,
    pub p_cond: f64,
    pub q_wick: f64,
    pub dp_cap: f64,
    pub rho_2phi: f64,
}

/// Convergence settings for the implicit mean-heat-capacity and
/// condensation-temperature loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    /// Absolute temperature tolerance, K.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

/// Everything needed to evaluate the model besides state and inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LhpModel {
    pub geometry: Geometry,
    pub params: LumpedParams,
    pub fluid: AntoineParams,
    /// Ambient temperature around the liquid line, K.
    pub t_amb: f64,
    pub fixed_point: FixedPointOptions,
}

impl LhpModel {
    pub fn new(geometry: Geometry, params: LumpedParams) -> Self {
        Self {
            geometry,
            params,
            fluid: AntoineParams::default(),
            t_amb: T_AMB_DEFAULT,
            fixed_point: FixedPointOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.fluid.validate()
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator::new(self)
    }
}

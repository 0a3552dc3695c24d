//! Closed-form balance relations with every property passed explicitly.
//!
//! These are the algebraic building blocks of the state-space model. They
//! take no correlations and do no unit conversion, so they can be checked
//! for dimensional homogeneity by rescaling their SI inputs.

use std::f64::consts::PI;

/// Young–Laplace capillary pressure for a tube of radius `r_p`.
#[inline]
pub fn capillary(sigma: f64, theta: f64, r_p: f64) -> f64 {
    2.0 * sigma * theta.cos() / r_p
}

/// Conductive leak from evaporator to compensation chamber through the wicks.
#[inline]
pub fn heat_leak(t_evap: f64, t_cc: f64, r_wick: f64) -> f64 {
    (t_evap - t_cc) / r_wick
}

/// Evaporator steady energy balance; returns `None` when the enthalpy rise
/// per unit mass is not positive.
#[inline]
pub fn vapor_flow(q_evap: f64, q_wick: f64, cp_mean: f64, t_evap: f64, t_cc: f64, dh_v: f64) -> Option<f64> {
    let per_kg = cp_mean * (t_evap - t_cc) + dh_v;
    (per_kg > 0.0).then(|| (q_evap - q_wick) / per_kg)
}

/// Homogeneous two-phase density for a fixed mean void fraction.
#[inline]
pub fn two_phase_density(rho_l: f64, rho_v: f64, alpha_bar: f64) -> f64 {
    rho_l * (1.0 - alpha_bar) + rho_v * alpha_bar
}

/// Mass flow across the moving condensation front.
#[inline]
pub fn interface_flow(mdot_v: f64, mdot_l: f64, rho_l: f64, rho_2phi: f64) -> f64 {
    mdot_v - (mdot_v - mdot_l) / (1.0 - rho_l / rho_2phi)
}

/// Saturation temperature of the two-phase region from its steady energy
/// balance.
#[inline]
pub fn condensation_temperature(t_sink: f64, dh_v: f64, mdot_star: f64, k_2phi: f64, d_c: f64, eta: f64) -> f64 {
    t_sink + dh_v * mdot_star / (k_2phi * PI * d_c * eta)
}

/// Outlet temperature of a single-phase tube at constant wall temperature.
#[inline]
pub fn exchanger_outlet(t_wall: f64, t_in: f64, d_c: f64, k: f64, length: f64, mdot: f64, cp: f64) -> f64 {
    t_wall + (t_in - t_wall) * (-PI * d_c * k * length / (mdot * cp)).exp()
}

/// The four compensation-chamber coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcCoefficients {
    /// J/kg
    pub a: f64,
    /// kg K/m³
    pub b: f64,
    /// kg/(m³ K)
    pub c: f64,
    /// Vapor volume in the chamber, m³.
    pub d: f64,
}

#[inline]
pub fn cc_coefficients(rho_l: f64, rho_v: f64, dh_v: f64, r_gas: f64, t_cc: f64, v_cc: f64, v_cc_l: f64) -> CcCoefficients {
    let a = rho_v * dh_v / (rho_l - rho_v);
    let b = rho_l / r_gas * a;
    let c = b / (t_cc * t_cc) - rho_v / t_cc;
    CcCoefficients { a, b, c, d: v_cc - v_cc_l }
}

/// Effective heat capacity of the chamber, J/K (denominator of dT_cc/dt).
#[inline]
pub fn cc_capacity(k: &CcCoefficients, rho_l: f64, rho_v: f64, cp_cc: f64, dh_v: f64, v_cc: f64, v_cc_l: f64, r_gas: f64, t_cc: f64) -> f64 {
    (rho_l * v_cc_l + k.d * rho_v) * cp_cc + k.c * k.d * dh_v - v_cc * r_gas / t_cc * k.b + k.a * k.c * k.d
}

/// Net heat input to the chamber, W (numerator of dT_cc/dt).
#[inline]
pub fn cc_heat_input(k: &CcCoefficients, mdot_l: f64, mdot_v: f64, cp_in: f64, t_cc_in: f64, t_cc: f64, q_cc: f64, q_wick: f64) -> f64 {
    mdot_l * cp_in * (t_cc_in - t_cc) + q_cc + q_wick + k.a * (mdot_l - mdot_v)
}

/// Liquid volume rate from the chamber mass balance given dT_cc/dt.
#[inline]
pub fn cc_liquid_rate(k: &CcCoefficients, mdot_l: f64, mdot_v: f64, rho_l: f64, rho_v: f64, dt_cc: f64) -> f64 {
    (mdot_l - mdot_v - k.c * k.d * dt_cc) / (rho_l - rho_v)
}

/// Moving-boundary rate of the two-phase length.
#[inline]
pub fn interface_rate(k_2phi: f64, d_c: f64, t_cond: f64, t_sink: f64, rho_v: f64, alpha_bar: f64, a_c: f64, dh_v: f64, eta: f64, mdot_v: f64) -> f64 {
    let hold = rho_v * alpha_bar * a_c;
    -k_2phi * PI * d_c * (t_cond - t_sink) / (hold * dh_v) * eta + mdot_v / hold
}

/// Momentum balance of the liquid column (condenser subcooled part plus
/// liquid line) with laminar friction.
#[inline]
pub fn momentum_rate(
    mdot_l: f64,
    rho_cond_l: f64,
    rho_in_l: f64,
    a_c: f64,
    p_cond: f64,
    p_cc: f64,
    column: f64,
    d_c: f64,
    mu_l: f64,
) -> f64 {
    let m2 = mdot_l * mdot_l;
    let friction = 128.0 / PI * column / d_c.powi(4) * mu_l * a_c * mdot_l / rho_in_l;
    (m2 / (rho_cond_l * a_c) - m2 / (rho_in_l * a_c) + (p_cond - p_cc) * a_c - friction) / column
}

/// Heater power that makes the chamber temperature obey
/// `dT_cc/dt = lambda * error`.
#[inline]
pub fn linearizing_heat(lambda: f64, error: f64, capacity: f64, a: f64, mdot_l: f64, mdot_v: f64, cp_in: f64, t_cc_in: f64, t_cc: f64, q_wick: f64) -> f64 {
    lambda * error * capacity - a * (mdot_l - mdot_v) - cp_in * mdot_l * (t_cc_in - t_cc) - q_wick
}

/// Pipe Reynolds number from mass flow.
#[inline]
pub fn reynolds(mdot: f64, d_c: f64, mu: f64) -> f64 {
    4.0 * mdot / (PI * d_c * mu)
}

//! Saturated ammonia properties.
//!
//! The property polynomials take the temperature in degrees Celsius. The
//! Antoine relations take Kelvin and return pascal; everything outside this
//! module works in Kelvin and converts only at this boundary.
//!
//! Two quadratic coefficients differ from the commonly reproduced printed
//! form of these fits: the liquid heat capacity uses `0.03 T²` and the vapor
//! density `+0.0017 T²`. Both match the tabulated reference data the fits
//! were made against; the alternative signs/magnitudes double c_p at 40 °C
//! and halve ρ_v.

use serde::{Deserialize, Serialize};

use crate::error::{LhpError, Result};

pub const KELVIN_OFFSET: f64 = 273.15;

/// Validity range of the polynomial fits, °C.
pub const POLY_RANGE_CELSIUS: (f64, f64) = (-40.0, 80.0);

const CRITICAL_TEMPERATURE_K: f64 = 405.50;

/// Molar gas constant, J/(mol K).
pub const MOLAR_GAS_CONSTANT: f64 = 8.314462;
/// Molar mass of ammonia, kg/mol.
pub const AMMONIA_MOLAR_MASS: f64 = 0.017031;

#[inline]
pub fn celsius_to_kelvin(t: f64) -> f64 {
    t + KELVIN_OFFSET
}

#[inline]
pub fn kelvin_to_celsius(t: f64) -> f64 {
    t - KELVIN_OFFSET
}

/// Saturated property bundle at one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatProps {
    /// Liquid density, kg/m³.
    pub rho_l: f64,
    /// Vapor density, kg/m³.
    pub rho_v: f64,
    /// Liquid specific heat, J/(kg K).
    pub cp_l: f64,
    /// Vapor specific heat, J/(kg K). Tabulated only; the model equations
    /// never use it.
    pub cp_v: f64,
    /// Specific heat of evaporation, J/kg.
    pub dh_v: f64,
    /// Liquid dynamic viscosity, Pa s.
    pub mu_l: f64,
    /// Surface tension, N/m.
    pub sigma: f64,
}

/// Antoine constants (`log10 p = A - B / (C + T)`, T in K, p in Pa) and the
/// specific gas constant used by the ideal-gas vapor relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntoineParams {
    pub a_wf: f64,
    pub b_wf: f64,
    pub c_wf: f64,
    /// Specific gas constant, J/(kg K).
    pub r_gas: f64,
}

impl Default for AntoineParams {
    fn default() -> Self {
        Self {
            a_wf: 9.394997,
            b_wf: 879.9236,
            c_wf: -38.15,
            r_gas: MOLAR_GAS_CONSTANT / AMMONIA_MOLAR_MASS,
        }
    }
}

impl AntoineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_wf > 0.0) {
            return Err(LhpError::InvalidParameter(format!(
                "Antoine B must be positive, got {}",
                self.b_wf
            )));
        }
        if !(self.r_gas > 0.0) {
            return Err(LhpError::InvalidParameter(format!(
                "gas constant must be positive, got {}",
                self.r_gas
            )));
        }
        Ok(())
    }
}

fn check_range(correlation: &'static str, t: f64, (min, max): (f64, f64)) -> Result<()> {
    if t.is_finite() && t >= min && t <= max {
        Ok(())
    } else {
        Err(LhpError::PropertyOutOfRange {
            correlation,
            t_celsius: t,
            min,
            max,
        })
    }
}

/// Saturated liquid density, kg/m³.
pub fn rho_l(t: f64) -> Result<f64> {
    check_range("rho_l", t, POLY_RANGE_CELSIUS)?;
    Ok(((-4e-5 * t - 0.0027) * t - 1.3522) * t + 638.57)
}

/// Saturated vapor density, kg/m³.
pub fn rho_v(t: f64) -> Result<f64> {
    check_range("rho_v", t, POLY_RANGE_CELSIUS)?;
    Ok(((1e-5 * t + 0.0017) * t + 0.1229) * t + 3.4553)
}

/// Saturated liquid specific heat, J/(kg K).
pub fn cp_l(t: f64) -> Result<f64> {
    check_range("cp_l", t, POLY_RANGE_CELSIUS)?;
    Ok(((5e-4 * t + 0.03) * t + 5.6) * t + 4616.5)
}

/// Saturated vapor specific heat, J/(kg K).
pub fn cp_v(t: f64) -> Result<f64> {
    check_range("cp_v", t, POLY_RANGE_CELSIUS)?;
    Ok((0.1 * t + 15.1) * t + 2680.8)
}

/// Specific heat of evaporation, J/kg.
pub fn dh_v(t: f64) -> Result<f64> {
    check_range("dh_v", t, POLY_RANGE_CELSIUS)?;
    Ok(((-3e-2 * t - 11.5) * t - 3572.3) * t + 1_262_300.0)
}

/// Saturated liquid dynamic viscosity, Pa s.
pub fn mu_l(t: f64) -> Result<f64> {
    check_range("mu_l", t, POLY_RANGE_CELSIUS)?;
    let micro = ((((-2e-8 * t + 1e-6) * t - 1e-4) * t + 0.0151) * t - 1.8665) * t + 170.1;
    Ok(micro * 1e-6)
}

/// Surface tension of the saturated liquid (Kleiber), N/m.
pub fn sigma(t: f64) -> Result<f64> {
    check_range("sigma", t, POLY_RANGE_CELSIUS)?;
    let reduced = 1.0 - celsius_to_kelvin(t) / CRITICAL_TEMPERATURE_K;
    Ok(0.10175 * reduced.powf(1.21703))
}

/// Evaluates every correlation at `t_celsius`.
pub fn sat_props(t_celsius: f64) -> Result<SatProps> {
    Ok(SatProps {
        rho_l: rho_l(t_celsius)?,
        rho_v: rho_v(t_celsius)?,
        cp_l: cp_l(t_celsius)?,
        cp_v: cp_v(t_celsius)?,
        dh_v: dh_v(t_celsius)?,
        mu_l: mu_l(t_celsius)?,
        sigma: sigma(t_celsius)?,
    })
}

/// Saturation pressure in Pa at `t_kelvin`.
pub fn antoine_pressure(t_kelvin: f64, params: &AntoineParams) -> Result<f64> {
    let denom = params.c_wf + t_kelvin;
    if !(denom > 0.0) {
        return Err(LhpError::Singularity(format!(
            "Antoine denominator C + T = {denom} K is not positive"
        )));
    }
    Ok(10f64.powf(params.a_wf - params.b_wf / denom))
}

/// Saturation temperature in K at pressure `p` (Pa).
pub fn antoine_temperature(p: f64, params: &AntoineParams) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(LhpError::Domain(format!(
            "saturation pressure must be positive and finite, got {p} Pa"
        )));
    }
    let denom = p.log10() - params.a_wf;
    if denom == 0.0 {
        return Err(LhpError::Singularity(
            "log10(p) equals Antoine A; saturation temperature is unbounded".into(),
        ));
    }
    Ok(-params.b_wf / denom - params.c_wf)
}

/// Temperature derivative of the saturated vapor density, kg/(m³ K), from the
/// ideal gas law combined with Clausius–Clapeyron.
pub fn drho_v_dt(t_kelvin: f64, props: &SatProps, r_gas: f64) -> Result<f64> {
    if !(t_kelvin > 0.0) {
        return Err(LhpError::Domain(format!(
            "absolute temperature must be positive, got {t_kelvin} K"
        )));
    }
    let drho = props.rho_l - props.rho_v;
    if drho == 0.0 {
        return Err(LhpError::Singularity(
            "liquid and vapor densities coincide".into(),
        ));
    }
    Ok(props.dh_v * props.rho_l * props.rho_v / (r_gas * t_kelvin * t_kelvin * drho)
        - props.rho_v / t_kelvin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn constant_terms_at_zero_celsius() {
        let p = sat_props(0.0).unwrap();
        assert_eq!(p.rho_l, 638.57);
        assert_eq!(p.rho_v, 3.4553);
        assert_eq!(p.cp_l, 4616.5);
        assert_eq!(p.cp_v, 2680.8);
        assert_eq!(p.dh_v, 1_262_300.0);
        assert!(rel(p.mu_l, 170.1e-6) < 1e-15);
    }

    #[test]
    fn surface_tension_at_27c() {
        // mpmath, 50 digits: 0.10175 * (1 - 300.15/405.50)^1.21703
        let expected = 0.019_730_505_743_079_3;
        assert!(rel(sigma(27.0).unwrap(), expected) < 1e-13);
    }

    #[test]
    fn out_of_range_names_the_correlation() {
        match sat_props(95.0) {
            Err(LhpError::PropertyOutOfRange { correlation, .. }) => assert_eq!(correlation, "rho_l"),
            other => panic!("expected range error, got {other:?}"),
        }
        match cp_l(-41.0) {
            Err(LhpError::PropertyOutOfRange { correlation, .. }) => assert_eq!(correlation, "cp_l"),
            other => panic!("expected range error, got {other:?}"),
        }
        assert!(sigma(f64::NAN).is_err());
    }

    #[test]
    fn density_ordering_and_positivity_over_model_range() {
        let mut t = -20.0;
        while t <= 60.0 {
            let p = sat_props(t).unwrap();
            assert!(p.rho_l > p.rho_v && p.rho_v > 0.0, "t = {t}");
            assert!(p.dh_v > 0.0 && p.sigma > 0.0 && p.mu_l > 0.0 && p.cp_l > 0.0);
            t += 0.5;
        }
    }

    #[test]
    fn antoine_pressure_at_27c() {
        // mpmath: 10^(9.394997 - 879.9236/(300.15 - 38.15))
        let p = antoine_pressure(300.15, &AntoineParams::default()).unwrap();
        assert!(rel(p, 1_087_702.125_255_396) < 1e-12, "{p}");
        // ammonia saturation pressure near 300 K is about 1.06-1.07 MPa
        assert!(p > 1.0e6 && p < 1.15e6);
    }

    #[test]
    fn antoine_asymptote_and_singularity() {
        let a = AntoineParams::default();
        let p = antoine_pressure(1e15, &a).unwrap();
        assert!(rel(p, 10f64.powf(a.a_wf)) < 1e-9);
        assert!(matches!(antoine_pressure(38.15, &a), Err(LhpError::Singularity(_))));
        assert!(matches!(antoine_pressure(10.0, &a), Err(LhpError::Singularity(_))));
        assert!(matches!(
            antoine_temperature(10f64.powf(a.a_wf), &a),
            Err(LhpError::Singularity(_))
        ));
    }

    #[test]
    fn antoine_temperature_domain() {
        let a = AntoineParams::default();
        assert!(matches!(antoine_temperature(0.0, &a), Err(LhpError::Domain(_))));
        assert!(matches!(antoine_temperature(-5.0, &a), Err(LhpError::Domain(_))));
    }

    #[test]
    fn antoine_temperature_matches_bisection() {
        let a = AntoineParams::default();
        let (mut lo, mut hi) = (250.0_f64, 350.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if antoine_pressure(mid, &a).unwrap() < 1.0e6 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = antoine_temperature(1.0e6, &a).unwrap();
        assert!((t - 0.5 * (lo + hi)).abs() < 1e-9);
    }

    #[test]
    fn antoine_round_trip() {
        let a = AntoineParams::default();
        let t = antoine_temperature(antoine_pressure(300.15, &a).unwrap(), &a).unwrap();
        assert!((t - 300.15).abs() < 1e-10);
        let mut p = 0.05e6;
        while p <= 3.0e6 {
            let back = antoine_pressure(antoine_temperature(p, &a).unwrap(), &a).unwrap();
            assert!(rel(back, p) < 1e-10);
            p += 0.01e6;
        }
    }

    #[test]
    fn antoine_pressure_is_monotone() {
        let a = AntoineParams::default();
        let mut prev = 0.0;
        let mut t = celsius_to_kelvin(-40.0);
        while t <= celsius_to_kelvin(80.0) {
            let p = antoine_pressure(t, &a).unwrap();
            assert!(p > prev);
            prev = p;
            t += 0.1;
        }
    }

    #[test]
    fn clausius_clapeyron_consistency() {
        let a = AntoineParams::default();
        for tc in (0..=40).map(f64::from) {
            let t = celsius_to_kelvin(tc);
            let h = 1e-3;
            let slope = (antoine_pressure(t + h, &a).unwrap() - antoine_pressure(t - h, &a).unwrap())
                / (2.0 * h);
            let p = sat_props(tc).unwrap();
            let cc = p.dh_v / (t * (1.0 / p.rho_v - 1.0 / p.rho_l));
            assert!(rel(cc, slope) < 0.10, "{tc} °C: {cc} vs {slope}");
        }
    }

    #[test]
    fn drho_v_limits() {
        let mut p = sat_props(27.0).unwrap();
        let t = 300.15;
        p.dh_v = 0.0;
        assert_eq!(drho_v_dt(t, &p, 488.2).unwrap(), -p.rho_v / t);
        let mut q = sat_props(27.0).unwrap();
        q.rho_v = q.rho_l;
        assert!(matches!(drho_v_dt(t, &q, 488.2), Err(LhpError::Singularity(_))));
        // rho_v << rho_l: the bracket reduces to rho_v (dh/(R T^2) - 1/T)
        let mut s = sat_props(27.0).unwrap();
        s.rho_v = 1e-6;
        let lim = s.rho_v * (s.dh_v / (488.2 * t * t) - 1.0 / t);
        assert!(rel(drho_v_dt(t, &s, 488.2).unwrap(), lim) < 1e-8);
    }

    #[test]
    fn drho_v_matches_ideal_gas_finite_difference() {
        let a = AntoineParams::default();
        let t = 300.15;
        let h = 1e-3;
        let ideal = |t: f64| antoine_pressure(t, &a).unwrap() / (a.r_gas * t);
        let fd = (ideal(t + h) - ideal(t - h)) / (2.0 * h);

        // Inputs consistent with the ideal-gas/Clausius-Clapeyron derivation:
        // the formula must reproduce the finite difference to FD accuracy.
        let mut consistent = sat_props(27.0).unwrap();
        consistent.rho_v = ideal(t);
        let slope = (antoine_pressure(t + h, &a).unwrap() - antoine_pressure(t - h, &a).unwrap())
            / (2.0 * h);
        consistent.dh_v = slope * t * (1.0 / consistent.rho_v - 1.0 / consistent.rho_l);
        assert!(rel(drho_v_dt(t, &consistent, a.r_gas).unwrap(), fd) < 1e-6);

        // With the fitted property bundle the two routes differ by the fit
        // mismatch between the density polynomial and the Antoine curve
        // (measured 1.45 % at 27 °C).
        let fitted = drho_v_dt(t, &sat_props(27.0).unwrap(), a.r_gas).unwrap();
        assert!(rel(fitted, fd) < 0.02, "{fitted} vs {fd}");
    }

    #[test]
    fn evaluation_is_bitwise_deterministic() {
        let a = sat_props(13.37).unwrap();
        let b = sat_props(13.37).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

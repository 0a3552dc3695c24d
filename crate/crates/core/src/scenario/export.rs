//! CSV writers. Floats use 17 significant digits so files round-trip
//! exactly.

use std::io::Write;

use crate::controller::ControlRecord;
use crate::error::{LhpError, Result};
use crate::fluid_props::{self as fp, celsius_to_kelvin, kelvin_to_celsius, AntoineParams};
use crate::ode::Record;

/// Version tag of the trajectory CSV column layout.
pub const TRAJECTORY_SCHEMA: &str = "lhp-trajectory/1";

pub const TRAJECTORY_COLUMNS: [&str; 24] = [
    "t",
    "T_cc",
    "eta",
    "V_cc_l",
    "mdot_l",
    "T_evap",
    "T_cond",
    "T_cond_out",
    "T_cc_in",
    "mdot_v",
    "mdot_star",
    "p_cc",
    "p_evap",
    "p_cond",
    "Q_wick",
    "Q_cc_applied",
    "Q_evap",
    "T_sink",
    "T_cc_degC",
    "T_evap_degC",
    "T_cond_degC",
    "T_cond_out_degC",
    "T_cc_in_degC",
    "T_sink_degC",
];

pub const CONTROL_COLUMNS: [&str; 5] = ["t", "e", "Q_cc_unsat", "Q_cc_applied", "saturated"];

pub const PROPS_COLUMNS: [&str; 10] = [
    "T_degC", "T", "p_sat", "rho_l", "rho_v", "cp_l", "cp_v", "dh_v", "mu_l", "sigma",
];

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> LhpError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => LhpError::Io {
            path: "<csv>".into(),
            source,
        },
        other => LhpError::Io {
            path: "<csv>".into(),
            source: std::io::Error::other(format!("{other:?}")),
        },
    }
}

fn write_rows<W: Write, I>(out: W, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| LhpError::Io {
        path: "<csv>".into(),
        source,
    })
}

pub fn trajectory_row(r: &Record) -> Vec<String> {
    let (s, a, u) = (&r.state, &r.aux, &r.inputs);
    [
        r.t, s.t_cc, s.eta, s.v_cc_l, s.mdot_l, a.t_evap, a.t_cond, a.t_cond_out, a.t_cc_in, a.mdot_v, a.mdot_star, a.p_cc,
        a.p_evap, a.p_cond, a.q_wick, u.q_cc, u.q_evap, u.t_sink,
    ]
    .into_iter()
    .chain([s.t_cc, a.t_evap, a.t_cond, a.t_cond_out, a.t_cc_in, u.t_sink].map(kelvin_to_celsius))
    .map(fmt)
    .collect()
}

pub fn write_trajectory<W: Write>(out: W, records: &[Record]) -> Result<()> {
    write_rows(out, &TRAJECTORY_COLUMNS, records.iter().map(trajectory_row))
}

pub fn write_control<W: Write>(out: W, control: &[ControlRecord]) -> Result<()> {
    write_rows(
        out,
        &CONTROL_COLUMNS,
        control.iter().map(|c| {
            vec![
                fmt(c.t),
                fmt(c.e),
                fmt(c.q_cc_unsat),
                fmt(c.q_cc_applied),
                u8::from(c.saturated).to_string(),
            ]
        }),
    )
}

/// Tabulates every saturation correlation from `from_c` to `to_c` in steps
/// of `step_c` (all °C). The temperature grid is `from_c + i * step_c`.
pub fn props_table<W: Write>(out: W, from_c: f64, to_c: f64, step_c: f64, antoine: &AntoineParams) -> Result<()> {
    if !(step_c > 0.0) || !(to_c >= from_c) {
        return Err(LhpError::InvalidParameter(format!(
            "need from <= to and a positive step, got {from_c}..{to_c} by {step_c}"
        )));
    }
    let n = ((to_c - from_c) / step_c + 1e-9).floor() as usize;
    let rows = (0..=n)
        .map(|i| {
            let c = from_c + i as f64 * step_c;
            let p = fp::sat_props(c)?;
            let psat = fp::antoine_pressure(celsius_to_kelvin(c), antoine)?;
            Ok([c, celsius_to_kelvin(c), psat, p.rho_l, p.rho_v, p.cp_l, p.cp_v, p.dh_v, p.mu_l, p.sigma]
                .map(fmt)
                .to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(out, &PROPS_COLUMNS, rows)
}

//! Explicit time integration of the loop model and equilibrium search.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LhpError, ModeBoundary, Result};
use crate::model::{AuxOutputs, Evaluator, ExogenousInputs, LhpModel, LhpState};
use crate::solver::{fd_jacobian, max_norm, newton, NewtonOptions};

/// Per-state scale used for finite-difference steps near zero.
const STATE_SCALE: [f64; 4] = [300.0, 0.1, 1e-6, 1e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta, fixed step. A step that would
    /// leave the real-axis stability interval is split into substeps.
    #[default]
    Rk4,
    /// Dormand–Prince 5(4), adaptive step.
    Dopri45,
    /// Second-order Runge–Kutta–Chebyshev, fixed step with the stage count
    /// chosen from the Jacobian spectral radius.
    Rkc,
}

impl std::str::FromStr for Method {
    type Err = LhpError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Method::Rk4),
            "dopri45" | "rk45" => Ok(Method::Dopri45),
            "rkc" => Ok(Method::Rkc),
            other => Err(LhpError::config("method", format!("unknown integration method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrateOptions {
    pub method: Method,
    /// Fixed step (rk4, rkc) or maximum step (dopri45), s.
    pub step_s: f64,
    pub sample_interval_s: f64,
    /// Absolute tolerances for T_cc, eta, V_cc_l, mdot_l (dopri45).
    pub atol: [f64; 4],
    pub rtol: f64,
    /// Width of the bracket that locates a mode-boundary crossing, s.
    pub event_tol_s: f64,
    /// Steps between spectral-radius refreshes (rk4, rkc).
    pub rho_refresh: usize,
    pub max_steps: u64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            step_s: 0.1,
            sample_interval_s: 1.0,
            atol: [1e-6, 1e-7, 1e-12, 1e-9],
            rtol: 0.0,
            event_tol_s: 1e-3,
            rho_refresh: 25,
            max_steps: u64::MAX,
        }
    }
}

impl IntegrateOptions {
    pub fn rkc(step_s: f64) -> Self {
        Self {
            method: Method::Rkc,
            step_s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_s > 0.0 && self.step_s.is_finite()) {
            return Err(LhpError::config("integrator.step_s", "must be positive"));
        }
        if !(self.sample_interval_s > 0.0 && self.sample_interval_s.is_finite()) {
            return Err(LhpError::config("integrator.sample_interval_s", "must be positive"));
        }
        if self.atol.iter().any(|a| !(*a > 0.0)) || !(self.rtol >= 0.0) {
            return Err(LhpError::config("integrator.atol", "tolerances must be positive"));
        }
        if !(self.event_tol_s > 0.0) {
            return Err(LhpError::config("integrator.event_tol_s", "must be positive"));
        }
        Ok(())
    }
}

/// Piecewise-constant input schedule. Each breakpoint's value holds until
/// the next one; the last holds forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputProfile {
    points: Vec<(f64, ExogenousInputs)>,
}

impl InputProfile {
    pub fn new(points: Vec<(f64, ExogenousInputs)>) -> Result<Self> {
        if points.first().map(|p| p.0) != Some(0.0) {
            return Err(LhpError::InvalidParameter("profile must contain t = 0".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(LhpError::InvalidParameter(format!(
                "input profile times must strictly increase ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { points })
    }

    pub fn constant(u: ExogenousInputs) -> Self {
        Self { points: vec![(0.0, u)] }
    }

    pub fn points(&self) -> &[(f64, ExogenousInputs)] {
        &self.points
    }

    pub fn at(&self, t: f64) -> ExogenousInputs {
        let i = self.points.partition_point(|(tb, _)| *tb <= t);
        self.points[i.saturating_sub(1)].1
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().skip(1).map(|(t, _)| *t)
    }
}

/// Supplies the inputs held over each integration step.
pub trait InputSource {
    /// Times at which the inputs may jump; steps are split there.
    fn breakpoints(&self) -> Vec<f64>;
    /// Inputs for the step starting at `t` in state `x`.
    fn inputs(&mut self, t: f64, x: &LhpState, ev: &mut Evaluator) -> Result<ExogenousInputs>;
    /// Inputs at an intermediate stage `x` of the step starting at `t`, for
    /// sources that follow the state continuously. `None` keeps the inputs
    /// returned by [`InputSource::inputs`] for the whole step.
    fn stage_inputs(&mut self, _t: f64, _x: &LhpState, _ev: &mut Evaluator) -> Option<Result<ExogenousInputs>> {
        None
    }
}

impl InputSource for InputProfile {
    fn breakpoints(&self) -> Vec<f64> {
        InputProfile::breakpoints(self).collect()
    }
    fn inputs(&mut self, t: f64, _: &LhpState, _: &mut Evaluator) -> Result<ExogenousInputs> {
        Ok(self.at(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub state: LhpState,
    pub aux: AuxOutputs,
    pub inputs: ExogenousInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeEvent {
    /// Upper end of the bracket containing the crossing, s.
    pub t: f64,
    pub boundary: ModeBoundary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    /// Largest number of right-hand-side evaluations in one step (rk4, rkc).
    pub max_stages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    /// Set when integration stopped at a mode boundary.
    pub event: Option<ModeEvent>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory has at least the initial record")
    }
}

type Vec4 = [f64; 4];

fn axpy(y: &Vec4, a: f64, x: &Vec4) -> Vec4 {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2], y[3] + a * x[3]]
}

struct Stepper<'e, 'm, 's, S: ?Sized> {
    ev: &'e mut Evaluator<'m>,
    src: &'s mut S,
    /// Start of the current step.
    t: f64,
    opts: IntegrateOptions,
    stats: IntegrationStats,
    rho: Option<f64>,
    since_rho: usize,
}

impl<S: InputSource + ?Sized> Stepper<'_, '_, '_, S> {
    fn f(&mut self, y: &Vec4, u: &ExogenousInputs) -> Result<Vec4> {
        self.stats.rhs_evals += 1;
        let x = LhpState::from_array(*y);
        let u = match self.src.stage_inputs(self.t, &x, self.ev) {
            Some(r) => r?,
            None => *u,
        };
        Ok(self.ev.evaluate(&x, &u)?.rates.to_array())
    }

    fn rk4(&mut self, y: &Vec4, u: &ExogenousInputs, h: f64) -> Result<Vec4> {
        let k1 = self.f(y, u)?;
        let k2 = self.f(&axpy(y, 0.5 * h, &k1), u)?;
        let k3 = self.f(&axpy(y, 0.5 * h, &k2), u)?;
        let k4 = self.f(&axpy(y, h, &k3), u)?;
        Ok(std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
    }

    /// Returns the fifth-order solution and the embedded error estimate.
    fn dopri(&mut self, y: &Vec4, u: &ExogenousInputs, h: f64) -> Result<(Vec4, Vec4)> {
        const A: [[f64; 6]; 6] = [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let mut k = [[0.0; 4]; 7];
        k[0] = self.f(y, u)?;
        for s in 0..6 {
            let mut yi = *y;
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                yi = axpy(&yi, h * A[s][j], kj);
            }
            k[s + 1] = self.f(&yi, u)?;
        }
        // The last stage is evaluated at the fifth-order solution.
        let mut y5 = *y;
        for (j, kj) in k.iter().enumerate().take(6) {
            y5 = axpy(&y5, h * A[5][j], kj);
        }
        let mut err = [0.0; 4];
        for (e, kj) in E.iter().zip(&k) {
            err = axpy(&err, h * e, kj);
        }
        Ok((y5, err))
    }

    fn spectral_radius(&mut self, y: &Vec4, u: &ExogenousInputs) -> Result<f64> {
        let x = LhpState::from_array(*y);
        self.stats.rhs_evals += 8;
        let eig = jacobian_eigenvalues_with(self.ev, &x, u)?;
        Ok(eig.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max))
    }

    fn rho(&mut self, y: &Vec4, u: &ExogenousInputs) -> Result<f64> {
        let rho = match self.rho {
            Some(r) if self.since_rho < self.opts.rho_refresh => r,
            _ => {
                let r = 1.2 * self.spectral_radius(y, u)?;
                self.rho = Some(r);
                self.since_rho = 0;
                r
            }
        };
        self.since_rho += 1;
        Ok(rho)
    }

    fn guarded_rk4(&mut self, y: &Vec4, u: &ExogenousInputs, h: f64) -> Result<Vec4> {
        let n = rk4_substeps(h, self.rho(y, u)?);
        self.stats.max_stages = self.stats.max_stages.max(4 * n);
        let hs = h / n as f64;
        let mut y = *y;
        for _ in 0..n {
            y = self.rk4(&y, u, hs)?;
        }
        Ok(y)
    }

    fn rkc(&mut self, y: &Vec4, u: &ExogenousInputs, h: f64) -> Result<Vec4> {
        let s = rkc_stages(h, self.rho(y, u)?);
        self.stats.max_stages = self.stats.max_stages.max(s);
        let c = RkcCoefficients::new(s);

        let f0 = self.f(y, u)?;
        let mut y_prev2 = *y;
        let mut y_prev = axpy(y, c.mu_tilde[1] * h, &f0);
        for j in 2..=s {
            let fj = self.f(&y_prev, u)?;
            let (mu, nu) = (c.mu[j], c.nu[j]);
            let next = std::array::from_fn(|i| {
                (1.0 - mu - nu) * y[i] + mu * y_prev[i] + nu * y_prev2[i] + c.mu_tilde[j] * h * fj[i] + c.gamma_tilde[j] * h * f0[i]
            });
            y_prev2 = y_prev;
            y_prev = next;
        }
        Ok(y_prev)
    }

    fn fixed_step(&mut self, y: &Vec4, u: &ExogenousInputs, h: f64) -> Result<Vec4> {
        match self.opts.method {
            Method::Rkc => self.rkc(y, u, h),
            _ => self.guarded_rk4(y, u, h),
        }
    }
}

/// Largest `h * rho` accepted for a single RK4 step; the real stability
/// boundary is near 2.785.
const RK4_STABLE_HRHO: f64 = 2.5;

/// Number of equal RK4 substeps keeping each within the stability interval.
pub fn rk4_substeps(h: f64, rho: f64) -> usize {
    ((h * rho / RK4_STABLE_HRHO).ceil() as usize).max(1)
}

/// Stage count so that the damped RKC stability interval covers `h * rho`.
pub fn rkc_stages(h: f64, rho: f64) -> usize {
    (1 + (1.0 + 1.54 * h * rho).sqrt() as usize).max(2)
}

/// Damped second-order Runge–Kutta–Chebyshev recurrence coefficients.
struct RkcCoefficients {
    mu: Vec<f64>,
    nu: Vec<f64>,
    mu_tilde: Vec<f64>,
    gamma_tilde: Vec<f64>,
}

impl RkcCoefficients {
    const DAMPING: f64 = 2.0 / 13.0;

    fn new(s: usize) -> Self {
        let w0 = 1.0 + Self::DAMPING / (s * s) as f64;
        // Chebyshev polynomials and first two derivatives at w0.
        let mut t = vec![0.0; s + 1];
        let mut dt = vec![0.0; s + 1];
        let mut d2t = vec![0.0; s + 1];
        t[0] = 1.0;
        t[1] = w0;
        dt[1] = 1.0;
        for j in 2..=s {
            t[j] = 2.0 * w0 * t[j - 1] - t[j - 2];
            dt[j] = 2.0 * t[j - 1] + 2.0 * w0 * dt[j - 1] - dt[j - 2];
            d2t[j] = 4.0 * dt[j - 1] + 2.0 * w0 * d2t[j - 1] - d2t[j - 2];
        }
        let w1 = dt[s] / d2t[s];
        let mut b = vec![0.0; s + 1];
        for j in 2..=s {
            b[j] = d2t[j] / (dt[j] * dt[j]);
        }
        b[0] = b[2];
        b[1] = b[2];

        let mut mu = vec![0.0; s + 1];
        let mut nu = vec![0.0; s + 1];
        let mut mu_tilde = vec![0.0; s + 1];
        let mut gamma_tilde = vec![0.0; s + 1];
        mu_tilde[1] = b[1] * w1;
        for j in 2..=s {
            mu[j] = 2.0 * b[j] * w0 / b[j - 1];
            nu[j] = -b[j] / b[j - 2];
            mu_tilde[j] = 2.0 * b[j] * w1 / b[j - 1];
            gamma_tilde[j] = -(1.0 - b[j - 1] * t[j - 1]) * mu_tilde[j];
        }
        Self {
            mu,
            nu,
            mu_tilde,
            gamma_tilde,
        }
    }
}

enum StepFailure {
    Boundary(ModeBoundary),
    Error(LhpError),
}

fn classify(r: Result<Vec4>, geom: &crate::model::Geometry) -> std::result::Result<Vec4, StepFailure> {
    match r {
        Ok(y) => match LhpState::from_array(y).check_mode(geom) {
            Ok(()) => Ok(y),
            Err(e) => Err(StepFailure::Boundary(e.mode_boundary().expect("mode check yields a boundary"))),
        },
        Err(e) => match e.mode_boundary() {
            Some(b) => Err(StepFailure::Boundary(b)),
            None => Err(StepFailure::Error(e)),
        },
    }
}

/// Sorted, deduplicated stop times in (0, t_end].
fn stop_times(t_end: f64, sample: f64, breakpoints: &[f64]) -> Vec<(f64, bool)> {
    let n = (t_end / sample).floor() as u64;
    let mut out: Vec<(f64, bool)> = (1..=n).map(|k| (k as f64 * sample, true)).collect();
    out.extend(breakpoints.iter().filter(|&&t| t > 0.0 && t < t_end).map(|&t| (t, false)));
    out.push((t_end, true));
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, bool)> = Vec::with_capacity(out.len());
    for (t, s) in out {
        match merged.last_mut() {
            Some(last) if (t - last.0).abs() <= 1e-9 * t.max(1.0) => last.1 |= s,
            _ => merged.push((t, s)),
        }
    }
    merged
}

/// Integrates from `x0` at t = 0 to `t_end` with inputs drawn from
/// `source` at the start of every step and held over it.
pub fn integrate_with<S: InputSource + ?Sized>(
    x0: LhpState,
    source: &mut S,
    model: &LhpModel,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    model.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(LhpError::InvalidParameter(format!("t_end must be positive, got {t_end}")));
    }
    x0.check_mode(&model.geometry)?;
    let geom = model.geometry;

    let mut ev = model.evaluator();
    let mut records = Vec::new();
    let mut record = |ev: &mut Evaluator, t: f64, y: &Vec4, u: ExogenousInputs| -> Result<()> {
        let state = LhpState::from_array(*y);
        let aux = ev.evaluate(&state, &u).map_err(|e| e.at(t))?.aux;
        records.push(Record { t, state, aux, inputs: u });
        Ok(())
    };

    let stops = stop_times(t_end, opts.sample_interval_s, &source.breakpoints());
    let mut y = x0.to_array();
    let mut t = 0.0;
    let u0 = source.inputs(0.0, &x0, &mut ev).map_err(|e| e.at(0.0))?;
    record(&mut ev, 0.0, &y, u0)?;
    let mut stepper = Stepper {
        ev: &mut ev,
        src: source,
        t: 0.0,
        opts: *opts,
        stats: IntegrationStats::default(),
        rho: None,
        since_rho: 0,
    };
    let mut dopri_h = opts.step_s.min(1e-4);
    let mut pending_u = Some(u0);

    for &(t_stop, sample) in &stops {
        let span = t_stop - t;
        let fixed_n = (span / opts.step_s * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        let t_start = t;
        let mut i = 0u64;
        while t < t_stop {
            let x = LhpState::from_array(y);
            let u = match pending_u.take() {
                Some(u) => u,
                None => stepper.src.inputs(t, &x, stepper.ev).map_err(|e| e.at(t))?,
            };
            stepper.t = t;
            if stepper.stats.steps >= opts.max_steps {
                return Err(LhpError::NoConvergence {
                    what: "integration step budget",
                    iterations: opts.max_steps as usize,
                    residual: t,
                }
                .at(t));
            }

            let (h, attempt) = match opts.method {
                Method::Dopri45 => {
                    let mut h = dopri_h.min(opts.step_s).min(t_stop - t);
                    loop {
                        match stepper.dopri(&y, &u, h) {
                            Ok((y5, err)) => {
                                let norm = (err
                                    .iter()
                                    .zip(&y5)
                                    .zip(&opts.atol)
                                    .map(|((e, yi), a)| (e / (a + opts.rtol * yi.abs())).powi(2))
                                    .sum::<f64>()
                                    / 4.0)
                                    .sqrt();
                                let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                                if norm <= 1.0 {
                                    if t + h < t_stop {
                                        dopri_h = h * factor;
                                    }
                                    break (h, Ok(y5));
                                }
                                stepper.stats.rejected += 1;
                                h *= factor;
                            }
                            Err(e) if e.mode_boundary().is_some() && h > opts.event_tol_s => {
                                stepper.stats.rejected += 1;
                                h *= 0.5;
                            }
                            Err(e) => break (h, Err(e)),
                        }
                        if h < 1e-14 * t.max(1.0) {
                            return Err(LhpError::NoConvergence {
                                what: "adaptive step size control",
                                iterations: stepper.stats.steps as usize,
                                residual: h,
                            }
                            .at(t));
                        }
                    }
                }
                _ => {
                    i += 1;
                    let t_next = if i == fixed_n { t_stop } else { t_start + i as f64 * span / fixed_n as f64 };
                    let h = t_next - t;
                    (h, stepper.fixed_step(&y, &u, h))
                }
            };

            match classify(attempt, &geom) {
                Ok(y_new) => {
                    y = y_new;
                    t = if t + h >= t_stop - 1e-12 * t_stop.max(1.0) { t_stop } else { t + h };
                    stepper.stats.steps += 1;
                }
                Err(StepFailure::Error(e)) => return Err(e.at(t)),
                Err(StepFailure::Boundary(b)) => {
                    let (mut lo, mut hi) = (0.0, h);
                    let mut y_lo = y;
                    let mut boundary = b;
                    while hi - lo > opts.event_tol_s {
                        let mid = 0.5 * (lo + hi);
                        let r = match opts.method {
                            Method::Dopri45 => stepper.dopri(&y, &u, mid).map(|p| p.0),
                            _ => stepper.fixed_step(&y, &u, mid),
                        };
                        match classify(r, &geom) {
                            Ok(ym) => {
                                lo = mid;
                                y_lo = ym;
                            }
                            Err(StepFailure::Boundary(bm)) => {
                                hi = mid;
                                boundary = bm;
                            }
                            Err(StepFailure::Error(e)) => return Err(e.at(t + mid)),
                        }
                    }
                    let t_final = t + lo;
                    let x_final = LhpState::from_array(y_lo);
                    let u_final = stepper.src.inputs(t_final, &x_final, stepper.ev).map_err(|e| e.at(t_final))?;
                    let stats = stepper.stats;
                    record(stepper.ev, t_final, &y_lo, u_final)?;
                    return Ok(Trajectory {
                        records,
                        event: Some(ModeEvent { t: t + hi, boundary }),
                        stats,
                    });
                }
            }
        }
        if sample {
            let x = LhpState::from_array(y);
            let u = stepper.src.inputs(t, &x, stepper.ev).map_err(|e| e.at(t))?;
            pending_u = Some(u);
            record(stepper.ev, t, &y, u)?;
        }
    }
    let stats = stepper.stats;
    Ok(Trajectory {
        records,
        event: None,
        stats,
    })
}

/// Open-loop integration over a piecewise-constant input profile.
pub fn integrate(
    x0: LhpState,
    profile: &InputProfile,
    model: &LhpModel,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    integrate_with(x0, &mut profile.clone(), model, t_end, opts)
}

fn jacobian_eigenvalues_with(ev: &mut Evaluator, x: &LhpState, u: &ExogenousInputs) -> Result<Vec<(f64, f64)>> {
    let mut f = |y: &[f64]| -> Result<Vec<f64>> {
        let s = LhpState::from_array([y[0], y[1], y[2], y[3]]);
        Ok(ev.evaluate(&s, u)?.rates.to_array().to_vec())
    };
    let jac: DMatrix<f64> = fd_jacobian(&mut f, &x.to_array(), 1e-6, &STATE_SCALE)?;
    Ok(jac.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect())
}

/// Eigenvalues (re, im) of the finite-difference Jacobian of the state
/// derivatives, 1/s.
pub fn jacobian_eigenvalues(model: &LhpModel, x: &LhpState, u: &ExogenousInputs) -> Result<Vec<(f64, f64)>> {
    let mut m = *model;
    m.fixed_point.tol = m.fixed_point.tol.min(1e-12);
    let mut ev = m.evaluator();
    jacobian_eigenvalues_with(&mut ev, x, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    pub newton: NewtonOptions,
    /// Fixed-point tolerance used while solving, K.
    pub fixed_point_tol: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            fixed_point_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub state: LhpState,
    pub inputs: ExogenousInputs,
    pub aux: AuxOutputs,
    /// Max-norm of all four state derivatives at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Stationary state for constant inputs.
///
/// The chamber liquid volume is a neutral direction of the dynamics (any
/// fill level is stationary once the flows balance), so it is held at the
/// guess value and the remaining three states are solved for.
pub fn find_equilibrium(
    u: &ExogenousInputs,
    model: &LhpModel,
    guess: &LhpState,
    opts: &EquilibriumOptions,
) -> Result<Equilibrium> {
    model.validate()?;
    guess.check_mode(&model.geometry)?;
    let mut m = *model;
    m.fixed_point.tol = opts.fixed_point_tol;
    let v = guess.v_cc_l;
    let mut boundary: Option<ModeBoundary> = None;

    let rep = {
        let f = |z: &[f64]| -> Result<Vec<f64>> {
            let x = LhpState {
                t_cc: z[0],
                eta: z[1],
                v_cc_l: v,
                mdot_l: z[2],
            };
            match m.evaluator().evaluate(&x, u) {
                Ok(e) => Ok(vec![e.rates.t_cc, e.rates.eta, e.rates.mdot_l]),
                Err(e) => {
                    if let Some(b) = e.mode_boundary() {
                        boundary = Some(b);
                    }
                    Err(e)
                }
            }
        };
        newton(f, &[guess.t_cc, guess.eta, guess.mdot_l], &[300.0, 0.1, 1e-5], &opts.newton, "equilibrium search")
    };
    let rep = match rep {
        Ok(r) => r,
        Err(e) => {
            return Err(match (boundary, e) {
                (Some(b), LhpError::NoConvergence { .. }) => LhpError::ModeBoundary(b),
                (_, e) => e,
            })
        }
    };

    let state = LhpState {
        t_cc: rep.x[0],
        eta: rep.x[1],
        v_cc_l: v,
        mdot_l: rep.x[2],
    };
    let e = m.evaluator().evaluate(&state, u)?;
    Ok(Equilibrium {
        state,
        inputs: *u,
        aux: e.aux,
        residual_norm: max_norm(&e.rates.to_array()),
        iterations: rep.iterations,
    })
}

/// Follows the equilibrium branch from `start` while the inputs move
/// linearly from `from` to `to` in `steps` increments.
pub fn continue_equilibrium(
    from: &ExogenousInputs,
    to: &ExogenousInputs,
    start: &LhpState,
    model: &LhpModel,
    steps: usize,
    opts: &EquilibriumOptions,
) -> Result<Equilibrium> {
    let steps = steps.max(1);
    let mut guess = *start;
    let mut last = None;
    for k in 1..=steps {
        let s = k as f64 / steps as f64;
        let u = ExogenousInputs {
            q_evap: from.q_evap + s * (to.q_evap - from.q_evap),
            t_sink: from.t_sink + s * (to.t_sink - from.t_sink),
            q_cc: from.q_cc + s * (to.q_cc - from.q_cc),
        };
        let eq = find_equilibrium(&u, model, &guess, opts)?;
        guess = eq.state;
        last = Some(eq);
    }
    Ok(last.expect("at least one continuation step"))
}

/// Equilibrium whose chamber temperature equals `t_cc`, found by a secant
/// iteration on the heater power starting from `u.q_cc`. The returned
/// heater power is not clipped to any actuator range.
pub fn equilibrium_at_temperature(
    u: &ExogenousInputs,
    t_cc: f64,
    model: &LhpModel,
    guess: &LhpState,
    opts: &EquilibriumOptions,
) -> Result<Equilibrium> {
    // Coarser than this, the equilibrium residual tolerance limits T_cc.
    const TOL_K: f64 = 1e-6;
    const MAX_ITER: usize = 50;
    let solve = |q: f64, g: &LhpState| find_equilibrium(&ExogenousInputs { q_cc: q, ..*u }, model, g, opts);
    let first = solve(u.q_cc, guess)?;
    let (mut q0, mut e0) = (u.q_cc, t_cc - first.state.t_cc);
    if e0.abs() < TOL_K {
        return Ok(first);
    }
    let mut q1 = u.q_cc + 0.5;
    let mut eq = solve(q1, &first.state)?;
    for _ in 0..MAX_ITER {
        let e1 = t_cc - eq.state.t_cc;
        if e1.abs() < TOL_K {
            return Ok(eq);
        }
        if e1 == e0 {
            return Err(LhpError::Singularity("heater power has no effect on the chamber temperature".into()));
        }
        let q2 = q1 - e1 * (q1 - q0) / (e1 - e0);
        (q0, e0, q1) = (q1, e1, q2);
        eq = solve(q1, &eq.state)?;
    }
    Err(LhpError::NoConvergence {
        what: "setpoint equilibrium",
        iterations: MAX_ITER,
        residual: (t_cc - eq.state.t_cc).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_ident::{identify, IdentifyConfig, OperatingPoint};
    use crate::model::Geometry;

    fn identified() -> LhpModel {
        let cfg = IdentifyConfig::default();
        let g = Geometry::reconstructed();
        identify(&OperatingPoint::reference(), &g, &cfg).unwrap().model(g, &cfg)
    }

    fn op_equilibrium(m: &LhpModel) -> Equilibrium {
        find_equilibrium(
            &ExogenousInputs::reference_operating_point(),
            m,
            &LhpState::reference_operating_point(),
            &EquilibriumOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn profile_validation_and_hold() {
        let u = ExogenousInputs::reference_operating_point();
        let u2 = ExogenousInputs { q_cc: 5.653, ..u };
        assert!(InputProfile::new(vec![]).is_err());
        assert!(InputProfile::new(vec![(1.0, u)]).is_err());
        assert!(InputProfile::new(vec![(0.0, u), (5.0, u2), (5.0, u)]).is_err());
        let p = InputProfile::new(vec![(0.0, u), (100.0, u2)]).unwrap();
        assert_eq!(p.at(0.0), u);
        assert_eq!(p.at(99.999), u);
        assert_eq!(p.at(100.0), u2);
        assert_eq!(p.at(1e9), u2);
    }

    #[test]
    fn stop_times_merge_samples_and_breakpoints() {
        let s = stop_times(3.0, 1.0, &[1.5, 2.0, 7.0]);
        assert_eq!(s, vec![(1.0, true), (1.5, false), (2.0, true), (3.0, true)]);
        let s = stop_times(2.5, 1.0, &[]);
        assert_eq!(s.last(), Some(&(2.5, true)));
    }

    #[test]
    fn rkc_coefficients_reproduce_first_order_consistency() {
        // For y' = λy, one RKC step must match exp(hλ) to second order.
        for s in [2, 5, 17] {
            let c = RkcCoefficients::new(s);
            let z = 1e-3;
            let (mut y2, mut y1) = (1.0, 1.0 + c.mu_tilde[1] * z);
            for j in 2..=s {
                let y = (1.0 - c.mu[j] - c.nu[j]) + c.mu[j] * y1 + c.nu[j] * y2 + c.mu_tilde[j] * z * y1 + c.gamma_tilde[j] * z;
                y2 = y1;
                y1 = y;
            }
            assert!((y1 - z.exp()).abs() < 1e-8, "s = {s}: {y1}");
        }
    }

    #[test]
    fn rkc_is_stable_on_stiff_decay() {
        let (h, lambda) = (0.1, -7000.0_f64);
        let s = rkc_stages(h, 1.2 * lambda.abs());
        let c = RkcCoefficients::new(s);
        let z = h * lambda;
        let (mut y2, mut y1) = (1.0, 1.0 + c.mu_tilde[1] * z);
        for j in 2..=s {
            let y = (1.0 - c.mu[j] - c.nu[j]) + c.mu[j] * y1 + c.nu[j] * y2 + c.mu_tilde[j] * z * y1 + c.gamma_tilde[j] * z;
            y2 = y1;
            y1 = y;
        }
        assert!(y1.abs() < 1.0, "amplification {y1} with {s} stages");
    }

    #[test]
    fn equilibrium_reproduces_reference_state() {
        let m = identified();
        let eq = op_equilibrium(&m);
        let r = LhpState::reference_operating_point();
        assert!(eq.residual_norm < 1e-9, "{}", eq.residual_norm);
        assert!((eq.state.t_cc - r.t_cc).abs() < 0.01);
        assert!((eq.state.eta - r.eta).abs() < 1e-3);
        assert!(((eq.state.mdot_l - r.mdot_l) / r.mdot_l).abs() < 0.005);
        assert_eq!(eq.state.v_cc_l, r.v_cc_l);
    }

    fn warm_sink_equilibrium(m: &LhpModel) -> Equilibrium {
        let warm = ExogenousInputs {
            q_evap: 100.0,
            t_sink: crate::fluid_props::celsius_to_kelvin(15.0),
            q_cc: 0.0,
        };
        let op = op_equilibrium(m);
        continue_equilibrium(
            &ExogenousInputs::reference_operating_point(),
            &warm,
            &op.state,
            m,
            20,
            &EquilibriumOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_pushed_past_condenser_end_reports_boundary() {
        let m = identified();
        let start = warm_sink_equilibrium(&m);
        // Raising the sink toward ambient lengthens the stationary two-phase
        // region until it no longer fits in the condenser.
        let mut guess = start.state;
        let mut etas = vec![guess.eta];
        let mut outcome = None;
        for k in 1..=20 {
            let u = ExogenousInputs {
                t_sink: crate::fluid_props::celsius_to_kelvin(15.0 + 0.5 * k as f64),
                ..start.inputs
            };
            match find_equilibrium(&u, &m, &guess, &EquilibriumOptions::default()) {
                Ok(eq) => {
                    guess = eq.state;
                    etas.push(eq.state.eta);
                }
                Err(e) => {
                    outcome = Some(e);
                    break;
                }
            }
        }
        assert!(etas.windows(2).all(|w| w[1] > w[0]), "{etas:?}");
        assert!(*etas.last().unwrap() > 1.75);
        let err = outcome.expect("boundary reached before T_sink = 25 °C");
        assert_eq!(err.mode_boundary(), Some(ModeBoundary::CondenserFull), "{err}");
    }

    #[test]
    fn equilibrium_is_stationary_under_integration() {
        let m = identified();
        let eq = op_equilibrium(&m);
        let traj = integrate(
            eq.state,
            &InputProfile::constant(ExogenousInputs::reference_operating_point()),
            &m,
            200.0,
            &IntegrateOptions::rkc(0.1),
        )
        .unwrap();
        let end = traj.last().state;
        assert!((end.t_cc - eq.state.t_cc).abs() < 1e-6);
        assert!((end.eta - eq.state.eta).abs() < 1e-6);
        assert!(((end.mdot_l - eq.state.mdot_l) / eq.state.mdot_l).abs() < 1e-6);
        assert_eq!(traj.records.len(), 201);
    }

    #[test]
    fn heater_step_raises_chamber_temperature() {
        let m = identified();
        let eq = op_equilibrium(&m);
        let u = ExogenousInputs {
            q_cc: 5.653,
            ..ExogenousInputs::reference_operating_point()
        };
        let traj = integrate(eq.state, &InputProfile::constant(u), &m, 300.0, &IntegrateOptions::rkc(0.1)).unwrap();
        let temps: Vec<f64> = traj.records.iter().map(|r| r.state.t_cc).collect();
        assert!(temps.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(temps.last().unwrap() - temps[0] > 0.1);
    }

    #[test]
    fn breakpoint_inputs_are_recorded_exactly() {
        let m = identified();
        let eq = op_equilibrium(&m);
        let u = ExogenousInputs::reference_operating_point();
        let p = InputProfile::new(vec![(0.0, u), (2.5, ExogenousInputs { q_evap: 61.0, ..u })]).unwrap();
        let opts = IntegrateOptions {
            sample_interval_s: 0.5,
            ..IntegrateOptions::default()
        };
        let traj = integrate(eq.state, &p, &m, 4.0, &opts).unwrap();
        for r in &traj.records {
            assert_eq!(r.inputs, p.at(r.t));
        }
        let again = integrate(eq.state, &p, &m, 4.0, &opts).unwrap();
        assert_eq!(traj, again);
    }

    #[test]
    fn condenser_flooding_halts_with_event() {
        let m = identified();
        let eq = warm_sink_equilibrium(&m);
        let traj = integrate(
            eq.state,
            &InputProfile::constant(ExogenousInputs {
                q_evap: 150.0,
                ..eq.inputs
            }),
            &m,
            100.0,
            &IntegrateOptions::rkc(0.1),
        )
        .unwrap();
        let ev = traj.event.expect("boundary event");
        assert_eq!(ev.boundary, ModeBoundary::CondenserFull);
        let last = traj.last();
        assert!(ev.t - last.t <= 1e-3 + 1e-12);
        assert!(last.state.eta < m.geometry.l_cond());
    }

    #[test]
    fn dopri_tracks_small_step_rk4() {
        let m = identified();
        let eq = op_equilibrium(&m);
        let u = ExogenousInputs {
            q_evap: 70.0,
            ..ExogenousInputs::reference_operating_point()
        };
        let p = InputProfile::constant(u);
        let a = integrate(eq.state, &p, &m, 20.0, &IntegrateOptions::default()).unwrap();
        let opts = IntegrateOptions {
            method: Method::Dopri45,
            step_s: 1.0,
            ..IntegrateOptions::default()
        };
        let b = integrate(eq.state, &p, &m, 20.0, &opts).unwrap();
        let (x, y) = (a.last().state, b.last().state);
        assert!((x.t_cc - y.t_cc).abs() < 1e-5, "{x:?} {y:?}");
        assert!((x.eta - y.eta).abs() < 1e-6);
        assert!(b.stats.rejected < b.stats.steps);
    }
}

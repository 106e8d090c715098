//! Time integration and drift diagnostics.
//!
//! Flaschka-coordinate systems are integrated with the Dormand–Prince 5(4)
//! embedded pair (local extrapolation, FSAL). Canonical separable
//! Hamiltonians `½|p|² + V(q)` are integrated with kick-drift-kick
//! Störmer–Verlet at a fixed step.
//!
//! Step acceptance compares the embedded error estimate against
//! `atol + rtol · max(|x|, |x_new|)` componentwise (max norm). With
//! [`ErrorControl::PerUnitStep`] the estimate is divided by the step size
//! first, which makes the global error roughly proportional to the
//! tolerance over long runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigenvalues, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Leapfrog,
    AdaptiveRk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorControl {
    PerStep,
    #[default]
    PerUnitStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_end: f64,
    /// First trial step for adaptive-rk; the fixed step for leapfrog.
    pub initial_step: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Record every `sample_stride`-th accepted step (the final state is
    /// always recorded).
    pub sample_stride: usize,
    pub error_control: ErrorControl,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk,
            t_end: 50.0,
            initial_step: 1e-3,
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 10_000_000,
            sample_stride: 1,
            error_control: ErrorControl::PerUnitStep,
        }
    }
}

impl IntegratorConfig {
    pub fn adaptive(t_end: f64, rtol: f64) -> Self {
        Self {
            t_end,
            rtol,
            ..Self::default()
        }
    }

    pub fn leapfrog(t_end: f64, step: f64) -> Self {
        Self {
            method: Method::Leapfrog,
            t_end,
            initial_step: step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: format!("integrator.{field}"),
                message,
            })
        };
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be positive, got {}", self.t_end));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step", format!("must be positive, got {}", self.initial_step));
        }
        for (name, tol) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return bad(name, format!("must lie in (0, 1e-2], got {tol}"));
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps", "must be at least 1".into());
        }
        if self.sample_stride == 0 {
            return bad("sample_stride", "must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

/// Sampled states of one run, optionally with invariant evaluations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub invariant_names: Vec<String>,
    /// `invariant_series[k][s]` is invariant `k` at sample `s`.
    pub invariant_series: Vec<Vec<f64>>,
    pub stats: StepStats,
}

impl Trajectory {
    fn start(t0: f64, x0: &[f64]) -> Self {
        Self {
            times: vec![t0],
            states: vec![x0.to_vec()],
            ..Self::default()
        }
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        if self.times.last().is_some_and(|&last| last >= t) {
            return;
        }
        self.times.push(t);
        self.states.push(x.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Evaluates `set` at every sample and stores the series.
    pub fn record_invariants(&mut self, set: &InvariantSet<'_>) -> Result<()> {
        self.invariant_series = evaluate_series(self, set)?;
        self.invariant_names = set.names.clone();
        Ok(())
    }

    /// Writes `t, x_1..x_m, inv_1..inv_k` with 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let m = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("x_{i}")));
        header.extend((1..=self.invariant_series.len()).map(|i| format!("inv_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (s, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = Vec::with_capacity(1 + m + self.invariant_series.len());
            row.push(format!("{t:.16e}"));
            row.extend(x.iter().map(|v| format!("{v:.16e}")));
            row.extend(self.invariant_series.iter().map(|series| format!("{:.16e}", series[s])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Named scalar quantities evaluated together on a flat state.
pub struct InvariantSet<'a> {
    pub names: Vec<String>,
    pub eval: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>,
}

impl<'a> InvariantSet<'a> {
    pub fn new(names: Vec<String>, eval: impl Fn(&[f64]) -> Result<Vec<f64>> + 'a) -> Self {
        Self {
            names,
            eval: Box::new(eval),
        }
    }
}

fn evaluate_series(traj: &Trajectory, set: &InvariantSet<'_>) -> Result<Vec<Vec<f64>>> {
    let mut series = vec![Vec::with_capacity(traj.len()); set.names.len()];
    for x in &traj.states {
        let values = (set.eval)(x)?;
        if values.len() != set.names.len() {
            return Err(Error::Dimension {
                what: "invariant values",
                expected: set.names.len(),
                got: values.len(),
            });
        }
        for (s, v) in series.iter_mut().zip(values) {
            s.push(v);
        }
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    StepLimit,
    StepUnderflow,
    NonFinite,
}

/// An integration that stopped early, with everything computed so far.
#[derive(Debug, Clone, thiserror::Error)]
#[error("integration stopped at t = {time}: {reason:?}")]
pub struct IntegrationFailure {
    pub reason: FailureReason,
    pub time: f64,
    pub partial: Trajectory,
}

impl From<IntegrationFailure> for Error {
    fn from(f: IntegrationFailure) -> Self {
        Error::Integration {
            time: f.time,
            reason: format!("{:?}", f.reason),
        }
    }
}

// Dormand–Prince 5(4) tableau.
// Fields are autonomous, so the node vector is not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `x' = field(x)` from `t = 0` to `cfg.t_end`.
pub fn integrate_flaschka<F>(mut field: F, x0: &[f64], cfg: &IntegratorConfig) -> std::result::Result<Trajectory, IntegrationFailure>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if let Err(e) = cfg.validate() {
        panic!("invalid integrator config: {e}");
    }
    assert_eq!(cfg.method, Method::AdaptiveRk, "integrate_flaschka needs method adaptive-rk");

    let m = x0.len();
    let mut traj = Trajectory::start(0.0, x0);
    let mut x = x0.to_vec();
    let mut t = 0.0_f64;
    let mut h = cfg.initial_step.min(cfg.t_end);
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
    let mut stage = vec![0.0; m];
    let mut x_new = vec![0.0; m];
    field(&x, &mut k[0]);
    traj.stats.rhs_evaluations += 1;

    let (order, per_unit) = match cfg.error_control {
        ErrorControl::PerStep => (5.0, false),
        ErrorControl::PerUnitStep => (4.0, true),
    };
    let mut steps = 0usize;
    let mut last_rejected = false;

    let fail = |reason, t, traj: &Trajectory, x: &[f64]| {
        let mut partial = traj.clone();
        partial.push(t, x);
        IntegrationFailure { reason, time: t, partial }
    };

    while t < cfg.t_end {
        if steps >= cfg.max_steps {
            return Err(fail(FailureReason::StepLimit, t, &traj, &x));
        }
        let remaining = cfg.t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(fail(FailureReason::StepUnderflow, t, &traj, &x));
        }

        for s in 1..7 {
            for i in 0..m {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = x[i] + h * acc;
            }
            field(&stage, &mut k[s]);
        }
        traj.stats.rhs_evaluations += 6;
        // Stage 7 is evaluated at the fifth-order solution.
        x_new.copy_from_slice(&stage);

        let mut err = 0.0_f64;
        for i in 0..m {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let scale = cfg.atol + cfg.rtol * x[i].abs().max(x_new[i].abs());
            err = err.max((h * e).abs() / scale);
        }
        if per_unit {
            err /= h;
        }
        steps += 1;

        if !err.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            traj.stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(fail(FailureReason::NonFinite, t, &traj, &x));
            }
            continue;
        }

        if err <= 1.0 {
            t = if last { cfg.t_end } else { t + h };
            x.copy_from_slice(&x_new);
            k.swap(0, 6);
            traj.stats.accepted += 1;
            if traj.stats.accepted.is_multiple_of(cfg.sample_stride) || t >= cfg.t_end {
                traj.push(t, &x);
            }
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / order)).min(5.0) };
            h *= if last_rejected { grow.min(1.0) } else { grow };
            last_rejected = false;
        } else {
            traj.stats.rejected += 1;
            h *= (0.9 * err.powf(-1.0 / order)).max(0.2);
            last_rejected = true;
        }
    }
    Ok(traj)
}

/// One kick-drift-kick step for `H = ½|p|² + V(q)`. Negative `h` runs the
/// map backwards.
pub fn leapfrog_step<G>(grad_v: &G, q: &mut [f64], p: &mut [f64], h: f64)
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let g = grad_v(q);
    for (pi, gi) in p.iter_mut().zip(&g) {
        *pi -= 0.5 * h * gi;
    }
    for (qi, pi) in q.iter_mut().zip(p.iter()) {
        *qi += h * pi;
    }
    let g = grad_v(q);
    for (pi, gi) in p.iter_mut().zip(&g) {
        *pi -= 0.5 * h * gi;
    }
}

/// Fixed-step Störmer–Verlet for `H = ½|p|² + V(q)`. The step is
/// `t_end / ceil(t_end / initial_step)` so the run ends exactly at `t_end`.
/// States are stored as `(q, p)`.
pub fn integrate_canonical<G>(grad_v: G, q0: &[f64], p0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    if cfg.method != Method::Leapfrog {
        return Err(Error::Config {
            field: "integrator.method".into(),
            message: "canonical integration requires leapfrog".into(),
        });
    }
    if q0.len() != p0.len() {
        return Err(Error::Dimension {
            what: "p0",
            expected: q0.len(),
            got: p0.len(),
        });
    }
    let steps = (cfg.t_end / cfg.initial_step - 1e-9).ceil().max(1.0) as usize;
    if steps > cfg.max_steps {
        return Err(Error::Config {
            field: "integrator.max_steps".into(),
            message: format!("leapfrog needs {steps} steps, limit is {}", cfg.max_steps),
        });
    }
    let h = cfg.t_end / steps as f64;
    let mut q = q0.to_vec();
    let mut p = p0.to_vec();
    let pack = |q: &[f64], p: &[f64]| q.iter().chain(p).copied().collect::<Vec<f64>>();
    let mut traj = Trajectory::start(0.0, &pack(&q, &p));
    for s in 1..=steps {
        leapfrog_step(&grad_v, &mut q, &mut p, h);
        traj.stats.accepted += 1;
        traj.stats.rhs_evaluations += 2;
        if s % cfg.sample_stride == 0 || s == steps {
            let t = if s == steps { cfg.t_end } else { s as f64 * h };
            traj.push(t, &pack(&q, &p));
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEntry {
    pub name: String,
    pub initial: f64,
    /// `max_t |f(x(t)) - f(x_0)| / max(1, |f(x_0)|)`.
    pub max_relative_drift: f64,
    pub time_of_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub entries: Vec<DriftEntry>,
}

impl DriftReport {
    pub fn max_drift(&self) -> f64 {
        self.entries.iter().map(|e| e.max_relative_drift).fold(0.0, f64::max)
    }

    /// Builds the report from series already stored on the trajectory.
    pub fn from_recorded(traj: &Trajectory) -> Self {
        Self::from_series(&traj.times, &traj.invariant_names, &traj.invariant_series)
    }

    fn from_series(times: &[f64], names: &[String], series: &[Vec<f64>]) -> Self {
        let entries = names
            .iter()
            .zip(series)
            .map(|(name, values)| {
                let initial = values.first().copied().unwrap_or(0.0);
                let denom = initial.abs().max(1.0);
                let (mut worst, mut at) = (0.0_f64, times.first().copied().unwrap_or(0.0));
                for (t, v) in times.iter().zip(values) {
                    let d = (v - initial).abs() / denom;
                    if d > worst {
                        worst = d;
                        at = *t;
                    }
                }
                DriftEntry {
                    name: name.clone(),
                    initial,
                    max_relative_drift: worst,
                    time_of_max: at,
                }
            })
            .collect();
        Self { entries }
    }
}

/// Relative drift of each invariant in `set` along `traj`.
pub fn drift_report(traj: &Trajectory, set: &InvariantSet<'_>) -> Result<DriftReport> {
    let series = evaluate_series(traj, set)?;
    Ok(DriftReport::from_series(&traj.times, &set.names, &series))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenDriftReport {
    /// `max_t ‖λ(t) - λ(0)‖_∞` over ascending-sorted eigenvalues.
    pub max_drift: f64,
    pub time_of_max: f64,
    pub max_hermitian_defect: f64,
    pub initial_eigenvalues: Vec<f64>,
}

/// Tolerance on `‖M - M*‖` before eigenvalue tracking refuses a matrix.
pub const HERMITIAN_TOL: f64 = 1e-8;

pub fn eigenvalue_drift<B>(traj: &Trajectory, matrix_builder: B) -> Result<EigenDriftReport>
where
    B: Fn(&[f64]) -> ComplexMatrix,
{
    let mut initial: Option<Vec<f64>> = None;
    let mut report = EigenDriftReport {
        max_drift: 0.0,
        time_of_max: traj.times.first().copied().unwrap_or(0.0),
        max_hermitian_defect: 0.0,
        initial_eigenvalues: Vec::new(),
    };
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let m = matrix_builder(x);
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL {
            return Err(Error::Evaluation(format!("matrix at t = {t} is not Hermitian (defect {defect:e})")));
        }
        report.max_hermitian_defect = report.max_hermitian_defect.max(defect);
        let ev = hermitian_eigenvalues(&m);
        match &initial {
            None => initial = Some(ev),
            Some(ev0) => {
                let d = ev0.iter().zip(&ev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if d > report.max_drift {
                    report.max_drift = d;
                    report.time_of_max = *t;
                }
            }
        }
    }
    report.initial_eigenvalues = initial.unwrap_or_default();
    Ok(report)
}

/// Warning text when any of the first `a_count` coordinates drops below
/// `-1e-12` somewhere along the trajectory.
pub fn positivity_warning(traj: &Trajectory, a_count: usize) -> Option<String> {
    let mut worst: Option<(f64, f64, usize)> = None;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        for (i, &a) in x.iter().take(a_count).enumerate() {
            if a < -1e-12 && worst.is_none_or(|(v, _, _)| a < v) {
                worst = Some((a, *t, i));
            }
        }
    }
    worst.map(|(v, t, i)| format!("a_{} became negative ({v:e}) at t = {t}", i + 1))
}

//! Browser bindings for a few `birkhoff-lax` operations. Every function
//! returns a JSON string so the page needs no generated type glue.

use birkhoff_lax::dynamics::{integrate_flaschka, IntegratorConfig};
use birkhoff_lax::kt_system::{self, kt_field_state, kt_integrals, EqgenVariant, KtFlaschkaPoint};
use birkhoff_lax::sampling::PointSampler;
use birkhoff_lax::spectrum::Spectrum;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bound on the rank accepted from the page.
pub const MAX_N: usize = 10;

#[derive(Debug, Serialize)]
pub struct SimulationView {
    pub n: usize,
    pub times: Vec<f64>,
    /// `b_1..b_n` at each recorded time.
    pub b: Vec<Vec<f64>>,
    pub integral_names: Vec<String>,
    /// Relative drift of each integral at each recorded time.
    pub drift: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub completed: bool,
}

/// Integrates the KT flow from a seeded random point and samples the
/// trajectory down to at most `max_points` records.
pub fn simulate_kt_view(n: usize, seed: u64, t_end: f64, max_points: usize) -> Result<SimulationView, String> {
    check_rank(n)?;
    if !(t_end > 0.0 && t_end <= 200.0) {
        return Err(format!("t_end must lie in (0, 200], got {t_end}"));
    }
    let x0 = PointSampler::new(seed).kt_point(n);
    let cfg = IntegratorConfig::adaptive(t_end, 1e-10);
    let (traj, completed) = match integrate_flaschka(kt_field_state(n, EqgenVariant::Corrected), &x0.to_state(), &cfg) {
        Ok(t) => (t, true),
        Err(f) => (f.partial, false),
    };
    let h0 = kt_integrals(&x0).map_err(|e| e.to_string())?;
    let stride = traj.len().div_ceil(max_points.max(2)).max(1);
    let mut view = SimulationView {
        n,
        times: Vec::new(),
        b: Vec::new(),
        integral_names: (1..=n).map(|i| format!("h_{}", 2 * i)).collect(),
        drift: Vec::new(),
        accepted_steps: traj.stats.accepted,
        rejected_steps: traj.stats.rejected,
        completed,
    };
    let last = traj.len().saturating_sub(1);
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        if k % stride != 0 && k != last {
            continue;
        }
        let x = KtFlaschkaPoint::from_state(n, s).map_err(|e| e.to_string())?;
        let h = kt_integrals(&x).map_err(|e| e.to_string())?;
        view.times.push(*t);
        view.b.push(x.b.clone());
        view.drift.push(h.iter().zip(&h0).map(|(v, v0)| (v - v0).abs() / v0.abs().max(1.0)).collect());
    }
    Ok(view)
}

#[derive(Debug, Serialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub multiplicity: u32,
}

#[derive(Debug, Serialize)]
pub struct ClassificationView {
    pub vectors: Vec<Vec<f64>>,
    pub pass: bool,
    pub maximal: Vec<usize>,
    /// Failing `(maximal, other, ratio)` triples, 0-based.
    pub violations: Vec<(usize, usize, f64)>,
    /// Empty with `diagram_error` set when a multiplicity is not an integer.
    pub weights: Vec<u64>,
    pub edges: Vec<Edge>,
    pub diagram_error: Option<String>,
}

/// Runs the necessary-condition check and builds the diagram for a spectrum
/// given as a JSON array of equal-length vectors.
pub fn classify_view(spectrum_json: &str) -> Result<ClassificationView, String> {
    let vectors: Vec<Vec<f64>> = serde_json::from_str(spectrum_json).map_err(|e| format!("spectrum: {e}"))?;
    let spectrum = Spectrum::new(vectors.clone()).map_err(|e| e.to_string())?;
    let report = spectrum.check_birkhoff_necessary();
    let mut view = ClassificationView {
        vectors,
        pass: report.pass,
        maximal: report.maximal.clone(),
        violations: report.violations().map(|p| (p.maximal, p.other, p.ratio)).collect(),
        weights: Vec::new(),
        edges: Vec::new(),
        diagram_error: None,
    };
    match spectrum.dynkin_diagram() {
        Ok(diagram) => {
            view.weights = diagram.weights;
            view.edges = diagram
                .edges
                .iter()
                .map(|(&(i, j), &multiplicity)| Edge { i, j, multiplicity })
                .collect();
        }
        Err(e) => view.diagram_error = Some(e.to_string()),
    }
    Ok(view)
}

#[derive(Debug, Serialize)]
pub struct ResidualScan {
    pub coupling: Vec<f64>,
    pub corrected: Vec<f64>,
    pub printed: Vec<f64>,
}

/// Lax residual of both field variants at a seeded random point while the
/// end coupling `a_{n+1}` sweeps `[lo, hi]` in `steps` points.
pub fn residual_scan(n: usize, seed: u64, lo: f64, hi: f64, steps: usize) -> Result<ResidualScan, String> {
    check_rank(n)?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("need a finite range with lo < hi, got [{lo}, {hi}]"));
    }
    if !(2..=2000).contains(&steps) {
        return Err(format!("steps must lie in 2..=2000, got {steps}"));
    }
    let mut x = PointSampler::new(seed).kt_point(n);
    let mut scan = ResidualScan {
        coupling: Vec::with_capacity(steps),
        corrected: Vec::with_capacity(steps),
        printed: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let c = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
        x.a[n] = c;
        scan.coupling.push(c);
        scan.corrected.push(kt_system::kt_lax_residual_variant(&x, EqgenVariant::Corrected));
        scan.printed.push(kt_system::kt_lax_residual_variant(&x, EqgenVariant::PrintedGeneral));
    }
    Ok(scan)
}

fn check_rank(n: usize) -> Result<(), String> {
    if (4..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(format!("n must lie in 4..={MAX_N}, got {n}"))
    }
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate_kt(n: usize, seed: u32, t_end: f64, max_points: usize) -> Result<String, JsValue> {
    to_js(simulate_kt_view(n, seed.into(), t_end, max_points))
}

#[wasm_bindgen]
pub fn classify(spectrum_json: &str) -> Result<String, JsValue> {
    to_js(classify_view(spectrum_json))
}

#[wasm_bindgen]
pub fn lax_residual_scan(n: usize, seed: u32, lo: f64, hi: f64, steps: usize) -> Result<String, JsValue> {
    to_js(residual_scan(n, seed.into(), lo, hi, steps))
}

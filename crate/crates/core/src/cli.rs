//! Command-line front end: `classify`, `simulate` and `verify`.
//!
//! A run is described by a JSON [`RunConfig`]; flags override its
//! top-level scalar fields. Every run writes JSON reports with the
//! top-level keys `system`, `n`, `seed` and `tests`, plus a
//! command-specific payload. Exit codes: 0 pass, 1 input error,
//! 2 verification or classification failure, 3 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dn_toda::{self, build_l, dn_flaschka, dn_invariants, DnFlaschkaPoint};
use crate::dynamics::{
    eigenvalue_drift, integrate_canonical, integrate_flaschka, positivity_warning, DriftReport, FailureReason,
    IntegratorConfig, InvariantSet, Method,
};
use crate::error::Error;
use crate::kt_system::{self, build_a, kt_flaschka, kt_integrals, EqgenVariant, KtFlaschkaPoint};
use crate::linalg::{complexify, frobenius, hermitian_defect, numerical_rank, ComplexMatrix, RealMatrix};
use crate::poisson::{fields, BracketStructure, ScalarField, CASIMIR_TOL};
use crate::sampling::PointSampler;
use crate::spectrum::{dn_simple_roots, kt_spectrum, GeneralFlaschkaPoint, Spectrum, INTEGER_TOL};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    #[default]
    #[value(name = "kt")]
    Kt,
    #[value(name = "dn_toda")]
    DnToda,
    #[value(name = "custom_spectrum")]
    CustomSpectrum,
}

impl SystemKind {
    fn name(self) -> &'static str {
        match self {
            SystemKind::Kt => "kt",
            SystemKind::DnToda => "dn_toda",
            SystemKind::CustomSpectrum => "custom_spectrum",
        }
    }
}

/// A coordinate given as a JSON number or as a `"p/q"` / decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coordinate {
    Number(f64),
    Text(String),
}

impl Coordinate {
    pub fn value(&self) -> Result<f64, String> {
        match self {
            Coordinate::Number(x) => Ok(*x),
            Coordinate::Text(s) => parse_rational(s),
        }
    }
}

fn parse_rational(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("cannot parse `{s}` as a number"));
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let d = parse(den)?;
            if d == 0.0 {
                return Err(format!("zero denominator in `{s}`"));
            }
            parse(num)? / d
        }
        None => parse(s)?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Canonical { q: Vec<Coordinate>, p: Vec<Coordinate> },
    Flaschka { a: Vec<Coordinate>, b: Vec<Coordinate> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    /// Rank `n`; for custom spectra it defaults to the vector length.
    pub n: Option<usize>,
    pub spectrum: Option<Vec<Vec<Coordinate>>>,
    /// Absent for `simulate`: a seeded random Flaschka point (or canonical
    /// point for custom spectra) is used.
    pub initial_condition: Option<InitialCondition>,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub samples: usize,
    pub output_dir: PathBuf,
    pub paper_literal_eqgen: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Kt,
            n: None,
            spectrum: None,
            initial_condition: None,
            integrator: IntegratorConfig::default(),
            seed: 1,
            samples: 50,
            output_dir: PathBuf::from("."),
            paper_literal_eqgen: false,
        }
    }
}

const DEFAULT_N: usize = 4;

#[derive(Debug, Parser)]
#[command(name = "birkhoff-lax", version, about = "Lax pairs and first integrals of Toda-type exponential lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the Birkhoff necessary condition and print the diagram.
    Classify(RunArgs),
    /// Integrate one trajectory and write CSV plus a drift summary.
    Simulate(RunArgs),
    /// Run the property battery at seeded random points.
    Verify(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub system: Option<SystemKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Spectrum as a JSON array of vectors; implies `--system custom_spectrum`.
    #[arg(long)]
    pub spectrum: Option<String>,
    /// Number of random points for `verify`.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Use the general equations exactly as printed (with `-4 a_{n+1}²`).
    #[arg(long)]
    pub paper_literal_eqgen: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Library(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Library(Error::Integration { .. } | Error::Evaluation(_) | Error::Consistency(_)) => EXIT_RUNTIME,
            CliError::Library(_) => EXIT_INPUT,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_PASS
            }
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let (args, which): (&RunArgs, fn(&RunConfig) -> Result<i32, CliError>) = match &cli.command {
        Command::Classify(a) => (a, cmd_classify),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Verify(a) => (a, cmd_verify),
    };
    let result = resolve_config(args).and_then(|cfg| which(&cfg));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                context: format!("reading {}", path.display()),
                source,
            })?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| input(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = &args.spectrum {
        let vs: Vec<Vec<Coordinate>> =
            serde_json::from_str(s).map_err(|e| input(format!("field `spectrum`: {e}")))?;
        cfg.spectrum = Some(vs);
        if args.system.is_none() {
            cfg.system = SystemKind::CustomSpectrum;
        }
    }
    if let Some(system) = args.system {
        cfg.system = system;
    }
    if let Some(n) = args.n {
        cfg.n = Some(n);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(samples) = args.samples {
        cfg.samples = samples;
    }
    if args.paper_literal_eqgen {
        cfg.paper_literal_eqgen = true;
    }
    cfg.integrator.validate()?;
    if cfg.samples == 0 {
        return Err(input("field `samples`: must be at least 1"));
    }
    Ok(cfg)
}

/// A fully resolved system: the rank and, for custom runs, the spectrum.
struct Resolved {
    system: SystemKind,
    n: usize,
    spectrum: Option<Spectrum>,
    variant: EqgenVariant,
}

fn resolve_system(cfg: &RunConfig) -> Result<Resolved, CliError> {
    let variant = if cfg.paper_literal_eqgen {
        EqgenVariant::PrintedGeneral
    } else {
        EqgenVariant::Corrected
    };
    match cfg.system {
        SystemKind::Kt | SystemKind::DnToda => {
            if cfg.spectrum.is_some() {
                return Err(input(format!(
                    "field `spectrum`: only allowed with system custom_spectrum, not {}",
                    cfg.system.name()
                )));
            }
            let n = cfg.n.unwrap_or(DEFAULT_N);
            if n < 4 {
                return Err(input(format!("field `n`: {} requires n >= 4, got {n}", cfg.system.name())));
            }
            Ok(Resolved {
                system: cfg.system,
                n,
                spectrum: None,
                variant,
            })
        }
        SystemKind::CustomSpectrum => {
            let raw = cfg
                .spectrum
                .as_ref()
                .ok_or_else(|| input("field `spectrum`: required for system custom_spectrum"))?;
            let mut vectors = Vec::with_capacity(raw.len());
            for (i, v) in raw.iter().enumerate() {
                let row = v
                    .iter()
                    .map(Coordinate::value)
                    .collect::<Result<Vec<f64>, String>>()
                    .map_err(|e| input(format!("field `spectrum[{i}]`: {e}")))?;
                vectors.push(row);
            }
            let spectrum = Spectrum::new(vectors).map_err(|e| input(format!("field `spectrum`: {e}")))?;
            if let Some(n) = cfg.n {
                if n != spectrum.dim() {
                    return Err(input(format!(
                        "field `n`: {n} does not match spectrum vector length {}",
                        spectrum.dim()
                    )));
                }
            }
            Ok(Resolved {
                system: cfg.system,
                n: spectrum.dim(),
                spectrum: Some(spectrum),
                variant,
            })
        }
    }
}

impl Resolved {
    fn spectrum(&self) -> Result<Spectrum, CliError> {
        Ok(match self.system {
            SystemKind::Kt => kt_spectrum(self.n)?,
            SystemKind::DnToda => dn_simple_roots(self.n)?,
            SystemKind::CustomSpectrum => self.spectrum.clone().expect("resolved custom spectrum"),
        })
    }
}

/// One row of a report's `tests` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl TestRecord {
    pub fn new(name: impl Into<String>, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_residual,
            tolerance,
            pass: max_residual <= tolerance,
        }
    }
}

fn report(cfg: &RunConfig, r: &Resolved, tests: &[TestRecord], extra: Value) -> Value {
    let mut doc = json!({
        "system": r.system.name(),
        "n": r.n,
        "seed": cfg.seed,
        "tests": tests,
    });
    if let (Some(map), Value::Object(more)) = (doc.as_object_mut(), extra) {
        map.extend(more);
    }
    doc
}

/// Writes `bytes` to `dir/name` through a temporary file in `dir`.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let io = |context: String| move |source| CliError::Io { context, source };
    fs::create_dir_all(dir).map_err(io(format!("creating {}", dir.display())))?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(format!("creating temp file in {}", dir.display())))?;
    tmp.write_all(bytes).map_err(io(format!("writing {}", target.display())))?;
    tmp.persist(&target)
        .map_err(|e| CliError::Io {
            context: format!("renaming into {}", target.display()),
            source: e.error,
        })?;
    Ok(target)
}

fn write_json(dir: &Path, name: &str, doc: &Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(doc).expect("JSON values serialize");
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn print_tests(tests: &[TestRecord]) {
    for t in tests {
        println!(
            "{:<5} {:<28} max_residual={:.3e} tolerance={:.1e}",
            if t.pass { "PASS" } else { "FAIL" },
            t.name,
            t.max_residual,
            t.tolerance
        );
    }
}

/// Distance of `ratio` from the nonpositive integers.
fn ratio_violation(ratio: f64) -> f64 {
    if ratio > 0.0 {
        ratio
    } else {
        (ratio - ratio.round()).abs()
    }
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<i32, CliError> {
    let r = resolve_system(cfg)?;
    let spectrum = r.spectrum()?;
    let check = spectrum.check_birkhoff_necessary();
    let worst = check.pairs.iter().map(|p| ratio_violation(p.ratio)).fold(0.0, f64::max);
    let mut test = TestRecord::new("birkhoff_necessary", worst, INTEGER_TOL);
    test.pass = check.pass;

    let diagram = match spectrum.dynkin_diagram() {
        Ok(d) => {
            let adjacency: Vec<Value> = (0..d.vertex_count())
                .map(|i| {
                    let neighbours: Vec<Value> = (0..d.vertex_count())
                        .filter(|&j| j != i && d.multiplicity(i, j) > 0)
                        .map(|j| json!({"vertex": j, "multiplicity": d.multiplicity(i, j)}))
                        .collect();
                    json!({"vertex": i, "weight": d.weights[i], "neighbours": neighbours})
                })
                .collect();
            json!({
                "weights": d.weights,
                "weight_multiset": d.weight_multiset(),
                "edges": d.edges.iter().map(|(&(i, j), &m)| json!({"i": i, "j": j, "multiplicity": m})).collect::<Vec<_>>(),
                "adjacency": adjacency,
            })
        }
        Err(e) => json!({"error": e.to_string()}),
    };
    let tests = [test];
    let doc = report(
        cfg,
        &r,
        &tests,
        json!({
            "vectors": spectrum.vectors(),
            "maximal_vectors": check.maximal,
            "pairs": check.pairs,
            "violations": check.violations().collect::<Vec<_>>(),
            "diagram": diagram,
        }),
    );
    let path = write_json(&cfg.output_dir, "classify.json", &doc)?;
    print_tests(&tests);
    for v in check.violations() {
        println!("  violating pair ({}, {}): ratio {}", v.maximal, v.other, v.ratio);
    }
    println!("report: {}", path.display());
    Ok(if check.pass { EXIT_PASS } else { EXIT_FAIL })
}

/// Maximum of `f` over `items`; an error at any item yields `+inf`.
fn max_over<T>(items: &[T], mut f: impl FnMut(&T) -> Result<f64, Error>) -> f64 {
    let mut worst = 0.0_f64;
    for item in items {
        match f(item) {
            Ok(v) if v.is_nan() => return f64::INFINITY,
            Ok(v) => worst = worst.max(v),
            Err(_) => return f64::INFINITY,
        }
    }
    worst
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Battery for the Kozlov–Treshchev system.
pub fn verify_kt(n: usize, samples: usize, seed: u64, variant: EqgenVariant) -> Vec<TestRecord> {
    let mut sampler = PointSampler::new(seed);
    let points: Vec<KtFlaschkaPoint> = (0..samples).map(|_| sampler.kt_point(n)).collect();
    let canonical: Vec<(Vec<f64>, Vec<f64>)> = (0..samples).map(|_| sampler.canonical(n, 1.0, 1.5)).collect();
    let states: Vec<Vec<f64>> = points.iter().map(KtFlaschkaPoint::to_state).collect();
    let w1 = BracketStructure::w1(n);
    let integrals = fields::kt_integrals_all(n);
    let refs: Vec<&dyn ScalarField> = integrals.iter().map(|f| f as &dyn ScalarField).collect();

    let lax = max_over(&points, |x| {
        Ok(kt_system::kt_lax_residual_variant(x, variant) / (1.0 + frobenius(&build_a(x))))
    });
    let bracket = max_over(&points, |x| {
        let vf = w1.hamiltonian_vector_field(&integrals[0], &x.to_state())?;
        Ok(max_abs_diff(&vf, &kt_system::kt_vector_field_variant(x, variant).to_state()))
    });
    let involution = max_over(&states, |s| Ok(w1.involution_matrix(&refs, s)?.max_scaled));
    let deficient = points.iter().filter(|x| kt_system::kt_independence_rank(x) != n).count();
    let hermitian = max_over(&points, |x| Ok(hermitian_defect(&build_a(x))));
    let casimir = w1
        .casimir_check(&fields::kt_casimir(n), &states)
        .map_or(f64::INFINITY, |c| c.max_scaled);
    let half_h = max_over(&points, |x| {
        let h = kt_integrals(x)?[0];
        let hf = kt_system::kt_hamiltonian_flaschka(x);
        Ok((h - hf).abs() / hf.abs().max(1.0))
    })
    .max(max_over(&canonical, |(q, p)| {
        let lhs = kt_system::kt_hamiltonian_flaschka(&kt_flaschka(q, p)?);
        let rhs = 0.5 * kt_system::kt_hamiltonian(q, p)?;
        Ok((lhs - rhs).abs() / rhs.abs().max(1.0))
    }));

    vec![
        TestRecord::new("lax_residual", lax, 1e-12),
        TestRecord::new("bracket_field", bracket, 1e-12),
        TestRecord::new("involution", involution, 1e-10),
        TestRecord::new("independence_rank", deficient as f64 / samples as f64, 0.05),
        TestRecord::new("hermiticity", hermitian, 1e-12),
        TestRecord::new("casimir", casimir, CASIMIR_TOL),
        TestRecord::new("h2_half_hamiltonian", half_h, 1e-12),
    ]
}

fn dn_integrals_fields(n: usize) -> Vec<crate::poisson::FnField> {
    let mut fs: Vec<_> = (1..n).map(|i| fields::dn_hamiltonian(n, i)).collect();
    fs.push(fields::dn_pfaffian(n));
    fs
}

/// Battery for the Dₙ Toda lattice.
pub fn verify_dn(n: usize, samples: usize, seed: u64) -> Vec<TestRecord> {
    let mut sampler = PointSampler::new(seed);
    let points: Vec<DnFlaschkaPoint> = (0..samples).map(|_| sampler.dn_point(n)).collect();
    let canonical: Vec<(Vec<f64>, Vec<f64>)> = (0..samples).map(|_| sampler.canonical(n, 1.0, 1.5)).collect();
    let states: Vec<Vec<f64>> = points.iter().map(DnFlaschkaPoint::to_state).collect();
    let pi1 = BracketStructure::pi1(n);
    let integrals = dn_integrals_fields(n);
    let refs: Vec<&dyn ScalarField> = integrals.iter().map(|f| f as &dyn ScalarField).collect();

    let lax = max_over(&points, |x| {
        Ok(dn_toda::dn_lax_residual(x) / (1.0 + build_l(x).norm()))
    });
    let quadratic = max_over(&points, |x| {
        let l = build_l(x);
        Ok(dn_toda::dn_quadratic_lax_residual(x) / (1.0 + (&l * &l).norm()))
    });
    let bracket = max_over(&points, |x| {
        let vf = pi1.hamiltonian_vector_field(&integrals[0], &x.to_state())?;
        Ok(max_abs_diff(&vf, &dn_toda::dn_vector_field(x).to_state()))
    });
    let involution = max_over(&states, |s| Ok(pi1.involution_matrix(&refs, s)?.max_scaled));
    let deficient = states
        .iter()
        .filter(|s| {
            let rows: Vec<Vec<f64>> = refs.iter().map(|f| crate::poisson::gradient(*f, s)).collect();
            let jac = RealMatrix::from_fn(n, 2 * n, |i, j| rows[i][j]);
            numerical_rank(&jac, 1e-8) != n
        })
        .count();
    let symmetry = max_over(&points, |x| {
        let l = build_l(x);
        Ok((&l - l.transpose()).amax())
    });
    let pairing = max_over(&points, |x| {
        let l = build_l(x);
        Ok(dn_toda::pm_pairing_defect(&dn_toda::l_eigenvalues(x)) / (1.0 + l.norm()))
    });
    let half_h = max_over(&canonical, |(q, p)| {
        let h2 = dn_invariants(&build_l(&dn_flaschka(q, p)?))?[0];
        let rhs = 0.5 * dn_toda::dn_hamiltonian(q, p)?;
        Ok((h2 - rhs).abs() / rhs.abs().max(1.0))
    });

    vec![
        TestRecord::new("lax_residual", lax, 1e-12),
        TestRecord::new("quadratic_lax_residual", quadratic, 1e-12),
        TestRecord::new("bracket_field", bracket, 1e-12),
        TestRecord::new("involution", involution, 1e-10),
        TestRecord::new("independence_rank", deficient as f64 / samples as f64, 0.05),
        TestRecord::new("symmetry", symmetry, 0.0),
        TestRecord::new("eigenvalue_pairing", pairing, 1e-9),
        TestRecord::new("h2_half_hamiltonian", half_h, 1e-12),
    ]
}

/// Battery for a user-supplied spectrum.
pub fn verify_custom(spectrum: &Spectrum, samples: usize, seed: u64) -> Vec<TestRecord> {
    let mut sampler = PointSampler::new(seed);
    let dim = spectrum.dim();
    let k = spectrum.len();
    let canonical: Vec<(Vec<f64>, Vec<f64>)> = (0..samples).map(|_| sampler.canonical(dim, 0.5, 1.5)).collect();
    let off_image: Vec<GeneralFlaschkaPoint> = (0..samples)
        .map(|_| GeneralFlaschkaPoint {
            a: sampler.vector(k, -1.5, -0.1),
            b: sampler.vector(k, -1.5, 1.5),
        })
        .collect();

    let pullback = max_over(&canonical, |(q, p)| {
        let x = spectrum.generalized_flaschka(q, p)?;
        let grad = spectrum.potential_gradient(q)?;
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let mut pushed = Vec::with_capacity(2 * k);
        for (v, a) in spectrum.vectors().iter().zip(&x.a) {
            pushed.push(a * dot(v, p));
        }
        for v in spectrum.vectors() {
            pushed.push(-dot(v, &grad));
        }
        let flow = spectrum.polynomial_flow(&x)?.to_state();
        let scale = 1.0 + flow.iter().map(|v| v.abs()).fold(0.0, f64::max);
        Ok(max_abs_diff(&pushed, &flow) / scale)
    });
    let directions = spectrum.casimir_directions();
    let relation = max_over(&directions, |d| spectrum.relation_residual(&d.lambda));
    let f1_rate = max_over(&off_image, |x| {
        let flow = spectrum.polynomial_flow(x)?;
        let mut worst = 0.0_f64;
        for d in &directions {
            let rate: f64 = d.lambda.iter().zip(&flow.b).map(|(l, db)| l * db).sum();
            worst = worst.max(rate.abs());
        }
        Ok(worst)
    });
    let check = spectrum.check_birkhoff_necessary();
    let worst_ratio = check.pairs.iter().map(|p| ratio_violation(p.ratio)).fold(0.0, f64::max);
    let mut birkhoff = TestRecord::new("birkhoff_necessary", worst_ratio, INTEGER_TOL);
    birkhoff.pass = check.pass;

    vec![
        TestRecord::new("flow_pullback", pullback, 1e-12),
        TestRecord::new("casimir_relation", relation, 1e-10),
        TestRecord::new("casimir", f1_rate, 1e-10),
        birkhoff,
    ]
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<i32, CliError> {
    let r = resolve_system(cfg)?;
    let tests = match r.system {
        SystemKind::Kt => verify_kt(r.n, cfg.samples, cfg.seed, r.variant),
        SystemKind::DnToda => verify_dn(r.n, cfg.samples, cfg.seed),
        SystemKind::CustomSpectrum => verify_custom(r.spectrum.as_ref().expect("custom spectrum"), cfg.samples, cfg.seed),
    };
    let all_pass = tests.iter().all(|t| t.pass);
    let doc = report(
        cfg,
        &r,
        &tests,
        json!({
            "samples": cfg.samples,
            "paper_literal_eqgen": cfg.paper_literal_eqgen,
            "pass": all_pass,
        }),
    );
    let path = write_json(&cfg.output_dir, "verify.json", &doc)?;
    print_tests(&tests);
    for t in tests.iter().filter(|t| !t.pass) {
        eprintln!("failed: {}", t.name);
    }
    println!("report: {}", path.display());
    Ok(if all_pass { EXIT_PASS } else { EXIT_FAIL })
}

type Eval = Rc<dyn Fn(&[f64]) -> Result<Vec<f64>, Error>>;
type MatrixFn = Rc<dyn Fn(&[f64]) -> ComplexMatrix>;

/// Everything `simulate` needs about one system, on Flaschka states.
struct Model {
    flaschka_columns: Vec<String>,
    /// Leading state entries that must stay positive.
    positive_a: usize,
    to_flaschka: Rc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>, Error>>,
    potential_gradient: Rc<dyn Fn(&[f64]) -> Vec<f64>>,
    field: Rc<dyn Fn(&[f64], &mut [f64])>,
    invariant_names: Vec<String>,
    invariants: Eval,
    matrix: Option<MatrixFn>,
}

fn columns(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i}")).collect()
}

fn kt_model(n: usize, variant: EqgenVariant) -> Model {
    let mut flaschka_columns = columns("a", n + 1);
    flaschka_columns.extend(columns("b", n));
    Model {
        flaschka_columns,
        positive_a: n + 1,
        to_flaschka: Rc::new(|q, p| Ok(kt_flaschka(q, p)?.to_state())),
        potential_gradient: Rc::new(|q| kt_system::kt_potential_gradient(q).expect("rank checked")),
        field: Rc::new(kt_system::kt_field_state(n, variant)),
        invariant_names: (1..=n).map(|i| format!("h_{}", 2 * i)).collect(),
        invariants: Rc::new(move |s| kt_integrals(&KtFlaschkaPoint::from_state(n, s)?)),
        matrix: Some(Rc::new(move |s| build_a(&KtFlaschkaPoint::from_state(n, s).expect("state length")))),
    }
}

fn dn_model(n: usize) -> Model {
    let mut flaschka_columns = columns("a", n);
    flaschka_columns.extend(columns("b", n));
    let mut invariant_names: Vec<String> = (1..n).map(|i| format!("H_{}", 2 * i)).collect();
    invariant_names.push(format!("P_{n}"));
    Model {
        flaschka_columns,
        positive_a: n,
        to_flaschka: Rc::new(|q, p| Ok(dn_flaschka(q, p)?.to_state())),
        potential_gradient: Rc::new(|q| dn_toda::dn_potential_gradient(q).expect("rank checked")),
        field: Rc::new(move |s, ds| {
            let x = DnFlaschkaPoint::from_state(n, s).expect("state length");
            ds.copy_from_slice(&dn_toda::dn_vector_field(&x).to_state());
        }),
        invariant_names,
        invariants: Rc::new(move |s| dn_invariants(&build_l(&DnFlaschkaPoint::from_state(n, s)?))),
        matrix: Some(Rc::new(move |s| {
            complexify(&build_l(&DnFlaschkaPoint::from_state(n, s).expect("state length")))
        })),
    }
}

fn custom_model(spectrum: &Spectrum) -> Model {
    let k = spectrum.len();
    let mut flaschka_columns = columns("a", k);
    flaschka_columns.extend(columns("b", k));
    let directions = spectrum.casimir_directions();
    let mut invariant_names = Vec::new();
    for d in 1..=directions.len() {
        invariant_names.push(format!("F1_{d}"));
        invariant_names.push(format!("F2_{d}"));
    }
    let (s1, s2, s3, s4) = (spectrum.clone(), spectrum.clone(), spectrum.clone(), spectrum.clone());
    Model {
        flaschka_columns,
        positive_a: 0,
        to_flaschka: Rc::new(move |q, p| Ok(s1.generalized_flaschka(q, p)?.to_state())),
        potential_gradient: Rc::new(move |q| s2.potential_gradient(q).expect("dimension checked")),
        field: Rc::new(move |s, ds| {
            let x = GeneralFlaschkaPoint::from_state(s).expect("even state");
            ds.copy_from_slice(&s3.polynomial_flow(&x).expect("dimension checked").to_state());
        }),
        invariant_names,
        invariants: Rc::new(move |s| {
            let x = GeneralFlaschkaPoint::from_state(s)?;
            let mut out = Vec::with_capacity(2 * directions.len());
            for d in &directions {
                let v = s4.casimir_values(d, &x)?;
                out.push(v.f1);
                out.push(v.f2);
            }
            Ok(out)
        }),
        matrix: None,
    }
}

fn coords(what: &str, xs: &[Coordinate], expected: usize) -> Result<Vec<f64>, CliError> {
    if xs.len() != expected {
        return Err(input(format!(
            "field `initial_condition.{what}`: expected {expected} entries, got {}",
            xs.len()
        )));
    }
    xs.iter()
        .enumerate()
        .map(|(i, c)| c.value().map_err(|e| input(format!("field `initial_condition.{what}[{i}]`: {e}"))))
        .collect()
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32, CliError> {
    let r = resolve_system(cfg)?;
    let n = r.n;
    let model = match r.system {
        SystemKind::Kt => kt_model(n, r.variant),
        SystemKind::DnToda => dn_model(n),
        SystemKind::CustomSpectrum => custom_model(r.spectrum.as_ref().expect("custom spectrum")),
    };
    let (a_len, b_len) = match r.system {
        SystemKind::Kt => (n + 1, n),
        SystemKind::DnToda => (n, n),
        SystemKind::CustomSpectrum => {
            let k = r.spectrum.as_ref().map_or(0, Spectrum::len);
            (k, k)
        }
    };

    let ic = match &cfg.initial_condition {
        Some(ic) => ic.clone(),
        None => {
            let mut sampler = PointSampler::new(cfg.seed);
            let num = |xs: Vec<f64>| xs.into_iter().map(Coordinate::Number).collect::<Vec<_>>();
            match r.system {
                SystemKind::Kt => {
                    let x = sampler.kt_point(n);
                    InitialCondition::Flaschka { a: num(x.a), b: num(x.b) }
                }
                SystemKind::DnToda => {
                    let x = sampler.dn_point(n);
                    InitialCondition::Flaschka { a: num(x.a), b: num(x.b) }
                }
                SystemKind::CustomSpectrum => {
                    let (q, p) = sampler.canonical(n, 0.5, 1.0);
                    InitialCondition::Canonical { q: num(q), p: num(p) }
                }
            }
        }
    };

    let leapfrog = cfg.integrator.method == Method::Leapfrog;
    let (state_columns, result) = match (&ic, leapfrog) {
        (InitialCondition::Canonical { q, p }, true) => {
            let q = coords("q", q, n)?;
            let p = coords("p", p, n)?;
            let mut cols = columns("q", n);
            cols.extend(columns("p", n));
            let grad = model.potential_gradient.clone();
            let traj = integrate_canonical(move |q| grad(q), &q, &p, &cfg.integrator)?;
            (cols, Ok(traj))
        }
        (InitialCondition::Flaschka { .. }, true) => {
            return Err(input(
                "field `integrator.method`: leapfrog needs a canonical initial condition",
            ))
        }
        (_, false) => {
            let x0 = match &ic {
                InitialCondition::Canonical { q, p } => (model.to_flaschka)(&coords("q", q, n)?, &coords("p", p, n)?)
                    .map_err(|e| input(format!("field `initial_condition`: {e}")))?,
                InitialCondition::Flaschka { a, b } => {
                    let mut x = coords("a", a, a_len)?;
                    x.extend(coords("b", b, b_len)?);
                    x
                }
            };
            let field = model.field.clone();
            let res = integrate_flaschka(move |x, dx| field(x, dx), &x0, &cfg.integrator);
            (model.flaschka_columns.clone(), res)
        }
    };

    // Invariants and matrices are defined on Flaschka states.
    let to_flaschka: Rc<dyn Fn(&[f64]) -> Result<Vec<f64>, Error>> = if leapfrog {
        let map = model.to_flaschka.clone();
        Rc::new(move |s: &[f64]| {
            let (q, p) = s.split_at(s.len() / 2);
            map(q, p)
        })
    } else {
        Rc::new(|s: &[f64]| Ok(s.to_vec()))
    };

    let (mut traj, failure) = match result {
        Ok(t) => (t, None),
        Err(f) => {
            let info = json!({"reason": f.reason, "time": f.time});
            (f.partial, Some((info, f.reason)))
        }
    };

    let eval = model.invariants.clone();
    let tf = to_flaschka.clone();
    let set = InvariantSet::new(model.invariant_names.clone(), move |s| eval(&tf(s)?));
    traj.record_invariants(&set)?;
    let drift = DriftReport::from_recorded(&traj);

    let mut tests: Vec<TestRecord> = drift
        .entries
        .iter()
        .map(|e| TestRecord::new(format!("drift_{}", e.name), e.max_relative_drift, 1e-8))
        .collect();
    let eigen = match &model.matrix {
        Some(build) => {
            let build = build.clone();
            let tf = to_flaschka.clone();
            let rep = eigenvalue_drift(&traj, move |s| build(&tf(s).expect("state maps to Flaschka")))?;
            tests.push(TestRecord::new("eigenvalue_drift", rep.max_drift, 1e-8));
            serde_json::to_value(rep).expect("serializable")
        }
        None => Value::Null,
    };
    let mut warnings = Vec::new();
    if !leapfrog {
        if let Some(w) = positivity_warning(&traj, model.positive_a) {
            warnings.push(w);
        }
    }

    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|source| CliError::Io {
        context: "formatting CSV".into(),
        source,
    })?;
    let csv_path = write_atomic(&cfg.output_dir, "trajectory.csv", &csv)?;

    let doc = report(
        cfg,
        &r,
        &tests,
        json!({
            "status": if failure.is_some() { "failed" } else { "completed" },
            "partial": failure.is_some(),
            "failure": failure.as_ref().map(|(info, _)| info.clone()),
            "integrator": cfg.integrator,
            "paper_literal_eqgen": cfg.paper_literal_eqgen,
            "state_columns": state_columns,
            "invariant_columns": model.invariant_names,
            "samples": traj.len(),
            "final_time": traj.final_time(),
            "steps": traj.stats,
            "drift": drift,
            "eigenvalue_drift": eigen,
            "warnings": warnings,
        }),
    );
    let summary_path = write_json(&cfg.output_dir, "summary.json", &doc)?;
    print_tests(&tests);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!("trajectory: {}", csv_path.display());
    println!("summary: {}", summary_path.display());

    match failure {
        None => Ok(EXIT_PASS),
        Some((_, reason)) => {
            let what = match reason {
                FailureReason::StepLimit => "step limit reached",
                FailureReason::StepUnderflow => "step size underflow",
                FailureReason::NonFinite => "non-finite state",
            };
            eprintln!("error: integration stopped at t = {}: {what}; outputs are partial", traj.final_time());
            Ok(EXIT_RUNTIME)
        }
    }
}

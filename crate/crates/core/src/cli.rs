//! Command-line front end.
//!
//! Spec files are TOML (or JSON when the path ends in `.json`). A process
//! file names a `kind` with its parameters, optional times `l < r`, and the
//! `[grid]`/`[tol]` tables; a measure file is a single [`MeasureSpec`].
//!
//! Exit codes: 0 success, 1 input error, 2 numeric failure, 3 failed
//! verification.

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::additive2d::{
    bifree_add_convolve, default_options_2d, gaussian_green, green2_increment, green2_increment_of,
    recover_density_2d_auto_with, recover_density_2d_with, transition_kernel, JointGreenEvaluator,
};
use crate::cumulants::{joint_moments_from_table, moments_to_cumulants, CumulantTable, MomentTable};
use crate::error::Error;
use crate::grid::{circle_angles, UniformGrid};
use crate::measures::{AnyMeasure, CircleMeasure, MeasureSpec, RealMeasure};
use crate::multiplicative2d::{
    bifree_mult_convolve, circle_transition_kernel, increment_pair, increment_pair_of, joint_cumulant_table,
    joint_moment_table, recover_density_torus_with, JointPsiEvaluator, TorusRecovery,
};
use crate::transforms1d::{
    cauchy_g, eta, free_add_convolve_with, psi, r_transform, recover_circle_density_with, s_transform, CircleRecovery,
    DiscPoint, FreeMultConvolution, HalfPlanePoint, RecoveryOptions, WindowPolicy,
};
use crate::verify;

#[derive(Debug, Parser)]
#[command(name = "freeproc", version, about = "Transition kernels and two-time laws of free-increment processes")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a one-variable transform of a measure at given points.
    Transform(TransformArgs),
    /// Free additive convolution of two measures, or bi-free sum of two pairs.
    ConvolveAdd(ConvolveArgs),
    /// Free multiplicative convolution of two circle measures, or the
    /// opposite bi-free multiplicative convolution of two unitary pairs.
    ConvolveMult(ConvolveArgs),
    /// Joint density of `(X_l, X_r)` on a grid.
    JointDensity(PairArgs),
    /// Transition kernel of `X_r` given `X_l`.
    Kernel(PairArgs),
    /// Joint moments `τ(X_l^n X_r^m)` for `n + m ≤ max`.
    Moments(TableArgs),
    /// Two-face cumulants `κ_{n,m}` for `n + m ≤ max`.
    Cumulants(TableArgs),
    /// Run the built-in acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct TimeArgs {
    /// Earlier time `l`; overrides the spec file.
    #[arg(long)]
    l: Option<f64>,
    /// Later time `r`; overrides the spec file.
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    /// Cauchy transform `G(z)` of a measure on the line.
    G,
    /// R-transform `R(z)` of a measure on the line.
    R,
    /// `ψ(z)` of a measure on the circle.
    Psi,
    /// `η(z)` of a measure on the circle.
    Eta,
    /// S-transform of a measure on the circle.
    S,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    which: Which,
    /// Evaluation point `re,im`; repeatable.
    #[arg(long = "at", required = true, allow_hyphen_values = true)]
    at: Vec<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ConvolveArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Second operand.
    #[arg(long = "with")]
    with: PathBuf,
    /// Treat both files as process specs and convolve the pairs at times `l < r`.
    #[arg(long)]
    pairs: bool,
    #[command(flatten)]
    times: TimeArgs,
    /// Highest total order of the moment table for unitary pairs.
    #[arg(long, default_value_t = 4)]
    max: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    times: TimeArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct TableArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    times: TimeArgs,
    #[arg(long, default_value_t = 4)]
    max: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Run every criterion.
    #[arg(long, conflicts_with = "criterion")]
    all: bool,
    /// Run the listed criteria (1 to 9).
    #[arg(long, value_delimiter = ',')]
    criterion: Vec<usize>,
    #[arg(long)]
    json: bool,
}

/// `[grid]` table: sizes are numbers of cells, powers of two in `[64, 4096]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n1d: usize,
    pub n2d: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n1d: 2048, n2d: 256 }
    }
}

/// `[tol]` table: `inversion` bounds clamped negative densities, `mass` the
/// distance of the recovered mass from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolConfig {
    pub inversion: f64,
    pub mass: f64,
}

impl Default for TolConfig {
    fn default() -> Self {
        Self { inversion: 1e-5, mass: 1e-2 }
    }
}

/// Process named in a spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    /// Self-adjoint process with freely additive increments: law of `X_l`
    /// and of the increment `X_r − X_l`.
    SelfAdjointFreeIncrements { initial: MeasureSpec, increment: MeasureSpec },
    /// Unitary process with left multiplicatively free increments: law of
    /// `U_l` and of `U_r U_l^*`.
    UnitaryFreeIncrements { initial: MeasureSpec, increment: MeasureSpec },
    /// Bi-free sum of self-adjoint components evaluated at the same times.
    BifreeSum { components: Vec<ProcessSpec> },
    /// Bi-free Gaussian pair; without explicit entries the covariance of
    /// free Brownian motion, `(l, l; l, r)`.
    GaussianMarkov { variance_l: Option<f64>, variance_r: Option<f64>, covariance: Option<f64> },
    /// Free Poisson process: `X_t` has rate `rate · t`.
    FreePoisson {
        #[serde(default = "one")]
        rate: f64,
    },
    /// Free Cauchy process: `X_t` has scale `scale · t`.
    Cauchy {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Unitary free Lévy process: `U_t` has the Poisson kernel at `e^{-t}`.
    Levy,
}

fn one() -> f64 {
    1.0
}

/// A process spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessFile {
    #[serde(flatten)]
    pub process: ProcessSpec,
    pub l: Option<f64>,
    pub r: Option<f64>,
    /// Explicit window `[xmin, xmax, ymin, ymax]` for self-adjoint pairs.
    pub window: Option<[f64; 4]>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tol: TolConfig,
}

/// A measure spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    #[serde(flatten)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tol: TolConfig,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Numeric(Error),
    Verification(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numeric(e)
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn input<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(msg.into()))
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        return report(e);
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    match e {
        CliError::Input(msg) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            1
        }
        CliError::Numeric(err) => {
            eprintln!("numeric failure: {err}");
            2
        }
        CliError::Verification(msg) => {
            eprintln!("verification failed: {msg}");
            3
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("NUM_THREADS") else { return Ok(()) };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return input(format!("NUM_THREADS must be a positive integer, got {v:?}")),
    };
    // A pool already set by an earlier call in the same process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Transform(a) => transform(a),
        Command::ConvolveAdd(a) => convolve(a, false),
        Command::ConvolveMult(a) => convolve(a, true),
        Command::JointDensity(a) => pair_output(a, false),
        Command::Kernel(a) => pair_output(a, true),
        Command::Moments(a) => table(a, false),
        Command::Cumulants(a) => table(a, true),
        Command::Verify(a) => run_verify(a),
    }
}

fn read_doc<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn check_sizes(grid: &GridConfig, tol: &TolConfig) -> CliResult<()> {
    for (name, n) in [("grid.n1d", grid.n1d), ("grid.n2d", grid.n2d)] {
        if !(64..=4096).contains(&n) || !n.is_power_of_two() {
            return input(format!("{name} must be a power of two in [64, 4096], got {n}"));
        }
    }
    if !(tol.inversion >= 0.0 && tol.inversion.is_finite()) {
        return input(format!("tol.inversion must be non-negative, got {}", tol.inversion));
    }
    if !(tol.mass > 0.0 && tol.mass < 1.0) {
        return input(format!("tol.mass must lie in (0, 1), got {}", tol.mass));
    }
    Ok(())
}

fn read_process(path: &Path) -> CliResult<ProcessFile> {
    let f: ProcessFile = read_doc(path)?;
    check_sizes(&f.grid, &f.tol)?;
    Ok(f)
}

fn read_measure(path: &Path) -> CliResult<MeasureFile> {
    let f: MeasureFile = read_doc(path)?;
    check_sizes(&f.grid, &f.tol)?;
    Ok(f)
}

fn recovery_1d(tol: &TolConfig) -> RecoveryOptions {
    RecoveryOptions { negativity_tol: tol.inversion, mass_window: (1.0 - tol.mass, 1.0 + tol.mass), ..Default::default() }
}

fn recovery_2d(tol: &TolConfig) -> RecoveryOptions {
    RecoveryOptions { negativity_tol: tol.inversion, mass_window: (1.0 - tol.mass, 1.0 + tol.mass), ..default_options_2d() }
}

fn recovery_circle(tol: &TolConfig) -> CircleRecovery {
    CircleRecovery { negativity_tol: tol.inversion, mass_window: (1.0 - tol.mass, 1.0 + tol.mass), ..Default::default() }
}

fn recovery_torus(tol: &TolConfig) -> TorusRecovery {
    TorusRecovery { negativity_tol: tol.inversion, mass_window: (1.0 - tol.mass, 1.0 + tol.mass), ..Default::default() }
}

fn real(spec: &MeasureSpec) -> CliResult<RealMeasure> {
    match spec.build()? {
        AnyMeasure::Real(m) => Ok(m),
        AnyMeasure::Circle(_) => input("expected a measure on the line"),
    }
}

fn circle(spec: &MeasureSpec) -> CliResult<CircleMeasure> {
    match spec.build()? {
        AnyMeasure::Circle(m) => Ok(m),
        AnyMeasure::Real(_) => input("expected a measure on the circle"),
    }
}

/// A resolved two-time pair.
type TableFn = Box<dyn Fn(usize) -> crate::Result<CumulantTable<f64>>>;

enum Pair {
    Additive {
        g: JointGreenEvaluator,
        route: &'static str,
        // Exact cumulant table when every ingredient has finite moments.
        table: Option<TableFn>,
        heavy_tail: Option<f64>,
    },
    Unitary {
        j: JointPsiEvaluator,
        route: &'static str,
    },
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Times {
    l: f64,
    r: f64,
}

fn times(file: &ProcessFile, flags: &TimeArgs) -> CliResult<Option<Times>> {
    match (flags.l.or(file.l), flags.r.or(file.r)) {
        (Some(l), Some(r)) => {
            if !(l >= 0.0 && l < r && r.is_finite()) {
                return Err(Error::TimeOrder { lower: l, upper: r }.into());
            }
            Ok(Some(Times { l, r }))
        }
        (None, None) => Ok(None),
        _ => input("give both times l and r"),
    }
}

fn need(t: Option<Times>, kind: &str) -> CliResult<Times> {
    t.ok_or_else(|| CliError::Input(format!("kind {kind} needs times l < r (--l, --r or the spec file)")))
}

fn cumulants_of(m: &RealMeasure, order: usize) -> crate::Result<Vec<f64>> {
    let moments = (1..=order).map(|n| m.moment(n)).collect::<crate::Result<Vec<f64>>>()?;
    moments_to_cumulants(&moments)
}

fn resolve(spec: &ProcessSpec, t: Option<Times>) -> CliResult<Pair> {
    Ok(match spec {
        ProcessSpec::SelfAdjointFreeIncrements { initial, increment } => {
            let (mx, my) = (real(initial)?, real(increment)?);
            let heavy = (mx.support().is_none() || my.support().is_none()).then_some(0.0);
            let g = green2_increment_of(&mx, &my);
            let table = move |order: usize| {
                CumulantTable::increment_pair(&cumulants_of(&mx, order)?, &cumulants_of(&my, order)?, order)
            };
            Pair::Additive { g, route: "increment_free", table: Some(Box::new(table)), heavy_tail: heavy }
        }
        ProcessSpec::GaussianMarkov { variance_l, variance_r, covariance } => {
            let (a, b, c) = match (variance_l, variance_r, covariance) {
                (Some(a), Some(b), Some(c)) => (*a, *b, *c),
                (None, None, None) => {
                    let t = need(t, "gaussian_markov")?;
                    (t.l, t.r, t.l)
                }
                _ => return input("gaussian_markov needs all of variance_l, variance_r, covariance or none"),
            };
            let g = gaussian_green(a, b, c)?;
            let table = move |order: usize| CumulantTable::bifree_gaussian(a, b, c, order);
            Pair::Additive { g, route: "closed_form", table: Some(Box::new(table)), heavy_tail: None }
        }
        ProcessSpec::FreePoisson { rate } => {
            let t = need(t, "free_poisson")?;
            let (a, b) = (rate * t.l, rate * t.r);
            let g = green2_increment(&RealMeasure::free_poisson(a)?, &RealMeasure::free_poisson(b)?);
            let table = move |order: usize| CumulantTable::free_poisson_pair(a, b, order);
            Pair::Additive { g, route: "increment_free", table: Some(Box::new(table)), heavy_tail: None }
        }
        ProcessSpec::Cauchy { scale } => {
            let t = need(t, "cauchy")?;
            let g = green2_increment(&RealMeasure::cauchy(scale * t.l)?, &RealMeasure::cauchy(scale * t.r)?);
            Pair::Additive { g, route: "increment_free", table: None, heavy_tail: Some(scale * t.r) }
        }
        ProcessSpec::BifreeSum { components } => {
            let mut iter = components.iter();
            let Some(first) = iter.next() else { return input("bifree_sum needs at least one component") };
            let mut acc = resolve(first, t)?;
            for c in iter {
                acc = add_pairs(acc, resolve(c, t)?)?;
            }
            acc
        }
        ProcessSpec::UnitaryFreeIncrements { initial, increment } => {
            let j = increment_pair_of(&circle(initial)?, &circle(increment)?)?;
            Pair::Unitary { j, route: "increment_free" }
        }
        ProcessSpec::Levy => {
            let t = need(t, "levy")?;
            let j = increment_pair(&CircleMeasure::levy(t.l)?, &CircleMeasure::levy(t.r)?)?;
            Pair::Unitary { j, route: "increment_free" }
        }
    })
}

fn add_pairs(p: Pair, q: Pair) -> CliResult<Pair> {
    match (p, q) {
        (
            Pair::Additive { g: g1, table: t1, heavy_tail: h1, .. },
            Pair::Additive { g: g2, table: t2, heavy_tail: h2, .. },
        ) => {
            let table = match (t1, t2) {
                (Some(a), Some(b)) => {
                    Some(Box::new(move |order: usize| a(order)?.add(&b(order)?)) as Box<dyn Fn(usize) -> _>)
                }
                _ => None,
            };
            let heavy_tail = match (h1, h2) {
                (None, None) => None,
                (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
            };
            Ok(Pair::Additive { g: bifree_add_convolve(&g1, &g2), route: "bifree_sum", table, heavy_tail })
        }
        _ => input("bi-free sums need self-adjoint pairs"),
    }
}

struct Context {
    file: ProcessFile,
    times: Option<Times>,
}

impl Context {
    fn load(spec: &Path, flags: &TimeArgs) -> CliResult<(Self, Pair)> {
        let file = read_process(spec)?;
        let times = times(&file, flags)?;
        let pair = resolve(&file.process, times)?;
        Ok((Self { file, times }, pair))
    }

    fn meta(&self, command: &str, route: &str) -> Value {
        json!({
            "command": command,
            "process": self.file.process,
            "times": self.times,
            "grid": self.file.grid,
            "tol": self.file.tol,
            "route": route,
        })
    }
}

fn emit(output: &OutputArgs, csv: String, meta: Value, data: Value) -> CliResult<()> {
    let text = match output.format {
        Format::Csv => csv,
        Format::Json => {
            let mut doc = meta;
            doc["data"] = data;
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
            s.push('\n');
            s
        }
    };
    match &output.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_point(s: &str) -> CliResult<Complex64> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Input(format!("point {s:?} is not of the form re,im"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let re: f64 = parts[0].parse().map_err(|_| bad())?;
    let im: f64 = parts[1].parse().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

fn transform(a: TransformArgs) -> CliResult<()> {
    let file = read_measure(&a.spec)?;
    let m = file.measure.build()?;
    let points = a.at.iter().map(|s| parse_point(s)).collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(points.len());
    for z in &points {
        let v = match (&m, a.which) {
            (AnyMeasure::Real(m), Which::G) => cauchy_g(m, HalfPlanePoint::new(*z)?),
            (AnyMeasure::Real(m), Which::R) => r_transform(m, *z)?,
            (AnyMeasure::Circle(m), Which::Psi) => psi(m, DiscPoint::new(*z)?),
            (AnyMeasure::Circle(m), Which::Eta) => eta(m, DiscPoint::new(*z)?),
            (AnyMeasure::Circle(m), Which::S) => s_transform(m, *z)?,
            (AnyMeasure::Real(_), w) => return input(format!("{w:?} is a transform of circle measures")),
            (AnyMeasure::Circle(_), w) => return input(format!("{w:?} is a transform of measures on the line")),
        };
        rows.push((*z, v));
    }
    let mut csv = String::from("re,im,value_re,value_im\n");
    for (z, v) in &rows {
        let _ = writeln!(csv, "{},{},{},{}", fmt(z.re), fmt(z.im), fmt(v.re), fmt(v.im));
    }
    let data = json!(rows.iter().map(|(z, v)| json!({"z": [z.re, z.im], "value": [v.re, v.im]})).collect::<Vec<_>>());
    let meta = json!({"command": "transform", "measure": file.measure, "which": format!("{:?}", a.which).to_lowercase()});
    emit(&a.output, csv, meta, data)
}

// Density rows `kind,x,value`, with atoms as `atom` rows.
fn real_measure_rows(m: &RealMeasure, n: usize) -> CliResult<(String, Value)> {
    let mut csv = String::from("kind,x,value\n");
    let (xs, values, atoms): (Vec<f64>, Vec<f64>, Vec<(f64, f64)>) = match m {
        RealMeasure::Grid(g) => {
            let atoms = g.atoms().map(|a| a.iter().collect()).unwrap_or_default();
            (g.grid().points(), g.values().to_vec(), atoms)
        }
        RealMeasure::Atomic(a) => (Vec::new(), Vec::new(), a.iter().collect()),
        RealMeasure::Cauchy { scale } => {
            let grid = UniformGrid::new(-10.0 * scale, 10.0 * scale, n + 1)?;
            let xs = grid.points();
            let values = xs.iter().map(|x| m.density_at(*x)).collect();
            (xs, values, Vec::new())
        }
        _ => {
            let (lo, hi) = m.support().expect("bounded law");
            let grid = UniformGrid::padded(lo, hi, 0.05, n + 1)?;
            let xs = grid.points();
            let values = xs.iter().map(|x| m.density_at(*x)).collect();
            (xs, values, m.atoms())
        }
    };
    for (x, v) in xs.iter().zip(&values) {
        let _ = writeln!(csv, "density,{},{}", fmt(*x), fmt(*v));
    }
    for (x, w) in &atoms {
        let _ = writeln!(csv, "atom,{},{}", fmt(*x), fmt(*w));
    }
    Ok((csv, json!({"x": xs, "density": values, "atoms": atoms})))
}

fn circle_measure_rows(m: &CircleMeasure, n: usize) -> (String, Value) {
    let mut csv = String::from("kind,angle,value\n");
    let (angles, values, atoms): (Vec<f64>, Vec<f64>, Vec<(f64, f64)>) = match m {
        CircleMeasure::PointMass { angle } => (Vec::new(), Vec::new(), vec![(*angle, 1.0)]),
        CircleMeasure::Atomic { angles, weights } => {
            (Vec::new(), Vec::new(), angles.iter().cloned().zip(weights.iter().cloned()).collect())
        }
        CircleMeasure::Grid { values } => (circle_angles(values.len()), values.clone(), Vec::new()),
        CircleMeasure::Levy { .. } => {
            let angles = circle_angles(n);
            let values = angles.iter().map(|a| m.density_at(*a)).collect();
            (angles, values, Vec::new())
        }
    };
    for (a, v) in angles.iter().zip(&values) {
        let _ = writeln!(csv, "density,{},{}", fmt(*a), fmt(*v));
    }
    for (a, w) in &atoms {
        let _ = writeln!(csv, "atom,{},{}", fmt(*a), fmt(*w));
    }
    (csv, json!({"angles": angles, "density": values, "atoms": atoms, "normalization": "normalized_haar"}))
}

fn convolve(a: ConvolveArgs, multiplicative: bool) -> CliResult<()> {
    let command = if multiplicative { "convolve-mult" } else { "convolve-add" };
    if !a.pairs {
        let (f1, f2) = (read_measure(&a.spec)?, read_measure(&a.with)?);
        let (grid, tol) = (f1.grid, f1.tol);
        let meta = json!({"command": command, "measures": [f1.measure, f2.measure], "grid": grid, "tol": tol});
        let (csv, data) = if multiplicative {
            let (m1, m2) = (circle(&f1.measure)?, circle(&f2.measure)?);
            let out = recover_circle_density_with(&FreeMultConvolution::of(&m1, &m2), grid.n1d, &recovery_circle(&tol))?;
            circle_measure_rows(&out, grid.n1d)
        } else {
            let (m1, m2) = (real(&f1.measure)?, real(&f2.measure)?);
            let out = free_add_convolve_with(&m1, &m2, grid.n1d + 1, &recovery_1d(&tol))?;
            real_measure_rows(&out, grid.n1d)?
        };
        return emit(&a.output, csv, meta, data);
    }
    let (c1, p1) = Context::load(&a.spec, &a.times)?;
    let (_, p2) = Context::load(&a.with, &a.times)?;
    if multiplicative {
        let (Pair::Unitary { j: j1, .. }, Pair::Unitary { j: j2, .. }) = (p1, p2) else {
            return input("convolve-mult of pairs needs two unitary processes");
        };
        let j = bifree_mult_convolve(&j1, &j2)?;
        let (csv, data) = complex_table(&joint_moment_table(&j, a.max)?, a.max, "moment");
        emit(&a.output, csv, c1.meta(command, "bifree_product"), data)
    } else {
        let pair = add_pairs(p1, p2)?;
        let (csv, data) = density_output(&c1, &pair)?;
        emit(&a.output, csv, c1.meta(command, "bifree_sum"), data)
    }
}

fn additive_density(ctx: &Context, g: &JointGreenEvaluator, heavy_tail: Option<f64>) -> CliResult<crate::additive2d::JointDensityGrid> {
    let n = ctx.file.grid.n2d + 1;
    let mut opts = recovery_2d(&ctx.file.tol);
    if let Some([x0, x1, y0, y1]) = ctx.file.window {
        if heavy_tail.is_some() {
            opts.policy = WindowPolicy::Truncated;
        }
        return Ok(recover_density_2d_with(g, UniformGrid::new(x0, x1, n)?, UniformGrid::new(y0, y1, n)?, &opts)?);
    }
    match heavy_tail {
        Some(scale) => {
            opts.policy = WindowPolicy::Truncated;
            let half = 5.0 * scale.max(1e-3);
            let grid = UniformGrid::new(-half, half, n)?;
            Ok(recover_density_2d_with(g, grid, grid, &opts)?)
        }
        None => Ok(recover_density_2d_auto_with(g, n, &opts)?),
    }
}

fn density_output(ctx: &Context, pair: &Pair) -> CliResult<(String, Value)> {
    match pair {
        Pair::Additive { g, heavy_tail, .. } => {
            let f = additive_density(ctx, g, *heavy_tail)?;
            Ok((f.to_csv(), f.to_json()))
        }
        Pair::Unitary { j, .. } => {
            let f = recover_density_torus_with(j, ctx.file.grid.n2d, &recovery_torus(&ctx.file.tol))?;
            Ok((f.to_csv(), f.to_json()))
        }
    }
}

fn route(pair: &Pair) -> &'static str {
    match pair {
        Pair::Additive { route, .. } | Pair::Unitary { route, .. } => route,
    }
}

fn pair_output(a: PairArgs, kernel: bool) -> CliResult<()> {
    let (ctx, pair) = Context::load(&a.spec, &a.times)?;
    let (csv, data) = if kernel {
        match &pair {
            Pair::Additive { g, heavy_tail, .. } => {
                let k = transition_kernel(&additive_density(&ctx, g, *heavy_tail)?);
                (k.to_csv(), k.to_json())
            }
            Pair::Unitary { j, .. } => {
                let f = recover_density_torus_with(j, ctx.file.grid.n2d, &recovery_torus(&ctx.file.tol))?;
                let k = circle_transition_kernel(&f);
                (k.to_csv(), k.to_json())
            }
        }
    } else {
        density_output(&ctx, &pair)?
    };
    emit(&a.output, csv, ctx.meta(if kernel { "kernel" } else { "joint-density" }, route(&pair)), data)
}

fn real_table<F: Fn(usize, usize) -> crate::Result<f64>>(max: usize, get: F, column: &str) -> CliResult<(String, Value)> {
    let mut csv = format!("n,m,{column}\n");
    let mut entries = Vec::new();
    for total in 0..=max {
        for n in (0..=total).rev() {
            let m = total - n;
            if column == "cumulant" && total == 0 {
                continue;
            }
            let v = get(n, m)?;
            let _ = writeln!(csv, "{n},{m},{}", fmt(v));
            entries.push(json!({"n": n, "m": m, "value": v}));
        }
    }
    Ok((csv, json!(entries)))
}

fn complex_table(t: &MomentTable<Complex64>, max: usize, column: &str) -> (String, Value) {
    complex_entries(max, |n, m| t.get(n, m).expect("within order"), column, false)
}

fn complex_entries<F: Fn(usize, usize) -> Complex64>(max: usize, get: F, column: &str, skip_zero: bool) -> (String, Value) {
    let mut csv = format!("n,m,{column}_re,{column}_im\n");
    let mut entries = Vec::new();
    for total in 0..=max {
        if skip_zero && total == 0 {
            continue;
        }
        for n in (0..=total).rev() {
            let m = total - n;
            let v = get(n, m);
            let _ = writeln!(csv, "{n},{m},{},{}", fmt(v.re), fmt(v.im));
            entries.push(json!({"n": n, "m": m, "value": [v.re, v.im]}));
        }
    }
    (csv, json!(entries))
}

fn table(a: TableArgs, cumulants: bool) -> CliResult<()> {
    if a.max == 0 || a.max > crate::cumulants::MAX_NC_ORDER {
        return input(format!("--max must lie in 1..={}", crate::cumulants::MAX_NC_ORDER));
    }
    let (ctx, pair) = Context::load(&a.spec, &a.times)?;
    let command = if cumulants { "cumulants" } else { "moments" };
    let (csv, data, route) = match &pair {
        Pair::Additive { table, .. } => {
            let Some(table) = table else {
                return Err(Error::MomentUndefined("the pair has heavy tails".into()).into());
            };
            let t = table(a.max)?;
            let (csv, data) = if cumulants {
                real_table(a.max, |n, m| t.get(n, m), "cumulant")?
            } else {
                let mt = joint_moments_from_table(&t)?;
                real_table(a.max, |n, m| mt.get(n, m), "moment")?
            };
            (csv, data, "cumulant_table")
        }
        Pair::Unitary { j, .. } => {
            let (csv, data) = if cumulants {
                let t = joint_cumulant_table(j, a.max)?;
                complex_entries(a.max, |n, m| t.get(n, m).expect("within order"), "cumulant", true)
            } else {
                complex_table(&joint_moment_table(j, a.max)?, a.max, "moment")
            };
            (csv, data, "taylor_coefficients")
        }
    };
    emit(&a.output, csv, ctx.meta(command, route), data)
}

fn run_verify(a: VerifyArgs) -> CliResult<()> {
    let ids: Vec<usize> = if a.all || a.criterion.is_empty() {
        verify::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        a.criterion.clone()
    };
    let mut reports = Vec::new();
    for id in ids {
        let Some(r) = verify::run(id) else { return input(format!("unknown criterion {id}")) };
        if !a.json {
            println!("{}", r.line());
        }
        reports.push(r);
    }
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed()).map(|r| r.id).collect();
    if a.json {
        let doc = json!({"reports": reports, "passed": failed.is_empty()});
        println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    } else {
        println!("{} of {} criteria passed", reports.len() - failed.len(), reports.len());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("criteria {failed:?}")))
    }
}

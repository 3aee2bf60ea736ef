//! `sneakpath` command-line front end.
//!
//! Settings come from an optional TOML run config; flags override it. Results
//! go to stdout (JSON lines, CSV or TOML depending on the command). Failures
//! print one JSON object to stderr and exit with 2 (configuration), 3 (solver
//! or fit failure) or 4 (validation gate).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sneakpath::fitting::{cross_validate_with, fit_with_options, FitOptions, SweepSample};
use sneakpath::metrics::{measure_sneak, noise_margin_device, MarginConfig, Simulator, SneakModel};
use sneakpath::orchestrator::{
    bench_specs, benchmark_models, gate_failures, point_spec, published_points, published_table, read_dataset,
    run_sweep, sweep_points, validate, write_dataset, Backend, BackendKind, DatasetRow, Reference, RunConfig,
    SweepPoint,
};
use sneakpath::{
    eval_closed_form, relative_change_surface, sensitivity_ranking, CoefficientKey, CoefficientStore, Error,
    MeasurementMode, Metal, Parameter, PatternKind, Strategy, TargetState,
};

#[derive(Parser, Debug)]
#[command(name = "sneakpath", version, about = "Sneak-path analysis of memristor crossbar arrays")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// More log output on stderr (repeatable).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the run config. List flags take
/// comma-separated values; single-point commands use the first entry.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Sneak-current backend.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Interconnect layers, comma separated (M3, M5, M6).
    #[arg(long, global = true, value_delimiter = ',')]
    metal: Vec<Metal>,
    /// Stored patterns, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pattern: Vec<PatternKind>,
    /// Termination strategies, comma separated (FRC, GRFC, FRGC, GRC).
    #[arg(long, global = true, value_delimiter = ',')]
    strategy: Vec<Strategy>,
    /// Array sizes N for an N x N array, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    size: Vec<usize>,
    /// ON-state prefactors in amps, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    k_on: Vec<f64>,
    /// Supply voltages, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    v_dd: Vec<f64>,
    /// OFF-state prefactor in amps.
    #[arg(long, global = true)]
    k_off: Option<f64>,
    /// Device nonlinearity, 1/V.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Resistance of grounded line ends, ohms.
    #[arg(long, global = true)]
    r_ground: Option<f64>,
    /// Sense load for sneak-current runs, ohms.
    #[arg(long, global = true)]
    r_load: Option<f64>,
    /// Where the sneak current is read.
    #[arg(long, global = true)]
    measurement_mode: Option<MeasurementMode>,
    /// Newton absolute step tolerance, volts.
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    /// Newton relative step tolerance.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Newton iteration cap.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Leak conductance to ground at every solved node, siemens.
    #[arg(long, global = true)]
    gmin: Option<f64>,
    /// Coefficient file for the closed-form backend.
    #[arg(long, global = true)]
    coefficients: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one array and print a node/branch summary.
    Solve(SolveArgs),
    /// Evaluate the configured grid and emit the dataset CSV.
    Sweep(SweepArgs),
    /// Fit closed-form coefficients to a dataset.
    Fit(FitArgs),
    /// Evaluate the closed-form model over the configured grid.
    Eval,
    /// Compare the closed-form model against a reference.
    Validate(ValidateArgs),
    /// Array and device noise margins at one point.
    Margin(MarginArgs),
    /// Parameter sensitivity ranking at one point.
    Sensitivity(SensitivityArgs),
    /// Per-point wall time of the simulator against the closed-form model.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// State forced onto the target cell.
    #[arg(long, value_enum, default_value_t = TargetArg::Pattern)]
    target: TargetArg,
    /// Write the converged node voltages as JSON.
    #[arg(long)]
    voltages: Option<PathBuf>,
    /// Write the netlist branch list.
    #[arg(long)]
    netlist: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum TargetArg {
    Lrs,
    Hrs,
    Pattern,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Dataset path; stdout when neither this nor the config names one.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also compute array and normalized margins.
    #[arg(long)]
    margins: bool,
    /// Write 0 in the runtime column so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training dataset; a simulator sweep of the configured grid when absent.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Held-out dataset for cross-validation.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Coefficient file to write; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Tikhonov weight on the scaled coefficients.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Exit with code 4 when any holdout error exceeds this many percent.
    #[arg(long)]
    max_holdout_error: Option<f64>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Where the "simulated" column comes from.
    #[arg(long, value_enum, default_value_t = ReferenceArg::Published)]
    reference: ReferenceArg,
    /// Use the configured metals, patterns and strategies instead of all 24 keys.
    #[arg(long)]
    configured_keys: bool,
    /// Use the configured grid instead of the three published points.
    #[arg(long)]
    configured_points: bool,
    /// Gate on |error| instead of agreement with the published error.
    #[arg(long)]
    max_error: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ReferenceArg {
    /// Embedded copy of the published simulation results.
    Published,
    /// Live DC simulation.
    Simulator,
    /// The closed-form model itself (a sanity check, always 0% error).
    #[value(name = "self")]
    Model,
}

#[derive(Args, Debug)]
struct MarginArgs {
    /// Sense load for the margin solves; geometric-mean default when absent.
    #[arg(long)]
    margin_load: Option<f64>,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    /// Also print the relative-change surface of this parameter.
    #[arg(long)]
    surface: Option<Parameter>,
    /// Surface values; must include the base point's value.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 32)]
    bench_size: usize,
    #[arg(long, default_value_t = 5)]
    points: usize,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Exit with code 4 below this speedup.
    #[arg(long)]
    min_speedup: Option<f64>,
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Solver(String),
    Gate(String),
    /// Downstream reader closed stdout; not an error.
    Closed,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Gate(_) => 4,
            Failure::Closed => 0,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Solver(_) => "solver",
            Failure::Gate(_) => "validation-gate",
            Failure::Closed => "closed",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Gate(m) => m,
            Failure::Closed => "",
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(io) => io.into(),
            Error::Solve(_) | Error::Fit(_) | Error::Metrics(sneakpath::MetricsError::ZeroDeviceMargin) => {
                Failure::Solver(e.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Config(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return report(&Failure::Config(first.to_string()));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}

fn report(f: &Failure) -> ExitCode {
    if let Failure::Closed = f {
        return ExitCode::SUCCESS;
    }
    eprintln!("{}", json!({ "error": { "code": f.code(), "kind": f.kind(), "message": f.message() } }));
    ExitCode::from(f.code())
}

fn run(cli: Cli) -> Outcome {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Error::from)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, &cli.overrides);
    config.validate().map_err(Error::from)?;
    match cli.command {
        Command::Solve(a) => solve(&config, &a),
        Command::Sweep(a) => sweep(config, &a),
        Command::Fit(a) => fit(&config, &a),
        Command::Eval => eval(&config),
        Command::Validate(a) => validate_cmd(&config, &a),
        Command::Margin(a) => margin(&config, &a),
        Command::Sensitivity(a) => sensitivity(&config, &a),
        Command::Bench(a) => bench(&config, &a),
    }
}

fn apply_overrides(c: &mut RunConfig, o: &Overrides) {
    fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
        if let Some(v) = src {
            *dst = v.clone();
        }
    }
    fn set_list<T: Clone>(dst: &mut Vec<T>, src: &[T]) {
        if !src.is_empty() {
            *dst = src.to_vec();
        }
    }
    set(&mut c.backend, &o.backend);
    set(&mut c.workers, &o.workers);
    set_list(&mut c.array.metals, &o.metal);
    set_list(&mut c.array.patterns, &o.pattern);
    set_list(&mut c.array.strategies, &o.strategy);
    set_list(&mut c.sweep.sizes, &o.size);
    set_list(&mut c.sweep.k_on, &o.k_on);
    set_list(&mut c.sweep.v_dd, &o.v_dd);
    set(&mut c.device.k_off, &o.k_off);
    set(&mut c.device.alpha, &o.alpha);
    set(&mut c.array.r_ground, &o.r_ground);
    set(&mut c.array.r_load, &o.r_load);
    set(&mut c.array.measurement_mode, &o.measurement_mode);
    set(&mut c.solver.abs_tol, &o.abs_tol);
    set(&mut c.solver.rel_tol, &o.rel_tol);
    set(&mut c.solver.max_iter, &o.max_iter);
    set(&mut c.solver.gmin, &o.gmin);
    if o.coefficients.is_some() {
        c.output.coefficients = o.coefficients.clone();
    }
}

/// First point of the configured grid; the config is already validated, so
/// every list is non-empty.
fn first_point(config: &RunConfig) -> SweepPoint {
    let points = sweep_points(config);
    if points.len() > 1 {
        log::info!("single-point command: using the first of {} configured points", points.len());
    }
    points[0]
}

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Config(format!("cannot open {}: {e}", path.display())))
}

fn point_json(p: &SweepPoint) -> serde_json::Value {
    json!({
        "metal": p.metal.to_string(),
        "pattern": p.pattern.to_string(),
        "strategy": p.strategy.to_string(),
        "size": p.size,
        "k_on": p.k_on,
        "v_dd": p.v_dd,
    })
}

fn solve(config: &RunConfig, a: &SolveArgs) -> Outcome {
    let p = first_point(config);
    let spec = point_spec(config, &p)?;
    let target = match a.target {
        TargetArg::Lrs => TargetState::Lrs,
        TargetArg::Hrs => TargetState::Hrs,
        TargetArg::Pattern => TargetState::FromPattern,
    };
    let sim = Simulator::new(config.solve_options());
    let (net, result) = sim.solve(&spec, target)?;
    if let Some(path) = &a.netlist {
        net.write_branch_list(create(path)?)?;
    }
    if let Some(path) = &a.voltages {
        result.write_voltage_map(&net, create(path)?)?;
    }
    let count = |f: fn(&sneakpath::BranchKind) -> bool| net.count(f);
    let source = net.probes.source.map(|b| result.branch_currents[b.0]);
    let sense = net.probes.sense.map(|n| result.voltage(n));
    let summary = json!({
        "point": point_json(&p),
        "nodes": net.node_count(),
        "branches": net.branches().len(),
        "memristors": count(|k| matches!(k, sneakpath::BranchKind::Memristor { .. })),
        "line_resistors": count(|k| matches!(k, sneakpath::BranchKind::LineResistor(_))),
        "strategy_resistors": count(|k| matches!(k, sneakpath::BranchKind::StrategyResistor(_))),
        "iterations": result.iterations,
        "max_kcl_residual_A": result.max_kcl_residual,
        "source_current_A": source,
        "sense_voltage_V": sense,
        "i_sneak_A": measure_sneak(&net, &result, spec.measurement_mode)?,
    });
    let mut out = stdout();
    writeln!(out, "{summary}")?;
    Ok(out.flush()?)
}

fn sweep(mut config: RunConfig, a: &SweepArgs) -> Outcome {
    config.sweep.margins |= a.margins;
    config.output.timing &= !a.no_timing;
    let rows = run_sweep(&config)?;
    let failed = rows.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        log::warn!("{failed} of {} points failed and are flagged in the dataset", rows.len());
    }
    match a.output.as_ref().or(config.output.dataset.as_ref()) {
        Some(path) => write_dataset(&rows, create(path)?)?,
        None => {
            // Buffered so a closed pipe surfaces as a plain I/O error.
            let mut buf = Vec::new();
            write_dataset(&rows, &mut buf)?;
            let mut out = stdout();
            out.write_all(&buf)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn key_of(r: &DatasetRow) -> CoefficientKey {
    CoefficientKey::new(r.metal, r.pattern, r.strategy)
}

/// Converged rows grouped by coefficient key.
fn group_samples(rows: &[DatasetRow]) -> BTreeMap<CoefficientKey, Vec<SweepSample>> {
    let mut out: BTreeMap<CoefficientKey, Vec<SweepSample>> = BTreeMap::new();
    for r in rows {
        if let (true, Some(i)) = (r.converged, r.i_sneak) {
            out.entry(key_of(r)).or_default().push(SweepSample {
                size: r.size,
                k_on: r.k_on,
                v_dd: r.v_dd,
                i_sneak: i,
                key: key_of(r),
            });
        }
    }
    out
}

fn load_dataset(path: &Path) -> Result<Vec<DatasetRow>, Failure> {
    Ok(read_dataset(open(path)?)?)
}

fn fit(config: &RunConfig, a: &FitArgs) -> Outcome {
    let rows = match &a.input {
        Some(path) => load_dataset(path)?,
        None => {
            let mut c = config.clone();
            c.backend = BackendKind::Simulator;
            run_sweep(&c)?
        }
    };
    let holdout = match &a.holdout {
        Some(path) => Some(group_samples(&load_dataset(path)?)),
        None => None,
    };
    let groups = group_samples(&rows);
    if groups.is_empty() {
        return Err(Failure::Config("dataset has no converged rows".into()));
    }
    let opts = FitOptions { ridge: a.ridge };
    let mut store = CoefficientStore::new();
    let mut worst_holdout: f64 = 0.0;
    let mut out = stdout();
    for (key, samples) in &groups {
        let (fit, holdout_json) = match holdout.as_ref().and_then(|h| h.get(key)) {
            Some(test) => {
                let cv = cross_validate_with(samples, test, &opts).map_err(Error::from)?;
                worst_holdout = worst_holdout.max(cv.max_abs_pct);
                let j = json!({ "points": cv.points.len(), "max_abs_pct": cv.max_abs_pct, "mean_abs_pct": cv.mean_abs_pct });
                (cv.fit, Some(j))
            }
            None => (fit_with_options(samples, &opts).map_err(Error::from)?, None),
        };
        let summary = json!({
            "key": key.to_string(),
            "samples_used": fit.samples_used,
            "excluded": fit.excluded,
            "condition": fit.condition,
            "train_max_rel_error": fit.residuals.max,
            "train_rms_rel_error": fit.residuals.rms,
            "holdout": holdout_json,
            "coefficients": fit.coefficients.c.to_vec(),
        });
        // Summaries go to stderr when stdout carries the coefficient file.
        if a.output.is_some() {
            writeln!(out, "{summary}")?;
        } else {
            eprintln!("{summary}");
        }
        store.insert(fit.coefficients);
    }
    match &a.output {
        Some(path) => store.save(path)?,
        None => write!(out, "{}", store.to_toml())?,
    }
    out.flush()?;
    if let Some(bound) = a.max_holdout_error {
        if worst_holdout > bound {
            return Err(Failure::Gate(format!("holdout error {worst_holdout:.3}% exceeds {bound}%")));
        }
    }
    Ok(())
}

fn closed_form_store(config: &RunConfig) -> Result<CoefficientStore, Failure> {
    Ok(match &config.output.coefficients {
        Some(path) => CoefficientStore::load(path)?,
        None => CoefficientStore::builtin(),
    })
}

fn eval(config: &RunConfig) -> Outcome {
    let store = closed_form_store(config)?;
    let mut out = stdout();
    for p in sweep_points(config) {
        let set = store.get(CoefficientKey::new(p.metal, p.pattern, p.strategy)).map_err(Error::from)?;
        let exponent = set.exponent(p.size, p.k_on, p.v_dd).map_err(Error::from)?;
        let i = eval_closed_form(&set, p.size, p.k_on, p.v_dd).map_err(Error::from)?;
        let mut j = point_json(&p);
        j["exponent"] = json!(exponent);
        j["i_sneak_A"] = json!(i);
        writeln!(out, "{j}")?;
    }
    Ok(out.flush()?)
}

fn validate_cmd(config: &RunConfig, a: &ValidateArgs) -> Outcome {
    let store = closed_form_store(config)?;
    let keys: Vec<CoefficientKey> = if a.configured_keys {
        let mut keys = Vec::new();
        for &m in &config.array.metals {
            for &p in &config.array.patterns {
                for &s in &config.array.strategies {
                    keys.push(CoefficientKey::new(m, p, s));
                }
            }
        }
        keys
    } else {
        published_table().iter().map(|r| r.key).collect()
    };
    let points = if a.configured_points { config.sweep.grid().points() } else { published_points().to_vec() };
    let sim = Simulator::new(config.solve_options());
    let reference = match a.reference {
        ReferenceArg::Published => Reference::Published,
        ReferenceArg::Simulator => Reference::Model(&sim),
        ReferenceArg::Model => Reference::Model(&store),
    };
    let rows = validate(&reference, &store, &keys, &points);
    let mut out = stdout();
    for r in &rows {
        writeln!(out, "{}", serde_json::to_string(r).map_err(io::Error::other)?)?;
    }
    out.flush()?;
    let bound = match (a.reference, a.max_error) {
        (_, Some(b)) => Some(b),
        (ReferenceArg::Model, None) => Some(0.0),
        (ReferenceArg::Published, None) => None,
        // Own-simulator runs are informational unless a bound is given.
        (ReferenceArg::Simulator, None) => return Ok(()),
    };
    let failures = gate_failures(&rows, bound);
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Gate(format!("{} of {} rows fail the gate", failures.len(), rows.len())))
    }
}

fn margin(config: &RunConfig, a: &MarginArgs) -> Outcome {
    let p = first_point(config);
    let spec = point_spec(config, &p)?;
    let mut cfg = MarginConfig::for_spec(&spec);
    if let Some(r) = a.margin_load {
        cfg.r_load = r;
    }
    let sim = Simulator::new(config.solve_options());
    let array = sim.array_margin(&spec, &cfg)?;
    let device = noise_margin_device(&spec.device, spec.v_dd, cfg.r_load).map_err(Error::from)?;
    let normalized = if device > 0.0 { Some(array.margin / device) } else { None };
    let mut j = point_json(&p);
    j["r_load"] = json!(cfg.r_load);
    j["v_one_V"] = json!(array.v_one);
    j["v_zero_V"] = json!(array.v_zero);
    j["margin_V"] = json!(array.margin);
    j["device_margin_V"] = json!(device);
    j["normalized_margin"] = json!(normalized);
    let mut out = stdout();
    writeln!(out, "{j}")?;
    Ok(out.flush()?)
}

fn sensitivity(config: &RunConfig, a: &SensitivityArgs) -> Outcome {
    let p = first_point(config);
    let spec = point_spec(config, &p)?;
    let backend = Backend::from_config(config)?;
    let report = sensitivity_ranking(&backend, &spec)?;
    let mut out = stdout();
    let mut j = json!({ "backend": backend.name(), "point": point_json(&p) });
    j["report"] = serde_json::to_value(&report).map_err(io::Error::other)?;
    if let Some(param) = a.surface {
        if a.values.is_empty() {
            return Err(Failure::Config("--surface needs --values".into()));
        }
        let surface = relative_change_surface(&backend, &spec, param, &a.values)?;
        j["surface"] = json!({
            "parameter": param.to_string(),
            "points": serde_json::to_value(&surface).map_err(io::Error::other)?,
        });
    }
    writeln!(out, "{j}")?;
    Ok(out.flush()?)
}

fn bench(config: &RunConfig, a: &BenchArgs) -> Outcome {
    let specs = bench_specs(a.bench_size, a.points)?;
    let sim = Simulator::new(config.solve_options());
    let store = closed_form_store(config)?;
    let report = benchmark_models(&sim, &store, &specs, a.repetitions)?;
    if report.unstable {
        log::warn!("timing spread exceeds half the median; speedup is unreliable");
    }
    let mut out = stdout();
    writeln!(out, "{}", serde_json::to_string(&report).map_err(io::Error::other)?)?;
    out.flush()?;
    match a.min_speedup {
        Some(floor) if report.speedup < floor => {
            Err(Failure::Gate(format!("speedup {:.1} below {floor}", report.speedup)))
        }
        _ => Ok(()),
    }
}

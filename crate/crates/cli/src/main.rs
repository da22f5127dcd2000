mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lattice_zeta::domains::{boundary_layer, build_domain, path_domain, Domain, Shape, Site};
use lattice_zeta::experiments::{
    run_dimension_sanity, run_g_fit, run_ledger_with, run_pi_table, FitShape,
    LedgerOptions, TraceBackend,
};
use lattice_zeta::kernel::{evolve_full, fit_qh_rate};
use lattice_zeta::operator::{assemble, DirichletOperator, WalkSource};
use lattice_zeta::report::{Metadata, OutputFormat, Report, ResultRow};
use lattice_zeta::spectra::{
    dense_spectrum, kirchhoff_check, zeta_exact_with, zeta_from_spectrum, zeta_hutchinson,
    ExactStrategy, SimpleGraph,
};
use lattice_zeta::walks::{
    builtin_walk, heat_constant, sample_environment, ConductanceEnvironment, Extent, StepSet,
    CONDUCTANCE_LAW, ENVIRONMENT_RNG,
};
use lattice_zeta::Error;

#[derive(Parser)]
#[command(name = "lattice-zeta", version, about = "Spectral zeta values of killed lattice walks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Out::Csv)]
    out: Out,
    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fill the runtime_ms column
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Out {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct WalkArgs {
    /// lsrw, srw, king, triangular or knight
    #[arg(long, default_value = "lsrw")]
    walk: String,
    #[arg(long)]
    laziness: Option<f64>,
    /// Random conductances `c1,c2` (nearest-neighbour walk)
    #[arg(long, value_parser = parse_pair)]
    conductances: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0)]
    env_seed: u64,
    /// Read the environment from a CSV weight dump
    #[arg(long)]
    env_in: Option<PathBuf>,
    #[arg(long)]
    env_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Square,
    Rect,
    Ball,
    Path,
}

#[derive(Args, Clone)]
struct DomainArgs {
    #[arg(long, value_enum, default_value_t = ShapeArg::Square)]
    shape: ShapeArg,
    /// Side length, radius or path length
    #[arg(long = "R", default_value_t = 10)]
    r: usize,
    /// Height of a rect
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Dense,
    Exact,
    Hutchinson,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Auto,
    Banded,
    Cg,
}

#[derive(Subcommand)]
enum Cmd {
    /// tr(L_H^{-1}) for one domain
    #[command(args_override_self = true)]
    Zeta {
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, value_enum, default_value_t = Method::Exact)]
        method: Method,
        #[arg(long, value_enum, default_value_t = Solver::Auto)]
        solver: Solver,
        #[arg(long, default_value_t = 256)]
        probes: usize,
        /// Matrix Market dump of P_H
        #[arg(long)]
        operator_out: Option<PathBuf>,
    },
    /// Finite-size pi estimates on squares
    #[command(args_override_self = true)]
    Pi {
        #[arg(long, value_delimiter = ',', default_value = "king")]
        walk: Vec<String>,
        #[arg(long = "R", value_delimiter = ',', default_value = "100")]
        r: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Method::Exact)]
        method: Method,
    },
    /// Regression Z = a N log N + b N over several sizes
    #[command(name = "fit-g", args_override_self = true)]
    FitG {
        #[arg(long, default_value = "lsrw")]
        walk: String,
        #[arg(long)]
        laziness: Option<f64>,
        #[arg(long = "R", value_delimiter = ',', default_value = "20,30,40,50,60,70,80,90,100")]
        r: Vec<usize>,
        #[arg(long, value_enum, default_value_t = FitShapeArg::Square)]
        shape: FitShapeArg,
    },
    /// Error-ledger measurements on a square
    #[command(args_override_self = true)]
    Ledger {
        #[arg(long, default_value = "lsrw")]
        walk: String,
        #[arg(long)]
        laziness: Option<f64>,
        #[arg(long = "R", default_value_t = 80)]
        r: usize,
        #[arg(long, default_value_t = 0.25)]
        eta: f64,
        /// Sum over every interior vertex
        #[arg(long)]
        full: bool,
        /// CSV of the layer partition
        #[arg(long)]
        layer_out: Option<PathBuf>,
    },
    /// Full-space return probabilities and the fitted constant
    #[command(name = "heat-constant", args_override_self = true)]
    HeatConstant {
        #[arg(long, default_value = "lsrw")]
        walk: String,
        #[arg(long)]
        laziness: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        tmax: usize,
        #[arg(long, value_parser = parse_site, default_value = "0,0")]
        origin: Site,
        /// Start of the fit window
        #[arg(long, default_value_t = 50)]
        t_min: usize,
        /// CSV of (t, p_t, t p_t)
        #[arg(long)]
        series_out: Option<PathBuf>,
    },
    /// Kirchhoff index by resistances and by spectrum
    #[command(args_override_self = true)]
    Kirchhoff {
        /// complete:N, path:N, cycle:N or random:N:P
        #[arg(long, default_value = "path:3")]
        graph: String,
    },
    /// Path and square traces against N^2 and N log N
    #[command(args_override_self = true)]
    Dimension,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitShapeArg {
    Square,
    Ball,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected c1,c2")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn parse_site(s: &str) -> Result<Site, String> {
    let (a, b) = s.split_once(',').ok_or("expected x,y")?;
    Ok(Site::new(
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

/// 1 for bad input, 2 for numerical or I/O failure.
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownWalk(_)
            | Error::InvalidSteps(_)
            | Error::InvalidLaziness(_)
            | Error::InvalidInterval { .. }
            | Error::InvalidRadius { .. }
            | Error::InvalidEta(_)
            | Error::NotInDomain(..)
            | Error::EnvironmentMismatch(..)
            | Error::InsufficientData(_)
            | Error::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let mut report = match &cli.cmd {
        Cmd::Zeta {
            walk,
            domain,
            method,
            solver,
            probes,
            operator_out,
        } => zeta(&cli.common, walk, domain, *method, *solver, *probes, operator_out.as_ref())?,
        Cmd::Pi { walk, r, method } => pi(&cli.common, walk, r, *method)?,
        Cmd::FitG {
            walk,
            laziness,
            r,
            shape,
        } => fit_g(&cli.common, walk, *laziness, r, *shape)?,
        Cmd::Ledger {
            walk,
            laziness,
            r,
            eta,
            full,
            layer_out,
        } => ledger(&cli.common, walk, *laziness, *r, *eta, *full, layer_out.as_ref())?,
        Cmd::HeatConstant {
            walk,
            laziness,
            tmax,
            origin,
            t_min,
            series_out,
        } => heat(walk, *laziness, *tmax, *origin, *t_min, series_out.as_ref())?,
        Cmd::Kirchhoff { graph } => kirchhoff(graph, cli.common.seed)?,
        Cmd::Dimension => dimension(&cli.common)?,
    };
    if cli.common.timing {
        let ms = started.elapsed().as_millis() as u64;
        for row in &mut report.rows {
            row.runtime_ms = Some(ms);
        }
    }
    let format = match cli.common.out {
        Out::Csv => OutputFormat::Csv,
        Out::Json => OutputFormat::Json,
    };
    match &cli.common.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            report.write(format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            report.write(format, &mut lock)?;
        }
    }
    Ok(())
}

fn shape_of(d: &DomainArgs) -> Shape {
    match d.shape {
        ShapeArg::Square => Shape::Square { side: d.r },
        ShapeArg::Rect => Shape::Rect {
            width: d.r,
            height: d.height.unwrap_or(d.r),
        },
        ShapeArg::Ball => Shape::Ball {
            center: Site::new(0, 0),
            radius: d.r,
        },
        ShapeArg::Path => Shape::Path { length: d.r },
    }
}

fn environment(w: &WalkArgs, dom: &Domain) -> Result<Option<ConductanceEnvironment>, Failure> {
    let env = if let Some(path) = &w.env_in {
        Some(ConductanceEnvironment::read_csv(BufReader::new(File::open(path)?))?)
    } else if let Some((c1, c2)) = w.conductances {
        let (mut wd, mut ht) = (0i64, 0i64);
        for s in dom.sites() {
            wd = wd.max(s.x);
            ht = ht.max(s.y);
        }
        Some(sample_environment(
            Extent::new(wd.max(1) as usize, ht.max(1) as usize),
            c1,
            c2,
            w.env_seed,
        )?)
    } else {
        None
    };
    if let (Some(env), Some(path)) = (&env, &w.env_out) {
        env.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(env)
}

fn zeta(
    common: &Common,
    w: &WalkArgs,
    d: &DomainArgs,
    method: Method,
    solver: Solver,
    probes: usize,
    operator_out: Option<&PathBuf>,
) -> Result<Report, Failure> {
    let rcm = w.conductances.is_some() || w.env_in.is_some();
    let walk = if rcm {
        builtin_walk("srw", w.laziness)?
    } else {
        builtin_walk(&w.walk, w.laziness)?
    };
    let shape = shape_of(d);
    let dom = match shape {
        Shape::Path { length } => path_domain(length)?,
        s => build_domain(s, &walk)?,
    };
    let env = environment(w, &dom)?;
    let op: DirichletOperator = match (&env, shape) {
        (Some(env), _) => assemble(
            WalkSource::Conductances {
                env,
                laziness: w.laziness.unwrap_or(0.0),
            },
            &dom,
        )?,
        (None, Shape::Path { .. }) => assemble(&StepSet::path_srw(), &dom)?,
        (None, _) => assemble(&walk, &dom)?,
    };
    if let Some(path) = operator_out {
        op.write_matrix_market(BufWriter::new(File::create(path)?))?;
    }
    let trace = match method {
        Method::Dense => zeta_from_spectrum(&dense_spectrum(&op)?),
        Method::Exact => {
            let strategy = match solver {
                Solver::Auto => ExactStrategy::Auto,
                Solver::Banded => ExactStrategy::Banded,
                Solver::Cg => ExactStrategy::ColumnCg,
            };
            zeta_exact_with(&op, common.tol, strategy)?
        }
        Method::Hutchinson => zeta_hutchinson(&op, probes, common.tol, common.seed)?,
    };
    let mut meta = Metadata::new("zeta", op.label())
        .with_seed(trace.seed)
        .with_tol(trace.tol)
        .with("laziness", op.laziness());
    if let Some(env) = &env {
        let (c1, c2) = env.bounds();
        meta = meta
            .with("conductance_law", CONDUCTANCE_LAW)
            .with("c1", c1)
            .with("c2", c2)
            .with("env_seed", env.seed())
            .with("env_rng", ENVIRONMENT_RNG);
    }
    if dom.is_restricted() {
        meta = meta.with("restricted", "component of the center");
    }
    let mut notes = format!("solver={};iterations={}", trace.solver, trace.iterations);
    if let Some(p) = trace.probes {
        notes.push_str(&format!(";probes={p}"));
    }
    if let Some(res) = trace.worst_residual {
        notes.push_str(&format!(";worst_residual={res:e}"));
    }
    let mut report = Report::new(meta);
    report.push(ResultRow {
        walk: op.label().to_string(),
        shape: shape.kind().into(),
        r: Some(d.r),
        n: Some(dom.len()),
        method: trace.method.name().into(),
        value: trace.value,
        stderr: trace.stderr,
        seed: trace.seed,
        tol: trace.tol,
        runtime_ms: None,
        notes,
    });
    Ok(report)
}

fn pi(common: &Common, walks: &[String], rs: &[usize], method: Method) -> Result<Report, Failure> {
    let backend = match method {
        Method::Dense => TraceBackend::Dense,
        Method::Exact => TraceBackend::Exact,
        Method::Hutchinson => {
            return Err(Failure::Usage("pi supports --method dense or exact".into()));
        }
    };
    let steps: Vec<StepSet> = walks
        .iter()
        .map(|w| builtin_walk(w, None))
        .collect::<lattice_zeta::Result<_>>()?;
    let estimates = run_pi_table(&steps, rs, backend, common.tol)?;
    let mut report = Report::new(
        Metadata::new("pi", &walks.join(",")).with_tol(Some(common.tol)),
    );
    for e in estimates {
        report.push(ResultRow {
            walk: e.walk.clone(),
            shape: "square".into(),
            r: Some(e.r),
            n: Some(e.n),
            method: e.trace.method.name().into(),
            value: e.pi_approx(),
            stderr: None,
            seed: None,
            tol: e.trace.tol,
            runtime_ms: None,
            notes: format!(
                "trace={};prefactor={};abs_error={:e}",
                e.trace.value,
                e.prefactor,
                e.abs_error()
            ),
        });
    }
    Ok(report)
}

fn fit_g(
    common: &Common,
    walk: &str,
    laziness: Option<f64>,
    rs: &[usize],
    shape: FitShapeArg,
) -> Result<Report, Failure> {
    let steps = builtin_walk(walk, laziness)?;
    let (fit_shape, kind) = match shape {
        FitShapeArg::Square => (FitShape::Square, "square"),
        FitShapeArg::Ball => (FitShape::Ball, "ball"),
    };
    let fit = run_g_fit(&steps, rs, fit_shape, common.tol)?;
    let mut report = Report::new(
        Metadata::new("fit-g", steps.name())
            .with_tol(Some(common.tol))
            .with("laziness", steps.laziness()),
    );
    for (p, res) in fit.points.iter().zip(&fit.residuals) {
        report.push(ResultRow {
            walk: fit.walk.clone(),
            shape: kind.into(),
            r: Some(p.r),
            n: Some(p.n),
            method: "exact".into(),
            value: p.z,
            tol: Some(common.tol),
            notes: format!("residual={res}"),
            ..Default::default()
        });
    }
    let mut notes = format!(
        "fit=a*NlogN+b*N;b={};target={};rel_error={:e}",
        fit.b,
        fit.target,
        fit.relative_error()
    );
    if let Some(bc) = fit.boundary_corrected {
        notes.push_str(&format!(";boundary_corrected_a={}", bc.a));
    }
    report.push(ResultRow {
        walk: fit.walk.clone(),
        shape: kind.into(),
        method: "fit".into(),
        value: fit.a,
        stderr: Some(fit.a_stderr),
        tol: Some(common.tol),
        notes,
        ..Default::default()
    });
    Ok(report)
}

fn ledger(
    common: &Common,
    walk: &str,
    laziness: Option<f64>,
    r: usize,
    eta: f64,
    full: bool,
    layer_out: Option<&PathBuf>,
) -> Result<Report, Failure> {
    let steps = builtin_walk(walk, laziness)?;
    let dom = build_domain(Shape::Square { side: r }, &steps)?;
    if let Some(path) = layer_out {
        let part = boundary_layer(&dom, eta)?;
        part.write_csv(&dom, BufWriter::new(File::create(path)?))?;
    }
    let rows = run_ledger_with(
        &steps,
        r,
        eta,
        LedgerOptions {
            full,
            ..LedgerOptions::default()
        },
    )?;
    let mut report = Report::new(
        Metadata::new("ledger", steps.name())
            .with_tol(Some(common.tol))
            .with("eta", eta)
            .with("sampling", if full { "all interior" } else { "stratified <= 64" }),
    );
    for row in rows {
        report.push(ResultRow {
            walk: steps.name().into(),
            shape: "square".into(),
            r: Some(r),
            n: Some(dom.len()),
            method: "ledger".into(),
            value: row.measured,
            notes: format!("{} | {} | {}", row.source, row.quantity, row.bound),
            ..Default::default()
        });
    }
    Ok(report)
}

fn heat(
    walk: &str,
    laziness: Option<f64>,
    tmax: usize,
    origin: Site,
    t_min: usize,
    series_out: Option<&PathBuf>,
) -> Result<Report, Failure> {
    let steps = builtin_walk(walk, laziness)?;
    let target = heat_constant(&steps.covariance())?;
    let series = evolve_full(&steps, origin, tmax)?;
    if let Some(path) = series_out {
        series.write_csv(BufWriter::new(File::create(path)?))?;
    }
    let mut report = Report::new(
        Metadata::new("heat-constant", steps.name())
            .with("laziness", steps.laziness())
            .with("origin", origin)
            .with("tmax", tmax),
    );
    let (t, tp) = if series.bipartite && tmax % 2 == 1 {
        (tmax - 1, (tmax - 1) as f64 * series.values[tmax - 1])
    } else {
        (tmax, tmax as f64 * series.values[tmax])
    };
    report.push(ResultRow {
        walk: steps.name().into(),
        shape: "z2".into(),
        method: "evolve-full".into(),
        value: tp,
        notes: format!("t={t};t_p_t;target={target};deviation={:e}", tp - target),
        ..Default::default()
    });
    if let Ok(fit) = fit_qh_rate(&series, t_min) {
        report.push(ResultRow {
            walk: steps.name().into(),
            shape: "z2".into(),
            method: "qh-fit".into(),
            value: fit.g_hat,
            notes: format!(
                "t_min={t_min};delta={};c={};rms={:e};loglog_slope={}",
                fit.delta_hat, fit.c_hat, fit.rms_residual, fit.loglog_slope
            ),
            ..Default::default()
        });
    }
    Ok(report)
}

fn parse_graph(spec: &str, seed: u64) -> Result<SimpleGraph, Failure> {
    let bad = || Failure::Usage(format!("bad graph spec {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let n: usize = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    match (parts[0], parts.len()) {
        ("complete", 2) => Ok(SimpleGraph::complete(n)),
        ("path", 2) => Ok(SimpleGraph::path(n)),
        ("cycle", 2) if n >= 3 => Ok(SimpleGraph::cycle(n)),
        ("random", 3) => {
            let p: f64 = parts[2].parse().map_err(|_| bad())?;
            Ok(SimpleGraph::random_connected(n, p, seed))
        }
        _ => Err(bad()),
    }
}

fn kirchhoff(spec: &str, seed: u64) -> Result<Report, Failure> {
    let graph = parse_graph(spec, seed)?;
    let k = kirchhoff_check(&graph)?;
    let random = spec.starts_with("random");
    let mut report = Report::new(Metadata::new("kirchhoff", spec).with_seed(random.then_some(seed)));
    for (method, value, notes) in [
        ("resistance", k.k_resistance, "sum over unordered pairs of R_eff"),
        ("spectral", k.k_spectral, "n * sum 1/mu_k(L)"),
        ("volume", k.k_volume, "vol * sum 1/lambda_k(L_rw), printed normalisation"),
    ] {
        report.push(ResultRow {
            walk: spec.into(),
            shape: "graph".into(),
            n: Some(graph.n()),
            method: method.into(),
            value,
            seed: random.then_some(seed),
            notes: notes.into(),
            ..Default::default()
        });
    }
    Ok(report)
}

fn dimension(common: &Common) -> Result<Report, Failure> {
    let rows = run_dimension_sanity()?;
    let mut report = Report::new(Metadata::new("dimension", "srw1d,lsrw").with_tol(Some(common.tol)));
    for row in rows {
        let (shape, ratio) = if row.dimension == 1 {
            ("path", "Z/N^2")
        } else {
            ("square", "Z/(N log N)")
        };
        report.push(ResultRow {
            walk: row.walk,
            shape: shape.into(),
            r: Some(row.r),
            n: Some(row.n),
            method: "exact".into(),
            value: row.z,
            tol: Some(common.tol),
            notes: format!("{ratio}={}", row.ratio),
            ..Default::default()
        });
    }
    Ok(report)
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 numerical divergence, 4 unsupported regime.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, GridConfig, SolverSettings};
use crate::control::{verify_value_1d, verify_value_2d, SimConfig, TrajectoryBatch, ValueComparison};
use crate::diagnostics::{
    barrier_envelope_1d, center_slice, clamp_into_envelope, diagnose_1d, diagnose_2d, optimal_drift_1d,
    optimal_drift_2d, powerlaw_fit_1d, residual_1d, residual_2d, semilog_fit_1d, DiagnosticsOptions,
    DiagnosticsReport, FitResult,
};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_field_1d, write_field_2d, write_json, write_rows, write_table};
use crate::mesh::{hessian_min_eigenvalue_2d, Field1D};
use crate::model::{
    asymptotic_constants, blowup_exponent, classify_regime, critical_constant, ProblemSpec, RegimeKind,
    DEFAULT_CRITICAL_TOL,
};
use crate::solver::{solve_1d, solve_2d, InitMode, SolveReport};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HJB_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "hjb-out";

#[derive(Parser, Debug)]
#[command(name = "hjb-blowup", version, about = "Boundary blow-up HJB solver and verification battery")]
struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $HJB_OUT_DIR, then ./hjb-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct ProblemArgs {
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    f_level: Option<f64>,
    #[arg(long)]
    b0: Option<f64>,
    #[arg(long)]
    l0: Option<f64>,
    /// Boundary gradient scale |∇v| used in C*.
    #[arg(long)]
    grad_scale_m: Option<f64>,
}

#[derive(Args, Debug, Default, Clone)]
struct GridArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    half_width: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    BoundaryConstant,
    Subsolution,
}

#[derive(Args, Debug, Default, Clone)]
struct SolverArgs {
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Weight on the old iterate, in [0, 1).
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    lambda_factor: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    pointwise_lambda: bool,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    subsolution_fraction: Option<f64>,
    /// Run the high-order regime with the reference arithmetic.
    #[arg(long)]
    compat_high_order: bool,
}

#[derive(Args, Debug, Default, Clone)]
struct SimArgs {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Comma-separated start coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    #[arg(long)]
    reflect_clip: Option<f64>,
    #[arg(long)]
    drift_scale: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print regime, γ, C* and ξ0.
    Constants {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Solve the 1D problem.
    Solve1d {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Comma-separated q values solved concurrently instead of one run.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
    /// Solve the 2D disk problem.
    Solve2d {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve the three regime cases q = 1.6, 2.5, 3.0 at the configured β.
    Regimes {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Scaling regressions of the 1D solution.
    Analyze {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 0.01)]
        window_min: f64,
        #[arg(long, default_value_t = 0.3)]
        window_max: f64,
    },
    /// Residual, barrier, convexity and drift checks.
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        dim: Option<u8>,
        /// Clamp into the barrier envelope before counting violations.
        #[arg(long)]
        clamp: bool,
        /// Residual exclusion band as a multiple of δ.
        #[arg(long, default_value_t = 2.0)]
        band_factor: f64,
    },
    /// Monte Carlo paths under the feedback drift.
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        dim: Option<u8>,
        /// Also write per-path records.
        #[arg(long)]
        write_paths: bool,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 1,
        Error::Divergence { .. } => 3,
        Error::UnsupportedRegime(_) => 4,
        _ => 2,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn apply_problem(spec: &mut ProblemSpec, a: &ProblemArgs) {
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { spec.$f = v; })* };
    }
    set!(q, beta, alpha, f_level, b0, l0, grad_scale_m);
}

fn apply_grid(grid: &mut GridConfig, a: &GridArgs) {
    if a.n.is_some() {
        grid.n = a.n;
    }
    if let Some(d) = a.delta {
        grid.delta = d;
    }
    if let Some(h) = a.half_width {
        grid.half_width = h;
    }
}

fn solver_overrides(a: &SolverArgs) -> SolverSettings {
    SolverSettings {
        max_iter: a.max_iter,
        tol: a.tol,
        damping: a.damping,
        lambda_factor: a.lambda_factor,
        pointwise_lambda: a.pointwise_lambda.then_some(true),
        grad_clip: a.grad_clip,
        init_mode: a.init.map(|i| match i {
            InitArg::BoundaryConstant => InitMode::BoundaryConstant,
            InitArg::Subsolution => InitMode::Subsolution,
        }),
        subsolution_fraction: a.subsolution_fraction,
        supersolution_fraction: None,
        compat_high_order: a.compat_high_order.then_some(true),
    }
}

fn apply_sim(cfg: &mut ExperimentConfig, a: &SimArgs) {
    let dim = cfg.grid.dim as usize;
    let from_file = cfg.sim.is_some();
    let sim = cfg.sim.get_or_insert_with(SimConfig::default);
    if !from_file && a.start.is_none() {
        sim.start_point = vec![0.0; dim];
    }
    macro_rules! set {
        ($($arg:ident => $f:ident),*) => { $(if let Some(v) = a.$arg { sim.$f = v; })* };
    }
    set!(paths => n_paths, seed => seed, horizon => horizon_t, dt => dt,
         reflect_clip => reflect_clip, drift_scale => drift_scale, noise_scale => noise_scale);
    if let Some(s) = &a.start {
        sim.start_point = s.clone();
    }
}

struct Context {
    cfg: ExperimentConfig,
    explicit_out: Option<PathBuf>,
}

impl Context {
    fn build(
        cli_config: Option<&Path>,
        out: Option<PathBuf>,
        problem: &ProblemArgs,
        grid: &GridArgs,
        solver: &SolverArgs,
        dim: Option<u8>,
    ) -> Result<Self> {
        let mut cfg = match cli_config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        apply_problem(&mut cfg.problem, problem);
        apply_grid(&mut cfg.grid, grid);
        if let Some(d) = dim {
            cfg.grid.dim = d;
        }
        cfg.solver = cfg.solver.merged(&solver_overrides(solver));
        Ok(Self { cfg, explicit_out: out })
    }

    fn out_dir(&self) -> PathBuf {
        self.explicit_out
            .clone()
            .or_else(|| self.cfg.output.dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
    }

    /// Resolved configuration, echoed into every summary.
    fn echo(&self) -> Value {
        let mut grid = self.cfg.grid.clone();
        grid.n = Some(grid.points());
        let mut m = Map::new();
        m.insert("problem".into(), to_value(&self.cfg.problem));
        m.insert("solver".into(), to_value(&self.cfg.solver_config()));
        m.insert("grid".into(), to_value(&grid));
        if let Some(sim) = &self.cfg.sim {
            m.insert("sim".into(), to_value(sim));
        }
        m.insert("output_dir".into(), json!(self.out_dir().display().to_string()));
        m.insert("write_fields".into(), json!(self.cfg.output.write_fields));
        Value::Object(m)
    }

    fn prepare_out(&self) -> Result<PathBuf> {
        let dir = self.out_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn run(cli: Cli) -> Result<()> {
    let cfg_path = cli.config.as_deref();
    match &cli.command {
        Command::Constants { problem } => {
            let ctx = Context::build(cfg_path, None, problem, &GridArgs::default(), &SolverArgs::default(), None)?;
            ctx.cfg.problem.validate()?;
            println!("{}", constants_line(&ctx.cfg.problem)?);
            Ok(())
        }
        Command::Solve1d {
            problem,
            grid,
            solver,
            sweep,
        } => {
            let ctx = Context::build(cfg_path, cli.out.clone(), problem, grid, solver, Some(1))?;
            ctx.cfg.validate()?;
            match sweep {
                Some(qs) => run_sweep(&ctx, qs),
                None => run_solve1d(&ctx),
            }
        }
        Command::Solve2d { problem, grid, solver } => {
            let ctx = Context::build(cfg_path, cli.out.clone(), problem, grid, solver, Some(2))?;
            ctx.cfg.validate()?;
            run_solve2d(&ctx)
        }
        Command::Regimes { problem, grid, solver } => {
            let ctx = Context::build(cfg_path, cli.out.clone(), problem, grid, solver, Some(1))?;
            ctx.cfg.validate()?;
            run_regimes(&ctx)
        }
        Command::Analyze {
            problem,
            grid,
            solver,
            window_min,
            window_max,
        } => {
            let ctx = Context::build(cfg_path, cli.out.clone(), problem, grid, solver, Some(1))?;
            ctx.cfg.validate()?;
            check_window(*window_min, *window_max)?;
            run_analyze(&ctx, (*window_min, *window_max))
        }
        Command::Verify {
            problem,
            grid,
            solver,
            dim,
            clamp,
            band_factor,
        } => {
            let ctx = Context::build(cfg_path, cli.out.clone(), problem, grid, solver, *dim)?;
            ctx.cfg.validate()?;
            if !(*band_factor >= 0.0) {
                return Err(Error::Config("band_factor must be nonnegative".into()));
            }
            let opts = DiagnosticsOptions {
                clamp: *clamp,
                band_factor: *band_factor,
                ..DiagnosticsOptions::default()
            };
            if ctx.cfg.grid.dim == 2 {
                run_verify2d(&ctx, &opts)
            } else {
                run_verify1d(&ctx, &opts)
            }
        }
        Command::Simulate {
            problem,
            grid,
            solver,
            sim,
            dim,
            write_paths,
        } => {
            let mut ctx = Context::build(cfg_path, cli.out.clone(), problem, grid, solver, *dim)?;
            if !matches!(ctx.cfg.grid.dim, 1 | 2) {
                return Err(Error::Config(format!("dim must be 1 or 2, got {}", ctx.cfg.grid.dim)));
            }
            apply_sim(&mut ctx.cfg, sim);
            ctx.cfg.validate()?;
            run_simulate(&ctx, *write_paths)
        }
    }
}

fn check_window(lo: f64, hi: f64) -> Result<()> {
    if lo >= 0.0 && lo < hi {
        Ok(())
    } else {
        Err(Error::Config(format!("fit window needs 0 <= min < max, got ({lo}, {hi})")))
    }
}

/// `regime=... gamma=... c_star=... xi0=...`; `n/a` where a constant does
/// not exist.
pub fn constants_line(spec: &ProblemSpec) -> Result<String> {
    let regime = classify_regime(spec, DEFAULT_CRITICAL_TOL)?;
    let na = || "n/a".to_string();
    let gamma = regime.gamma.map(|g| g.to_string()).unwrap_or_else(na);
    let c_star = critical_constant(spec, &regime).map(|c| c.to_string()).unwrap_or_else(|_| na());
    let xi0 = asymptotic_constants(spec).map(|c| c.xi0.to_string()).unwrap_or_else(|_| na());
    let mut line = format!("regime={} gamma={gamma} c_star={c_star} xi0={xi0}", regime.kind);
    if regime.kind == RegimeKind::HighOrder {
        line.push_str(&format!(" balance_exponent={}", blowup_exponent(spec.q, spec.beta)));
    }
    Ok(line)
}

fn constants_json(spec: &ProblemSpec) -> Map<String, Value> {
    let mut m = Map::new();
    let regime = classify_regime(spec, DEFAULT_CRITICAL_TOL).ok();
    m.insert("regime".into(), json!(regime.map(|r| r.kind.to_string())));
    m.insert("gamma".into(), json!(regime.and_then(|r| r.gamma)));
    m.insert(
        "c_star".into(),
        json!(regime.and_then(|r| critical_constant(spec, &r).ok())),
    );
    m.insert("xi0".into(), json!(asymptotic_constants(spec).ok().map(|c| c.xi0)));
    m
}

fn report_json<F>(rep: &SolveReport<F>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("iterations_used".into(), json!(rep.iterations_used));
    m.insert("converged".into(), json!(rep.converged));
    m.insert("boundary_value".into(), json!(rep.boundary_value));
    m.insert("negative_points".into(), json!(rep.negative_points));
    m.insert("theory_unsupported".into(), json!(rep.theory_unsupported));
    m.insert("final_relative_change".into(), json!(rep.relative_change_history.last()));
    m
}

fn summary(ctx: &Context, command: &str, mut body: Map<String, Value>) -> Value {
    body.insert("command".into(), json!(command));
    body.insert("config".into(), ctx.echo());
    Value::Object(body)
}

fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    write_table(
        path,
        &["iteration", "relative_change"],
        history.iter().enumerate().map(|(k, &h)| vec![(k + 1) as f64, h]),
    )
}

fn run_solve1d(ctx: &Context) -> Result<()> {
    let grid = ctx.cfg.grid.grid_1d()?;
    let rep = solve_1d(&ctx.cfg.problem, &grid, &ctx.cfg.solver_config())?;
    let dir = ctx.prepare_out()?;
    if ctx.cfg.output.write_fields {
        write_field_1d(&dir.join("solution_1d.csv"), &grid, &rep.solution)?;
        write_history(&dir.join("history_1d.csv"), &rep.relative_change_history)?;
    }
    let mut body = constants_json(&ctx.cfg.problem);
    body.extend(report_json(&rep));
    let (i_min, u_min) = argmin(&rep.solution.values);
    body.insert("u_min".into(), json!(u_min));
    body.insert("x_at_min".into(), json!(grid.x[i_min]));
    write_json(&dir.join("summary_solve1d.json"), &summary(ctx, "solve1d", body))
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
}

fn run_sweep(ctx: &Context, qs: &[f64]) -> Result<()> {
    if qs.is_empty() {
        return Err(Error::Config("--sweep needs at least one q".into()));
    }
    let grid = ctx.cfg.grid.grid_1d()?;
    let config = ctx.cfg.solver_config();
    let specs: Vec<ProblemSpec> = qs
        .iter()
        .map(|&q| {
            let spec = ProblemSpec { q, ..ctx.cfg.problem };
            spec.validate().map(|_| spec)
        })
        .collect::<Result<_>>()?;
    let results: Vec<(ProblemSpec, Result<SolveReport<Field1D>>)> = specs
        .par_iter()
        .map(|spec| (*spec, solve_1d(spec, &grid, &config)))
        .collect();

    let dir = ctx.prepare_out()?;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for (spec, res) in &results {
        let mut m = constants_json(spec);
        m.insert("q".into(), json!(spec.q));
        let (status, converged, iters, ub, u_min) = match res {
            Ok(rep) => {
                m.extend(report_json(rep));
                let u_min = argmin(&rep.solution.values).1;
                m.insert("u_min".into(), json!(u_min));
                ("ok".to_string(), rep.converged, rep.iterations_used, rep.boundary_value, u_min)
            }
            Err(e) => {
                m.insert("error".into(), json!(e.to_string()));
                (format!("error({})", exit_code(e)), false, 0, f64::NAN, f64::NAN)
            }
        };
        m.insert("status".into(), json!(status));
        runs.push(Value::Object(m));
        rows.push(vec![
            fmt_f64(spec.q),
            status,
            u8::from(converged).to_string(),
            iters.to_string(),
            fmt_f64(ub),
            fmt_f64(u_min),
        ]);
    }
    write_rows(
        &dir.join("sweep.csv"),
        &["q", "status", "converged", "iterations", "boundary_value", "u_min"],
        rows,
    )?;
    let mut body = Map::new();
    body.insert("runs".into(), Value::Array(runs));
    write_json(&dir.join("summary_sweep.json"), &summary(ctx, "solve1d-sweep", body))
}

fn run_solve2d(ctx: &Context) -> Result<()> {
    let grid = ctx.cfg.grid.grid_2d()?;
    let rep = solve_2d(&ctx.cfg.problem, &grid, &ctx.cfg.solver_config())?;
    let dir = ctx.prepare_out()?;
    if ctx.cfg.output.write_fields {
        write_field_2d(&dir.join("solution_2d.csv"), &grid, &rep.solution)?;
        write_history(&dir.join("history_2d.csv"), &rep.relative_change_history)?;
    }
    let mut body = constants_json(&ctx.cfg.problem);
    body.extend(report_json(&rep));
    let interior_min = (0..grid.len())
        .filter(|&k| grid.interior[k])
        .map(|k| rep.solution.values[k])
        .fold(f64::INFINITY, f64::min);
    body.insert("u_min".into(), json!(interior_min));
    write_json(&dir.join("summary_solve2d.json"), &summary(ctx, "solve2d", body))
}

/// The three regime cases of the 1D comparison.
pub const REGIME_CASES: [f64; 3] = [1.6, 2.5, 3.0];

fn run_regimes(ctx: &Context) -> Result<()> {
    let grid = ctx.cfg.grid.grid_1d()?;
    let config = ctx.cfg.solver_config();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for q in REGIME_CASES {
        let spec = ProblemSpec { q, ..ctx.cfg.problem };
        let mut m = constants_json(&spec);
        m.insert("q".into(), json!(q));
        match solve_1d(&spec, &grid, &config) {
            Ok(rep) => {
                m.extend(report_json(&rep));
                for (x, u) in grid.x.iter().zip(&rep.solution.values) {
                    rows.push(vec![q, *x, *u]);
                }
            }
            Err(Error::UnsupportedRegime(kind)) => {
                m.insert(
                    "skipped".into(),
                    json!(format!("{kind} regime has no barrier constant; pass --compat-high-order to run it")),
                );
            }
            Err(e) => return Err(e),
        }
        runs.push(Value::Object(m));
    }
    let dir = ctx.prepare_out()?;
    write_table(&dir.join("regimes.csv"), &["q", "x", "u"], rows)?;
    let mut body = Map::new();
    body.insert("runs".into(), Value::Array(runs));
    write_json(&dir.join("summary_regimes.json"), &summary(ctx, "regimes", body))
}

fn fit_json(fit: Option<FitResult>) -> Value {
    fit.map(|f| to_value(&f)).unwrap_or(Value::Null)
}

fn run_analyze(ctx: &Context, window: (f64, f64)) -> Result<()> {
    let grid = ctx.cfg.grid.grid_1d()?;
    let rep = solve_1d(&ctx.cfg.problem, &grid, &ctx.cfg.solver_config())?;
    let power = powerlaw_fit_1d(&rep.solution, &grid, window);
    let semi = semilog_fit_1d(&rep.solution, &grid, window);
    if let (Err(e), Err(_)) = (&power, &semi) {
        return Err(Error::Config(format!("no fit possible: {e}")));
    }
    let dir = ctx.prepare_out()?;
    let d = grid.distance();
    write_table(
        &dir.join("scale.csv"),
        &["x", "d", "u", "log_d", "log_u", "log_inv_d"],
        (0..grid.n)
            .filter(|&i| d[i] > window.0 && d[i] < window.1)
            .map(|i| {
                let u = rep.solution.values[i];
                vec![grid.x[i], d[i], u, d[i].ln(), u.ln(), (1.0 / d[i]).ln()]
            }),
    )?;
    let mut body = constants_json(&ctx.cfg.problem);
    body.extend(report_json(&rep));
    body.insert("powerlaw_fit".into(), fit_json(power.ok()));
    body.insert("semilog_fit".into(), fit_json(semi.ok()));
    write_json(&dir.join("summary_analyze.json"), &summary(ctx, "analyze", body))
}

fn verify_body(spec: &ProblemSpec, diag: &DiagnosticsReport) -> Map<String, Value> {
    let mut m = constants_json(spec);
    let gradient_dominant = classify_regime(spec, DEFAULT_CRITICAL_TOL)
        .map(|r| r.kind == RegimeKind::GradientDominant)
        .unwrap_or(false);
    let (kind, fit) = if gradient_dominant {
        ("power-law", diag.powerlaw_fit)
    } else {
        ("semi-log", diag.semilog_fit)
    };
    m.insert("fit_kind".into(), json!(kind));
    m.insert("slope".into(), json!(fit.map(|f| f.slope)));
    m.insert("r2".into(), json!(fit.map(|f| f.r_squared)));
    m.insert("max_residual".into(), json!(diag.max_residual_interior));
    m.insert("residual_nonfinite".into(), json!(diag.residual_nonfinite));
    m.insert("convexity_fraction".into(), json!(diag.convexity_fraction));
    m.insert("barrier_violations".into(), json!(diag.barrier_violations));
    m.insert("drift_min".into(), json!(diag.drift_min));
    m.insert("drift_max".into(), json!(diag.drift_max));
    m.insert("diagnostics".into(), to_value(diag));
    m
}

fn run_verify1d(ctx: &Context, opts: &DiagnosticsOptions) -> Result<()> {
    let spec = &ctx.cfg.problem;
    let grid = ctx.cfg.grid.grid_1d()?;
    let rep = solve_1d(spec, &grid, &ctx.cfg.solver_config())?;
    let diag = diagnose_1d(spec, &grid, &rep, opts);
    let u = &rep.solution.values;
    let res = residual_1d(spec, &grid, &rep.solution, Some(rep.boundary_value));
    let drift = optimal_drift_1d(spec, &grid, &rep.solution);
    let envelope = barrier_envelope_1d(spec, &grid, opts.plus, opts.minus).ok();

    let dir = ctx.prepare_out()?;
    if let Some((up, lo)) = &envelope {
        let shown = if opts.clamp {
            clamp_into_envelope(u, &lo.values, &up.values)
        } else {
            u.clone()
        };
        write_table(
            &dir.join("verify_barriers.csv"),
            &["x", "u", "lower", "upper"],
            (0..grid.n).map(|i| vec![grid.x[i], shown[i], lo.values[i], up.values[i]]),
        )?;
    }
    let h2 = grid.dx * grid.dx;
    write_table(
        &dir.join("verify_convexity.csv"),
        &["x", "u_xx"],
        (1..grid.n - 1).map(|i| vec![grid.x[i], (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2]),
    )?;
    write_table(
        &dir.join("verify_drift.csv"),
        &["x", "xi"],
        (0..grid.n).map(|i| vec![grid.x[i], drift.field.values[i]]),
    )?;
    let d = grid.distance();
    write_table(
        &dir.join("verify_residual.csv"),
        &["x", "d", "residual"],
        (0..grid.n).map(|i| vec![grid.x[i], d[i], res.field.values[i]]),
    )?;
    if ctx.cfg.output.write_fields {
        write_field_1d(&dir.join("solution_1d.csv"), &grid, &rep.solution)?;
    }
    let mut body = verify_body(spec, &diag);
    body.extend(report_json(&rep));
    body.insert("clamped".into(), json!(opts.clamp));
    write_json(&dir.join("summary_verify1d.json"), &summary(ctx, "verify", body))
}

fn run_verify2d(ctx: &Context, opts: &DiagnosticsOptions) -> Result<()> {
    let spec = &ctx.cfg.problem;
    let grid = ctx.cfg.grid.grid_2d()?;
    let rep = solve_2d(spec, &grid, &ctx.cfg.solver_config())?;
    let diag = diagnose_2d(spec, &grid, &rep, opts);
    let u = &rep.solution;
    let res = residual_2d(spec, &grid, u);
    let lam = hessian_min_eigenvalue_2d(u, &grid);
    let (d1, d2) = optimal_drift_2d(spec, &grid, u).field;

    let dir = ctx.prepare_out()?;
    write_rows(
        &dir.join("verify2d_field.csv"),
        &["x1", "x2", "u", "interior", "lambda_min", "drift1", "drift2", "residual"],
        (0..grid.len()).map(|k| {
            let (x1, x2) = grid.coords(k);
            vec![
                fmt_f64(x1),
                fmt_f64(x2),
                fmt_f64(u.values[k]),
                u8::from(grid.interior[k]).to_string(),
                fmt_f64(lam.values[k]),
                fmt_f64(d1.values[k]),
                fmt_f64(d2.values[k]),
                fmt_f64(res.field.values[k]),
            ]
        }),
    )?;
    let (d, vals) = center_slice(u, &grid);
    let barrier = rep.barrier;
    write_table(
        &dir.join("verify2d_slice.csv"),
        &["d", "u", "barrier"],
        d.iter().zip(&vals).map(|(&d, &u)| {
            let r = 1.0 - d;
            let b = barrier
                .map(|b| b.at((1.0 - r * r).max(grid.v_floor)))
                .unwrap_or(f64::NAN);
            vec![d, u, b]
        }),
    )?;
    let mut body = verify_body(spec, &diag);
    body.extend(report_json(&rep));
    body.insert("clamped".into(), json!(opts.clamp));
    write_json(&dir.join("summary_verify2d.json"), &summary(ctx, "verify", body))
}

fn run_simulate(ctx: &Context, write_paths: bool) -> Result<()> {
    let spec = &ctx.cfg.problem;
    let sim = ctx.cfg.sim.clone().unwrap_or_default();
    let (cmp, batch): (ValueComparison, TrajectoryBatch) = if ctx.cfg.grid.dim == 2 {
        let grid = ctx.cfg.grid.grid_2d()?;
        let rep = solve_2d(spec, &grid, &ctx.cfg.solver_config())?;
        verify_value_2d(spec, &grid, &rep.solution, &sim)?
    } else {
        let grid = ctx.cfg.grid.grid_1d()?;
        let rep = solve_1d(spec, &grid, &ctx.cfg.solver_config())?;
        verify_value_1d(spec, &grid, &rep.solution, &sim)?
    };
    let dir = ctx.prepare_out()?;
    if write_paths {
        write_rows(
            &dir.join("paths.csv"),
            &["path", "exited", "cost", "exit_time"],
            batch.paths.iter().enumerate().map(|(i, p)| {
                vec![
                    i.to_string(),
                    u8::from(p.exited).to_string(),
                    fmt_f64(p.cost),
                    p.exit_time.map(fmt_f64).unwrap_or_default(),
                ]
            }),
        )?;
    }
    let mut body = Map::new();
    body.insert("exit_fraction".into(), json!(batch.exit_fraction));
    body.insert("cost_mean".into(), json!(cmp.cost_mean));
    body.insert("cost_stderr".into(), json!(cmp.cost_stderr));
    body.insert("u_at_start".into(), json!(cmp.u_at_start));
    body.insert("ratio".into(), json!(cmp.ratio));
    body.insert("max_fenchel_gap".into(), json!(batch.max_fenchel_gap));
    write_json(&dir.join("summary_simulate.json"), &summary(ctx, "simulate", body))
}

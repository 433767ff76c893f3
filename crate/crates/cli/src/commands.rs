use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use qnewton::linalg::distance;
use qnewton::polysys::{
    complex_to_real, parse_complex_system, parse_system, solve_system, tau0, uniform_starts,
    FoundPoint, SolveOptions,
};
use qnewton::stepper::estimate_order_from_errors;
use qnewton::{run, Error, RunResult, Termination};

use crate::bench::BenchSummary;
use crate::config::RunConfig;
use crate::trace::{fmt_f64, Trace};
use crate::{
    CliError, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INSUFFICIENT_DATA, EXIT_MAX_ITERATIONS,
    EXIT_NUMERIC_FAILURE, EXIT_OK,
};

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.12e}")).collect();
    format!("({})", parts.join(", "))
}

fn exit_code(t: &Termination) -> i32 {
    match t {
        Termination::GradToleranceMet => EXIT_OK,
        Termination::MaxIterations => EXIT_MAX_ITERATIONS,
        Termination::Diverged => EXIT_DIVERGED,
        Termination::NumericFailure(_) => EXIT_NUMERIC_FAILURE,
    }
}

fn report_error(err: &mut dyn Write, e: &CliError) -> i32 {
    let _ = writeln!(err, "error: {e}");
    EXIT_CONFIG
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_summary(out: &mut dyn Write, r: &RunResult) -> std::io::Result<()> {
    writeln!(out, "termination: {}", r.termination)?;
    writeln!(out, "iterations: {}", r.iterations())?;
    writeln!(out, "armijo trials: {}", r.total_armijo_trials())?;
    writeln!(out, "final f: {}", fmt_f64(r.final_f))?;
    writeln!(out, "final |grad f|: {}", fmt_f64(r.final_grad_norm))?;
    writeln!(out, "final x: {}", fmt_vec(&r.final_x))?;
    let rep = &r.final_report;
    writeln!(out, "classification: {}", rep.classification.as_str())?;
    writeln!(
        out,
        "hessian eigenvalues: {}",
        fmt_vec(&rep.hessian_eigenvalues)
    )
}

/// `qnewton run <config.json>`: one run, trace CSV plus a summary.
///
/// The trace goes to the configured `output` path, or to `out` when none is
/// set (the summary then goes to `err`).
pub fn cmd_run(config_path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match run_inner(config_path, out, err) {
        Ok(code) => code,
        Err(e) => report_error(err, &e),
    }
}

fn run_inner(
    config_path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let problem = cfg.resolve()?;
    let x0 = cfg
        .starts(problem.start_seed)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Config("num_starts must be at least 1 for run".into()))?;
    let result = run(&problem.cost, &x0, &problem.stepper)?;
    let mut trace = Trace::from_run(&problem.label, &problem.stepper, &result);
    if cfg.x0.is_none() {
        trace
            .comments
            .push(("start_seed".into(), problem.start_seed.to_string()));
    }
    let summary: &mut dyn Write = match &cfg.output {
        Some(path) => {
            trace.write(create(path)?)?;
            out
        }
        None => {
            trace.write(&mut *out)?;
            err
        }
    };
    write_summary(summary, &result)?;
    Ok(exit_code(&result.termination))
}

/// Options of `qnewton solve-poly`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvePolyArgs {
    pub complex: bool,
    pub starts: usize,
    /// Every coordinate of a start is drawn from `[lo, hi]`.
    pub bounds: (f64, f64),
    pub seed: u64,
}

impl Default for SolvePolyArgs {
    fn default() -> Self {
        Self {
            complex: false,
            starts: 20,
            bounds: (-2.0, 2.0),
            seed: 0,
        }
    }
}

fn write_point(
    out: &mut dyn Write,
    kind: &str,
    value: &str,
    p: &FoundPoint,
) -> std::io::Result<()> {
    writeln!(
        out,
        "{kind} x={} {value}={} |grad f|={} hits={}",
        fmt_vec(&p.x),
        fmt_f64(p.residual),
        fmt_f64(p.grad_norm),
        p.hits
    )
}

/// `qnewton solve-poly <system.txt>`: multi-start root search with `τ = τ₀`.
pub fn cmd_solve_poly(
    system_path: &Path,
    args: &SolvePolyArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    match solve_inner(system_path, args, out) {
        Ok(code) => code,
        Err(e) => report_error(err, &e),
    }
}

fn solve_inner(
    system_path: &Path,
    args: &SolvePolyArgs,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let (lo, hi) = args.bounds;
    if !(lo <= hi) {
        return Err(CliError::Config(format!(
            "--box needs LO <= HI, got {lo} {hi}"
        )));
    }
    let text = fs::read_to_string(system_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", system_path.display())))?;
    let sys = if args.complex {
        complex_to_real(&parse_complex_system(&text)?)?
    } else {
        parse_system(&text)?
    };
    let t0 = tau0(&sys)?;
    let m = sys.num_vars();
    let starts = uniform_starts(&vec![(lo, hi); m], args.starts, args.seed);
    let options = SolveOptions {
        delta_seed: args.seed,
        ..SolveOptions::default()
    };
    let report = solve_system(&sys, &starts, &options)?;

    writeln!(out, "# seed={}", args.seed)?;
    writeln!(
        out,
        "system: {} polynomial(s) in {m} real variable(s), degree of f = {}",
        sys.polynomials().len(),
        t0.degree
    )?;
    writeln!(out, "R(m,d) = {}", fmt_f64(t0.r))?;
    writeln!(out, "tau0 = {}", fmt_f64(report.tau))?;
    writeln!(out, "roots: {}", report.roots.len())?;
    for p in &report.roots {
        write_point(out, "root", "residual", p)?;
    }
    writeln!(out, "critical points: {}", report.critical_points.len())?;
    for p in &report.critical_points {
        write_point(out, "critical", "f", p)?;
    }
    writeln!(out, "diverged: {}", report.diverged)?;
    writeln!(out, "unresolved: {}", report.unresolved)?;
    Ok(EXIT_OK)
}

/// `qnewton bench <config.json>`: runs every start from `start_box` and
/// summarizes where they terminate.
pub fn cmd_bench(
    config_path: &Path,
    jobs: Option<usize>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    match bench_inner(config_path, jobs, out, err) {
        Ok(code) => code,
        Err(e) => report_error(err, &e),
    }
}

fn bench_inner(
    config_path: &Path,
    jobs: Option<usize>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let cfg = RunConfig::load(config_path)?;
    if cfg.start_box.is_none() {
        return Err(CliError::Config("bench needs start_box".into()));
    }
    let problem = cfg.resolve()?;
    let starts = cfg.starts(problem.start_seed)?;
    if jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))?;
    let runs = pool.install(|| {
        starts
            .par_iter()
            .map(|x0| run(&problem.cost, x0, &problem.stepper))
            .collect::<Result<Vec<_>, Error>>()
    })?;
    let summary = BenchSummary::from_runs(problem.cost.dim(), &runs);
    let header = vec![
        ("objective".to_string(), problem.label.clone()),
        ("variant".to_string(), problem.stepper.variant.to_string()),
        (
            "basis".to_string(),
            problem.stepper.basis_strategy.name().to_string(),
        ),
        ("tau".to_string(), fmt_f64(problem.stepper.tau)),
        (
            "delta_seed".to_string(),
            problem.stepper.delta_seed.to_string(),
        ),
        ("start_seed".to_string(), problem.start_seed.to_string()),
    ];
    match &cfg.output {
        Some(path) => {
            summary.write(create(path)?, &header)?;
            writeln!(
                out,
                "{} starts: {} basins, {} saddle-terminal, {} diverged",
                summary.num_starts,
                summary.basins.len(),
                summary.saddle_terminal,
                summary.diverged
            )?;
        }
        None => summary.write(&mut *out, &header)?,
    }
    log::info!("bench finished: {} runs", runs.len());
    let _ = err;
    Ok(EXIT_OK)
}

/// `qnewton rate <trace.csv>`: empirical convergence order of a trace towards
/// `target` (default: its final iterate).
pub fn cmd_rate(
    trace_path: &Path,
    target: Option<&[f64]>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    match rate_inner(trace_path, target, out) {
        Ok(code) => code,
        Err(CliError::Core(Error::InsufficientData(msg))) => {
            let _ = writeln!(err, "insufficient data: {msg}");
            EXIT_INSUFFICIENT_DATA
        }
        Err(e) => report_error(err, &e),
    }
}

fn rate_inner(
    trace_path: &Path,
    target: Option<&[f64]>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let file = File::open(trace_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", trace_path.display())))?;
    let trace = Trace::read(file)?;
    let last = trace
        .rows
        .last()
        .ok_or_else(|| Error::InsufficientData("trace has no rows".into()))?;
    let x_star = target.map_or_else(|| last.x.clone(), <[f64]>::to_vec);
    if x_star.len() != trace.dim() {
        return Err(CliError::Config(format!(
            "target has {} coordinates, trace has {}",
            x_star.len(),
            trace.dim()
        )));
    }
    let errors: Vec<f64> = trace.rows.iter().map(|r| distance(&r.x, &x_star)).collect();
    let est = estimate_order_from_errors(&errors)?;
    writeln!(out, "order: {:.6}", est.order)?;
    writeln!(out, "tail: {} iterates", est.tail.len())?;
    writeln!(out, "error,ratio,log_ratio")?;
    let mut prev: Option<f64> = None;
    for &e in &est.tail {
        match prev {
            None => writeln!(out, "{},,", fmt_f64(e))?,
            Some(p) => writeln!(
                out,
                "{},{},{}",
                fmt_f64(e),
                fmt_f64(e / p),
                fmt_f64(e.ln() / p.ln())
            )?,
        }
        prev = Some(e);
    }
    Ok(EXIT_OK)
}

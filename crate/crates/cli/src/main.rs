use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use drqp::admm::{BetaChoice, SolveOptions, SolveStatus, TraceRow};
use drqp::experiments::{beta_sweep, log_grid};
use drqp::oracle::{oracle_solve, OracleStatus};
use drqp::rate::{format_table, rate_table, RateQuery, TableMode, TABLE_GRID};
use drqp::{builtin, load_problem, solve, validate, InfeasibilityCertificate, Problem};
use nalgebra::DVector;

const EXIT_OPTIMAL: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_ITER_LIMIT: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "drqp", version, about = "Dense convex QP solver by ADMM / Douglas-Rachford splitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem; exit 0 optimal, 2 infeasible, 3 iteration limit.
    Solve(SolveArgs),
    /// Worst-case contraction factors over a grid.
    RateTable(TableArgs),
    /// Iteration counts over a range of penalties.
    BetaSweep(SweepArgs),
    /// Infeasibility certificate, checked against a fresh run.
    Certify(RunArgs),
    /// Check the modelling assumptions; exit 4 on a violation.
    Validate(SourceArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Built-in problem, e.g. qpex1, qpex2(1,10), qpex3-variant(3), random(7,4,2).
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    builtin: Option<String>,
    /// JSON problem document.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Write the JSON output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Penalty: a positive number or "auto".
    #[arg(long, default_value = "auto")]
    beta: String,
    /// Initial scaled multiplier, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    lambda0: Option<String>,
    /// Initial w, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    w0: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long)]
    eps_o: Option<f64>,
    #[arg(long)]
    eps_r: Option<f64>,
    #[arg(long)]
    eps_a: Option<f64>,
    #[arg(long)]
    eps_v: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Solve with the reference oracle first and add distance columns to the trace.
    #[arg(long)]
    reference: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Rows indexed by c_F, alpha_max = 1.
    Cf,
    /// Rows indexed by alpha_max, c_F = 1.
    Alpha,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_enum, default_value = "cf")]
    mode: Mode,
    /// Column values of the M_Z norm, comma separated.
    #[arg(long)]
    mz: Option<String>,
    /// Row values, comma separated.
    #[arg(long)]
    rows: Option<String>,
    /// Single value for "mz_norm,c_F,alpha_max" instead of a table.
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Explicit penalties, comma separated.
    #[arg(long, conflicts_with = "grid")]
    betas: Option<String>,
    /// Log-spaced grid "lo:hi:count".
    #[arg(long, default_value = "0.01:100:41")]
    grid: String,
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad number {s:?}")))
        .collect()
}

fn load(source: &SourceArgs) -> Result<Problem> {
    match (&source.builtin, &source.file) {
        (Some(name), _) => Ok(builtin::by_name(name)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(load_problem(&text)?)
        }
        (None, None) => bail!("one of --builtin or --file is required"),
    }
}

fn options(run: &RunArgs, n: usize) -> Result<SolveOptions<f64>> {
    let beta = if run.beta.eq_ignore_ascii_case("auto") {
        BetaChoice::Auto
    } else {
        BetaChoice::Fixed(run.beta.parse().with_context(|| format!("bad --beta {:?}", run.beta))?)
    };
    let vector = |flag: &str, text: &Option<String>| -> Result<Option<DVector<f64>>> {
        let Some(text) = text else { return Ok(None) };
        let v = parse_list(text)?;
        if v.len() != n {
            bail!("--{flag} has {} entries, the problem has n = {n}", v.len());
        }
        Ok(Some(DVector::from_vec(v)))
    };
    let d = SolveOptions::<f64>::default();
    Ok(SolveOptions {
        beta,
        eps_o: run.eps_o.unwrap_or(d.eps_o),
        eps_r: run.eps_r.unwrap_or(d.eps_r),
        eps_a: run.eps_a.unwrap_or(d.eps_a),
        eps_v: run.eps_v.unwrap_or(d.eps_v),
        max_iter: run.max_iter,
        w0: vector("w0", &run.w0)?,
        lambda0: vector("lambda0", &run.lambda0)?,
        ..d
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn emit_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    emit(out, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_trace(path: &Path, trace: &[TraceRow], with_reference: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["k", "norm_dy", "norm_dw", "norm_dlam", "norm_dv", "cos_theta", "ratio_b", "opt_residual"];
    if with_reference {
        header.extend(["dist_v", "rate", "active_subset"]);
    }
    w.write_record(&header)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |x| x.to_string());
    for r in trace {
        let mut rec = vec![
            r.k.to_string(),
            r.norm_dy.to_string(),
            r.norm_dw.to_string(),
            r.norm_dlam.to_string(),
            r.norm_dv.to_string(),
            r.cos_theta.to_string(),
            r.ratio_b.to_string(),
            r.opt_residual.to_string(),
        ];
        if with_reference {
            rec.push(opt(r.dist_v));
            rec.push(opt(r.rate));
            rec.push(r.active_subset.map_or(String::new(), |s| u8::from(s).to_string()));
        }
        w.write_record(&rec)?;
    }
    Ok(w.flush()?)
}

fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let problem = load(&args.run.source)?;
    let mut opts = options(&args.run, problem.n())?;
    if args.reference {
        let reference = oracle_solve(&problem)?;
        if reference.status != OracleStatus::Optimal {
            bail!("--reference needs a feasible problem");
        }
        opts.reference = reference.kkt;
    }
    let result = solve(&problem, &opts)?;
    if let Some(path) = &args.trace {
        write_trace(path, &result.trace, opts.reference.is_some())?;
    }
    emit_json(&args.run.source.out, &result.to_json())?;
    Ok(match result.status {
        SolveStatus::Optimal => EXIT_OPTIMAL,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::IterLimit => EXIT_ITER_LIMIT,
    })
}

fn cmd_rate_table(args: &TableArgs) -> Result<u8> {
    if let Some(q) = &args.query {
        let v = parse_list(q)?;
        if v.len() != 3 {
            bail!("--query wants mz_norm,c_F,alpha_max");
        }
        let query = RateQuery::new(v[0], v[1], v[2])?;
        emit(&args.out, &format!("{:.6}\n", query.delta()))?;
        return Ok(EXIT_OPTIMAL);
    }
    let mz = args.mz.as_deref().map(parse_list).transpose()?.unwrap_or(TABLE_GRID.to_vec());
    let rows = args.rows.as_deref().map(parse_list).transpose()?.unwrap_or(TABLE_GRID.to_vec());
    let (mode, c_f, a) = match args.mode {
        Mode::Cf => (TableMode::CosF, None, Some(1.0)),
        Mode::Alpha => (TableMode::AlphaMax, Some(1.0), None),
    };
    for &k in &mz {
        for &r in &rows {
            RateQuery::new(k, c_f.unwrap_or(r), a.unwrap_or(r))?;
        }
    }
    let table = rate_table(mode, &rows, &mz);
    emit(&args.out, &format_table(mode, &rows, &mz, &table))?;
    Ok(EXIT_OPTIMAL)
}

fn cmd_beta_sweep(args: &SweepArgs) -> Result<u8> {
    let problem = load(&args.run.source)?;
    let base = options(&args.run, problem.n())?;
    let betas = match &args.betas {
        Some(list) => parse_list(list)?,
        None => {
            let parts: Vec<&str> = args.grid.split(':').collect();
            let [lo, hi, count] = parts[..] else {
                bail!("--grid wants lo:hi:count");
            };
            let (lo, hi): (f64, f64) = (lo.parse()?, hi.parse()?);
            let count: usize = count.parse()?;
            if !(lo > 0.0 && hi >= lo) {
                bail!("--grid needs 0 < lo <= hi");
            }
            log_grid(lo, hi, count)
        }
    };
    let rows = beta_sweep(&problem, &betas, &base)?;
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["beta", "status", "iterations_to_converge", "iterations_to_subset", "is_optimal_beta"])?;
    for r in &rows {
        w.write_record([
            r.beta.to_string(),
            format!("{:?}", r.status),
            r.iterations.to_string(),
            r.iterations_to_subset.map_or(String::new(), |k| k.to_string()),
            u8::from(r.is_optimal_beta).to_string(),
        ])?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    emit(&args.run.source.out, &text)?;
    Ok(EXIT_OPTIMAL)
}

fn cmd_certify(args: &RunArgs) -> Result<u8> {
    let problem = load(&args.source)?;
    let cert = InfeasibilityCertificate::compute(&problem)?;
    if cert.is_feasible() {
        let out = serde_json::json!({
            "verdict": "feasible",
            "distance": cert.distance,
            "certificate": cert.to_json(),
        });
        emit_json(&args.source.out, &out)?;
        return Ok(EXIT_OPTIMAL);
    }
    let result = solve(&problem, &options(args, problem.n())?)?;
    let (cert, code) = match (result.status, result.certificate) {
        (SolveStatus::Infeasible, Some(run_cert)) => {
            let passed = run_cert.checks.as_ref().is_some_and(|c| c.passed());
            (run_cert, if passed { EXIT_OPTIMAL } else { EXIT_CHECK_FAILED })
        }
        _ => (cert, EXIT_CHECK_FAILED),
    };
    let out = serde_json::json!({
        "verdict": "infeasible",
        "run_status": result.status,
        "iterations": result.iterations,
        "distance": cert.distance,
        "certificate": cert.to_json(),
    });
    emit_json(&args.source.out, &out)?;
    Ok(code)
}

fn cmd_validate(args: &SourceArgs) -> Result<u8> {
    let problem = load(args)?;
    let report = validate(&problem);
    let out = serde_json::json!({
        "passed": report.passed(),
        "failures": report.failures(),
        "report": report,
    });
    emit_json(&args.out, &out)?;
    Ok(if report.passed() { EXIT_OPTIMAL } else { EXIT_CHECK_FAILED })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OPTIMAL };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::RateTable(a) => cmd_rate_table(a),
        Command::BetaSweep(a) => cmd_beta_sweep(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

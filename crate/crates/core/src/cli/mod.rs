//! Command-line front end: `solve`, `cps`, `delta`, `bench`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 no convergence (or
//! any other solver failure).

mod config;

pub use config::{ProblemSource, RunConfig};

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::bench::run_suite;
use crate::error::{Error, Result};
use crate::functionals::{parse_point, MinMaxProblem};
use crate::geometry::{delta_distance, DeltaOptions};
use crate::paths::write_path_csv;
use crate::solver::{
    check_cps, cps_sequence, judge, CpsCertificate, CpsDiagnostics, CpsRun, CriticalOutcome,
    DistanceMode,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mpass", version, about = "Nonsmooth mountain-pass solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find a critical point of mountain-pass type.
    Solve(RunArgs),
    /// Print the certificate table of the almost-critical sequence.
    Cps(RunArgs),
    /// δ-distance between two points, e.g. `delta 0,0 1,0`.
    Delta(DeltaArgs),
    /// Run the acceptance suite and print a pass/fail table.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Key-value config file; flags given here override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Library problem name.
    #[arg(long)]
    problem: Option<String>,
    /// Inline functional expression.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<String>,
    /// Inline separator expression s; F = {s = 0}.
    #[arg(long, allow_hyphen_values = true)]
    separator: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    z1: Option<String>,
    /// The inline separator is a bounded set.
    #[arg(long)]
    bounded: bool,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    grid_m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "norm|delta")]
    mode: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args, Debug)]
struct DeltaArgs {
    #[arg(allow_hyphen_values = true)]
    x: String,
    #[arg(allow_hyphen_values = true)]
    y: String,
    #[arg(long, default_value_t = DeltaOptions::default().interior_nodes)]
    nodes: usize,
    #[arg(long, default_value_t = DeltaOptions::default().iters)]
    iters: usize,
    #[arg(long, default_value_t = DeltaOptions::default().quad_points)]
    quad: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Criteria to run (default: all).
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    /// Worker threads for independent criteria.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Usage(_) | Error::Parse { .. } | Error::UnknownProblem(_) | Error::DimensionMismatch { .. } => {
            EXIT_USAGE
        }
        _ => EXIT_NO_CONVERGENCE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => with_config(a, stdout, cmd_solve),
        Command::Cps(a) => with_config(a, stdout, cmd_cps),
        Command::Delta(a) => cmd_delta(&a, stdout),
        Command::Bench(a) => cmd_bench(&a, stdout),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn with_config(
    args: RunArgs,
    stdout: &mut dyn Write,
    cmd: fn(&RunConfig, &mut dyn Write) -> Result<i32>,
) -> Result<i32> {
    let dump = args.dump_config;
    let cfg = build_config(args)?;
    if dump {
        stdout.write_all(cfg.dump().as_bytes()).map_err(io_err)?;
        return Ok(EXIT_OK);
    }
    cmd(&cfg, stdout)
}

fn build_config(a: RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    let inline = [&a.phi, &a.separator, &a.z0, &a.z1];
    if inline.iter().any(|s| s.is_some()) || a.bounded {
        if a.problem.is_some() {
            return Err(Error::Usage("give either --problem or the inline --phi/--separator/--z0/--z1".into()));
        }
        let prev = match &cfg.problem {
            ProblemSource::Inline {
                phi,
                separator,
                z0,
                z1,
                bounded,
            } => Some((phi.clone(), separator.clone(), z0.clone(), z1.clone(), *bounded)),
            ProblemSource::Library(_) => None,
        };
        let pick = |flag: &Option<String>, old: Option<&String>, name: &str| {
            flag.clone()
                .or_else(|| old.cloned())
                .ok_or_else(|| Error::Usage(format!("inline problem is missing --{name}")))
        };
        let p = prev.as_ref();
        cfg.problem = ProblemSource::Inline {
            phi: pick(&a.phi, p.map(|v| &v.0), "phi")?,
            separator: pick(&a.separator, p.map(|v| &v.1), "separator")?,
            z0: pick(&a.z0, p.map(|v| &v.2), "z0")?,
            z1: pick(&a.z1, p.map(|v| &v.3), "z1")?,
            bounded: a.bounded || p.is_some_and(|v| v.4),
        };
    } else if let Some(name) = a.problem {
        cfg.problem = ProblemSource::Library(name);
    }
    if let Some(n) = a.n_max {
        cfg.params.n_max = n;
    }
    if let Some(m) = a.grid_m {
        cfg.params.grid_m = m;
    }
    if let Some(s) = a.seed {
        cfg.params.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.mode = m.parse()?;
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    cfg.params.validate()?;
    Ok(cfg)
}

fn io_err(e: std::io::Error) -> Error {
    Error::Usage(format!("i/o error: {e}"))
}

fn create(dir: &FsPath, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::Usage(format!("cannot create {}: {e}", path.display())))
}

/// Line-delimited JSON run log.
struct RunLog {
    w: Option<BufWriter<File>>,
}

impl RunLog {
    fn open(dir: Option<&FsPath>) -> Result<Self> {
        Ok(RunLog {
            w: dir.map(|d| create(d, "runlog.jsonl")).transpose()?,
        })
    }

    fn record(&mut self, v: Value) -> Result<()> {
        if let Some(w) = &mut self.w {
            writeln!(w, "{v}").map_err(io_err)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        if let Some(w) = &mut self.w {
            w.flush().map_err(io_err)?;
        }
        Ok(())
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(cfg.out.clone())
}

fn log_run(log: &mut RunLog, run: &CpsRun<f64>) -> Result<()> {
    log.record(json!({
        "event": "gamma",
        "value": run.gamma.value,
        "argmax_t": run.gamma.argmax_t,
        "iterations": run.gamma.iterations,
        "converged": run.gamma.converged,
        "eps_bound": run.eps_bound,
        "n_min": run.n_min,
    }))?;
    if let Some(note) = &run.note {
        log.record(json!({"event": "note", "message": note}))?;
    }
    for e in &run.entries {
        let rec = match &e.result {
            Ok(r) => json!({
                "event": "step",
                "n": e.n,
                "eps": e.eps,
                "status": "certified",
                "x": r.cert.x.coords(),
                "phi": r.cert.phi_val,
                "min_norm": r.cert.min_norm,
                "scaled_min_norm": r.cert.scaled_min_norm,
                "dist_delta": r.cert.dist_delta_f,
                "dist_norm": finite_or_null(r.cert.dist_norm_f),
                "t_bar": r.cert.t_bar,
                "checks_pass": r.cert.checks.all(),
                "window": [r.window.t0, r.window.t1],
                "ekeland_moves": r.ekeland_moves,
                "ekeland_conclusions": r.ekeland_conclusions,
                "rounds": r.rounds,
                "refinements": r.refinements,
            }),
            Err(err) => json!({
                "event": "step",
                "n": e.n,
                "eps": e.eps,
                "status": "failed",
                "error": err.to_string(),
            }),
        };
        log.record(rec)?;
    }
    log.record(json!({"event": "invariants", "tally": serde_json::to_value(run.tally).unwrap_or(Value::Null)}))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

/// `certs.csv`: one row per certified iterate.
fn write_certs_csv<W: Write>(
    out: W,
    certs: &[CpsCertificate<f64>],
    diag: Option<&CpsDiagnostics<f64>>,
    dim: usize,
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Usage(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["n".into(), "eps".into()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend(
        [
            "phi",
            "gamma_est",
            "min_norm",
            "scaled_min_norm",
            "dist_delta",
            "dist_norm",
            "cert_min_norm",
            "cert_phi",
            "cert_dist",
            "env_dist",
            "env_gap",
            "env_min_norm",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for (i, c) in certs.iter().enumerate() {
        let env = |k: usize| match diag {
            Some(d) => pass(d.conditions[k].within_bounds[i]),
            None => "NA",
        };
        let mut row = vec![c.n.to_string(), fmt_num(c.eps)];
        row.extend(c.x.coords().iter().map(|&v| fmt_num(v)));
        row.extend([
            fmt_num(c.phi_val),
            fmt_num(c.gamma_est),
            fmt_num(c.min_norm),
            fmt_num(c.scaled_min_norm),
            fmt_num(c.dist_delta_f),
            fmt_num(c.dist_norm_f),
        ]);
        row.extend(
            [
                pass(c.checks.min_norm),
                pass(c.checks.phi),
                pass(c.checks.dist),
                env(0),
                env(1),
                env(2),
            ]
            .map(String::from),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_path_final(dir: &FsPath, run: &CpsRun<f64>, problem: &MinMaxProblem<f64>) -> Result<()> {
    let last = run.entries.iter().rev().find_map(|e| e.result.as_ref().ok());
    let w = create(dir, "path_final.csv")?;
    match last {
        Some(r) => write_path_csv(w, r.final_path.params(), r.final_path.nodes(), &r.final_max.phi, &r.final_max.psi),
        None => {
            let path = &run.gamma.witness;
            let phi = path
                .nodes()
                .iter()
                .map(|x| problem.phi.evaluate(x))
                .collect::<Result<Vec<_>>>()?;
            let psi = vec![0.0; phi.len()];
            let params: Vec<f64> = (0..=path.m()).map(|j| path.param(j)).collect();
            write_path_csv(w, &params, path.nodes(), &phi, &psi)
        }
    }
}

fn diagnostics(
    certs: &[CpsCertificate<f64>],
    problem: &MinMaxProblem<f64>,
    mode: DistanceMode,
) -> Option<CpsDiagnostics<f64>> {
    (certs.len() >= 2).then(|| check_cps(certs, problem, mode).ok()).flatten()
}

fn write_artifacts(
    dir: &FsPath,
    run: &CpsRun<f64>,
    diag: Option<&CpsDiagnostics<f64>>,
    problem: &MinMaxProblem<f64>,
) -> Result<()> {
    let certs = run.certificates();
    write_certs_csv(create(dir, "certs.csv")?, &certs, diag, problem.dim())?;
    write_path_final(dir, run, problem)
}

fn cmd_solve(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let problem = cfg.build_problem()?;
    let out = prepare_out(cfg)?;
    let mut log = RunLog::open(out.as_deref())?;
    log.record(json!({"event": "config", "config": cfg.dump()}))?;
    let run = match cps_sequence(&problem, &cfg.params) {
        Ok(r) => r,
        Err(e) => {
            log.record(json!({"event": "error", "error": e.to_string()}))?;
            log.finish()?;
            return Err(e);
        }
    };
    log_run(&mut log, &run)?;
    let certs = run.certificates();
    let diag = diagnostics(&certs, &problem, cfg.mode);
    if let Some(dir) = &out {
        write_artifacts(dir, &run, diag.as_ref(), &problem)?;
    }
    let w = |s: &mut dyn Write, text: String| s.write_all(text.as_bytes()).map_err(io_err);
    let code = match judge(&problem, run, &cfg.params) {
        CriticalOutcome::Converged(c) => {
            log.record(json!({
                "event": "result",
                "status": "converged",
                "x": c.x.coords(),
                "gamma": c.gamma,
                "phi": c.phi,
                "min_norm": c.min_norm,
            }))?;
            w(
                stdout,
                format!(
                    "converged: x = {:?}\ngamma = {}\nphi(x) = {}\nmin_norm = {:e}\n",
                    c.x.coords(),
                    c.gamma,
                    c.phi,
                    c.min_norm
                ),
            )?;
            EXIT_OK
        }
        CriticalOutcome::NoConvergence(r) => {
            let clusters: Vec<Value> = r
                .clusters
                .iter()
                .map(|(x, k)| json!({"center": x.coords(), "members": k}))
                .collect();
            log.record(json!({
                "event": "result",
                "status": "no_convergence",
                "reason": r.reason,
                "clusters": clusters,
            }))?;
            let mut text = format!("no convergence: {}\n", r.reason);
            for (x, k) in &r.clusters {
                text.push_str(&format!("  cluster at {:?} ({k} iterates)\n", x.coords()));
            }
            w(stdout, text)?;
            EXIT_NO_CONVERGENCE
        }
    };
    log.finish()?;
    Ok(code)
}

fn cmd_cps(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let problem = cfg.build_problem()?;
    let out = prepare_out(cfg)?;
    let mut log = RunLog::open(out.as_deref())?;
    log.record(json!({"event": "config", "config": cfg.dump()}))?;
    let run = match cps_sequence(&problem, &cfg.params) {
        Ok(r) => r,
        Err(e) => {
            log.record(json!({"event": "error", "error": e.to_string()}))?;
            log.finish()?;
            return Err(e);
        }
    };
    log_run(&mut log, &run)?;
    let certs = run.certificates();
    let diag = diagnostics(&certs, &problem, cfg.mode);
    if let Some(dir) = &out {
        write_artifacts(dir, &run, diag.as_ref(), &problem)?;
    }

    let mut text = String::new();
    if cfg.mode == DistanceMode::Norm && !problem.separator.is_bounded() {
        text.push_str(
            "WARNING: norm mode assumes a bounded separating set F; this F is unbounded, so dist_norm need not control dist_δ\n",
        );
    }
    text.push_str(&format!(
        "gamma = {}  n_min = {}  mode = {}\n",
        run.gamma.value, run.n_min, cfg.mode
    ));
    text.push_str(&format!(
        "{:>4} {:>10} {:>14} {:>14} {:>12} {:>12}  {:>5} {:>5} {:>5}\n",
        "n", "eps", "phi", "scaled_mn", "dist_delta", "dist_norm", "dist", "gap", "norm"
    ));
    let mut all_pass = true;
    for (i, c) in certs.iter().enumerate() {
        let env = |k: usize| diag.as_ref().map_or(c.checks.all(), |d| d.conditions[k].within_bounds[i]);
        let row = [env(0), env(1), env(2)];
        all_pass &= row.iter().all(|&b| b) && c.checks.all();
        text.push_str(&format!(
            "{:>4} {:>10.6} {:>14.9} {:>14.6e} {:>12.6e} {:>12.6e}  {:>5} {:>5} {:>5}\n",
            c.n,
            c.eps,
            c.phi_val,
            c.scaled_min_norm,
            c.dist_delta_f,
            c.dist_norm_f,
            pass(row[0]),
            pass(row[1]),
            pass(row[2])
        ));
    }
    let failed: Vec<String> = run
        .entries
        .iter()
        .filter_map(|e| e.result.as_ref().err().map(|err| format!("  n = {}: {err}\n", e.n)))
        .collect();
    if !failed.is_empty() {
        all_pass = false;
        text.push_str("failed steps:\n");
        text.extend(failed);
    }
    if let Some(note) = &run.note {
        text.push_str(&format!("(no rows) {note}\n"));
    }
    if let Some(d) = &diag {
        for c in &d.conditions {
            text.push_str(&format!("{}: rate constant {:.4e}\n", c.name, c.rate_constant));
        }
        if let Some(r) = d.bounded_ratio {
            text.push_str(&format!("min dist_δ / dist_norm = {r:.4}\n"));
        }
    }
    let ok = all_pass && !certs.is_empty();
    if ok {
        text.push_str("all rows PASS\n");
    } else if run.note.is_none() {
        text.push_str("some rows FAIL or missing\n");
    }
    stdout.write_all(text.as_bytes()).map_err(io_err)?;
    log.finish()?;
    Ok(if ok { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

fn cmd_delta(a: &DeltaArgs, stdout: &mut dyn Write) -> Result<i32> {
    let x = parse_point::<f64>(&a.x)?;
    let y = parse_point::<f64>(&a.y)?;
    let opts = DeltaOptions {
        interior_nodes: a.nodes,
        iters: a.iters,
        quad_points: a.quad.max(1),
    };
    let d = delta_distance(&x, &y, &opts)?;
    writeln!(stdout, "{d:.10}").map_err(io_err)?;
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs, stdout: &mut dyn Write) -> Result<i32> {
    let results = run_suite(&a.only, a.jobs)?;
    let mut all = true;
    for r in &results {
        all &= r.passed;
        writeln!(stdout, "{r}").map_err(io_err)?;
    }
    let passed = results.iter().filter(|r| r.passed).count();
    writeln!(stdout, "{passed}/{} criteria passed", results.len()).map_err(io_err)?;
    Ok(if all { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

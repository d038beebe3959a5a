//! `mpinfer`: confidence sets for solutions of estimated linear and convex
//! quadratic programs, plus the Monte Carlo studies and the efficient
//! portfolio application.
//!
//! Subcommands: `lp-infer`, `qp-infer`, `simulate`, `portfolio`.
//! Exit codes: 0 success, 1 error, 2 empty confidence set, 64 usage.

mod config;
mod output;

use config::{load_config, ProblemConfig, ProblemKind};
use mpinfer::densela::DenseVector;
use mpinfer::exec;
use mpinfer::experiments::{coverage_table_threads, SimDesign};
use mpinfer::inference::{
    default_theta_box, grid_scan_threads, projection_interval, ConfidenceSpec, InferenceError,
};
use mpinfer::kkt::{build_lp_system, build_qp_system};
use mpinfer::lp::solve_lp;
use mpinfer::portfolio::{
    efficient_weights, estimate_instance_scaled, fixture_panel, ingest_csv,
    portfolio_cs_threads,
};
use mpinfer::qp::solve_qp;
use output::{cs_points_csv, fmt_num, projection_csv, JsonObject};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_EMPTY: u8 = 2;
const EXIT_USAGE: u8 = 64;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    ExitCode::from(run(&args))
}

fn usage() -> String {
    format!(
        "mpinfer {}\n\
         Confidence sets for solutions of estimated linear and quadratic programs.\n\
         \n\
         USAGE:\n\
         \x20   mpinfer <SUBCOMMAND> [OPTIONS]\n\
         \n\
         SUBCOMMANDS:\n\
         \x20   lp-infer <config>     Invert the moment test of an estimated LP\n\
         \x20   qp-infer <config>     Invert the moment test of an estimated QP\n\
         \x20   simulate              Monte Carlo coverage studies on the built-in designs\n\
         \x20   portfolio             Efficient-portfolio confidence set from a yields CSV\n\
         \n\
         Run `mpinfer <SUBCOMMAND> --help` for each subcommand's options.\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn run(args: &[String]) -> u8 {
    match args.first().map(String::as_str) {
        None => {
            eprint!("{}", usage());
            EXIT_USAGE
        }
        Some("--help") | Some("-h") | Some("help") => {
            print!("{}", usage());
            EXIT_OK
        }
        Some("--version") | Some("-V") | Some("version") => {
            println!("mpinfer {}", env!("CARGO_PKG_VERSION"));
            EXIT_OK
        }
        Some("lp-infer") => cmd_infer(&args[1..], ProblemKind::Lp),
        Some("qp-infer") => cmd_infer(&args[1..], ProblemKind::Qp),
        Some("simulate") => cmd_simulate(&args[1..]),
        Some("portfolio") => cmd_portfolio(&args[1..]),
        Some(other) => {
            eprintln!("unknown subcommand `{other}`\n");
            eprint!("{}", usage());
            EXIT_USAGE
        }
    }
}

struct Flags {
    positional: Vec<String>,
    options: BTreeMap<String, String>,
    switches: Vec<String>,
}

/// Split `args` into positionals, `--opt value` pairs, and bare switches.
fn parse_flags(
    args: &[String],
    known_options: &[&str],
    known_switches: &[&str],
) -> Result<Flags, String> {
    let mut flags =
        Flags { positional: Vec::new(), options: BTreeMap::new(), switches: Vec::new() };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if let Some(name) = arg.strip_prefix("--") {
            if known_switches.contains(&name) {
                flags.switches.push(name.to_string());
            } else if known_options.contains(&name) {
                match it.next() {
                    Some(v) => {
                        flags.options.insert(name.to_string(), v.clone());
                    }
                    None => return Err(format!("flag --{name} needs a value")),
                }
            } else {
                return Err(format!("unknown flag --{name}"));
            }
        } else {
            flags.positional.push(arg.clone());
        }
    }
    Ok(flags)
}

fn opt_parse<T: std::str::FromStr>(
    flags: &Flags,
    name: &str,
    default: T,
) -> Result<T, String> {
    match flags.options.get(name) {
        None => Ok(default),
        Some(raw) => raw.parse::<T>().map_err(|_| format!("bad value for --{name}: `{raw}`")),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// lp-infer / qp-infer

const INFER_HELP: &str = "\
USAGE:
    mpinfer lp-infer <config.cfg> [--out-dir DIR] [--threads N]
    mpinfer qp-infer <config.cfg> [--out-dir DIR] [--threads N]

Reads a flat `key = value` problem config (see configs/ for annotated
examples), solves the sample program, inverts the moment test over the
configured grid, and writes solution.json, cs_points.csv and projection.csv
into --out-dir (default `.`). Exits 2 when the confidence set is empty.
";

fn cmd_infer(args: &[String], kind: ProblemKind) -> u8 {
    if args.iter().any(|a| a == "--help") {
        print!("{INFER_HELP}");
        return EXIT_OK;
    }
    let flags = match parse_flags(args, &["out-dir", "threads"], &[]) {
        Ok(f) => f,
        Err(msg) => {
            eprintln!("{msg}\n{INFER_HELP}");
            return EXIT_USAGE;
        }
    };
    if flags.positional.len() != 1 {
        eprintln!("expected exactly one config path\n{INFER_HELP}");
        return EXIT_USAGE;
    }
    let out_dir = PathBuf::from(
        flags.options.get("out-dir").cloned().unwrap_or_else(|| ".".to_string()),
    );
    let threads_flag = match opt_parse::<usize>(&flags, "threads", 0) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_USAGE;
        }
    };

    let cfg = match load_config(Path::new(&flags.positional[0])) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_ERROR;
        }
    };
    if cfg.kind != kind {
        eprintln!(
            "config error at `kind`: expected {}",
            if kind == ProblemKind::Lp { "lp" } else { "qp" }
        );
        return EXIT_ERROR;
    }
    let threads = if threads_flag > 0 {
        threads_flag
    } else {
        cfg.threads.unwrap_or_else(exec::default_threads)
    };

    match run_inference(&cfg, threads, &out_dir) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("{msg}");
            EXIT_ERROR
        }
    }
}

fn run_inference(cfg: &ProblemConfig, threads: usize, out_dir: &Path) -> Result<u8, String> {
    // Sample program solution (reported, and the center of the auto box).
    let (theta_hat, lambda_json, objective, status_str, sys) = match cfg.kind {
        ProblemKind::Lp => {
            let p = cfg.lp.as_ref().unwrap();
            let sol = solve_lp(p);
            if !sol.is_optimal() {
                return Err(format!("sample LP is {:?}; nothing to invert", sol.status));
            }
            let sys = build_lp_system(p, &cfg.est).map_err(|e| e.to_string())?;
            let lambda = format!("\"lambda\": {}", json_num_array(&sol.lambda));
            (sol.theta, lambda, sol.objective, "optimal", sys)
        }
        ProblemKind::Qp => {
            let p = cfg.qp.as_ref().unwrap();
            let sol = solve_qp(p).map_err(|e| e.to_string())?;
            if !sol.is_optimal() {
                return Err(format!("sample QP is {:?}; nothing to invert", sol.status));
            }
            let sys = build_qp_system(p, &cfg.est).map_err(|e| e.to_string())?;
            let lambda = format!(
                "\"lambda_ineq\": {}, \"lambda_eq\": {}",
                json_num_array(&sol.lambda_ineq),
                json_num_array(&sol.lambda_eq)
            );
            (sol.theta, lambda, sol.objective, "optimal", sys)
        }
    };

    let theta_box = match &cfg.theta_box {
        Some(b) => b.clone(),
        None => default_theta_box(&theta_hat, &cfg.est),
    };
    let spec = ConfidenceSpec {
        alpha: cfg.alpha,
        df: sys.df,
        theta_box,
        grid_step: cfg.grid_step,
        extra_theta_constraints: cfg.constraints.clone(),
    };
    let set = grid_scan_threads(&sys, &cfg.est, &spec, threads).map_err(|e| e.to_string())?;

    let k = sys.theta_dim();
    let mut json = JsonObject::new();
    json.field_str("kind", if cfg.kind == ProblemKind::Lp { "lp" } else { "qp" })
        .field_str("status", status_str)
        .field_array("theta", &theta_hat)
        .field_raw("multipliers", &format!("{{ {lambda_json} }}"))
        .field_num("objective", objective)
        .field_num("alpha", cfg.alpha)
        .field_int("df", sys.df)
        .field_num("critical_value", set.critical_value)
        .field_int("accepted_points", set.accepted.len());

    if set.accepted.is_empty() {
        json.field_num("min_statistic", set.min_statistic);
        write_file(out_dir, "solution.json", &json.finish())?;
        write_file(out_dir, "cs_points.csv", &cs_points_csv(k, &[], &[]))?;
        write_file(out_dir, "projection.csv", &projection_csv(&[]))?;
        println!(
            "confidence set is empty (minimum statistic {})",
            fmt_num(set.min_statistic)
        );
        return Ok(EXIT_EMPTY);
    }

    let mut intervals = Vec::with_capacity(k);
    for j in 0..k {
        match projection_interval(&sys, &cfg.est, &spec, j) {
            Ok(iv) => intervals.push(iv),
            Err(InferenceError::EmptySet { .. }) => unreachable!("set is nonempty"),
            Err(e) => return Err(e.to_string()),
        }
    }

    write_file(out_dir, "solution.json", &json.finish())?;
    write_file(out_dir, "cs_points.csv", &cs_points_csv(k, &set.accepted, &[]))?;
    write_file(out_dir, "projection.csv", &projection_csv(&intervals))?;

    println!("accepted {} grid points at level {}", set.accepted.len(), 1.0 - cfg.alpha);
    for (j, (lo, hi)) in intervals.iter().enumerate() {
        println!("theta_{}: [{}, {}]", j + 1, fmt_num(*lo), fmt_num(*hi));
    }
    Ok(EXIT_OK)
}

fn json_num_array(v: &DenseVector) -> String {
    let inner: Vec<String> = v.iter().map(|x| format!("\"{}\"", fmt_num(*x))).collect();
    format!("[{}]", inner.join(", "))
}

// ---------------------------------------------------------------------------
// simulate

const SIMULATE_HELP: &str = "\
USAGE:
    mpinfer simulate --design {1a|1b|1c|2}[,...] --n N[,...] \
[--reps R] [--alpha A] [--seed S] [--out FILE.csv] [--threads N]

Runs the built-in Monte Carlo coverage studies: designs 1a/1b/1c are the
intersection-bounds designs (means (5,3); covariances (1,1;0), (3,1;0),
(3,1;1.5)); design 2 is the 2x2 LP with all coefficients estimated.
Defaults: --reps 1000 --alpha 0.05 --seed 42. Prints an aligned table and
writes CSV when --out is given.
";

fn cmd_simulate(args: &[String]) -> u8 {
    if args.iter().any(|a| a == "--help") {
        print!("{SIMULATE_HELP}");
        return EXIT_OK;
    }
    let flags = match parse_flags(
        args,
        &["design", "n", "reps", "alpha", "seed", "out", "threads"],
        &[],
    ) {
        Ok(f) => f,
        Err(msg) => {
            eprintln!("{msg}\n{SIMULATE_HELP}");
            return EXIT_USAGE;
        }
    };
    if !flags.positional.is_empty() {
        eprintln!("unexpected argument `{}`\n{SIMULATE_HELP}", flags.positional[0]);
        return EXIT_USAGE;
    }
    let (Some(design_raw), Some(n_raw)) = (flags.options.get("design"), flags.options.get("n"))
    else {
        eprintln!("--design and --n are required\n{SIMULATE_HELP}");
        return EXIT_USAGE;
    };
    let reps = match opt_parse::<usize>(&flags, "reps", 1000) {
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    let alpha = match opt_parse::<f64>(&flags, "alpha", 0.05) {
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    let seed = match opt_parse::<u64>(&flags, "seed", 42) {
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    let threads = match opt_parse::<usize>(&flags, "threads", 0) {
        Ok(0) => exec::default_threads(),
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        eprintln!("--alpha must be strictly between 0 and 1");
        return EXIT_ERROR;
    }

    let mut ns = Vec::new();
    for tok in n_raw.split(',') {
        match tok.trim().parse::<usize>() {
            Ok(v) if v >= 2 => ns.push(v),
            _ => {
                eprintln!("bad sample size `{tok}`");
                return EXIT_ERROR;
            }
        }
    }
    let mut designs = Vec::new();
    for tok in design_raw.split(',') {
        for &n in &ns {
            let d = match tok.trim() {
                "1a" => SimDesign::sim1(1, n, reps, alpha, seed),
                "1b" => SimDesign::sim1(2, n, reps, alpha, seed),
                "1c" => SimDesign::sim1(3, n, reps, alpha, seed),
                "2" => SimDesign::sim2(n, reps, alpha, seed),
                other => {
                    eprintln!("unknown design `{other}` (expected 1a, 1b, 1c or 2)");
                    return EXIT_ERROR;
                }
            };
            designs.push(d);
        }
    }

    let table = match coverage_table_threads(&designs, threads) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_ERROR;
        }
    };
    print!("{}", table.to_text());
    if let Some(out) = flags.options.get("out") {
        let path = PathBuf::from(out);
        let dir = path.parent().unwrap_or(Path::new("."));
        let name = match path.file_name() {
            Some(f) => f.to_string_lossy().to_string(),
            None => {
                eprintln!("--out must name a file");
                return EXIT_ERROR;
            }
        };
        if let Err(msg) = write_file(dir, &name, &table.to_csv()) {
            eprintln!("{msg}");
            return EXIT_ERROR;
        }
    }
    EXIT_OK
}

fn usage_error(msg: &str) -> u8 {
    eprintln!("{msg}");
    EXIT_USAGE
}

// ---------------------------------------------------------------------------
// portfolio

const PORTFOLIO_HELP: &str = "\
USAGE:
    mpinfer portfolio (--data yields.csv | --fixture) --mu MU \
[--alpha A] [--grid-step H] [--annualize-factor F] [--out-dir DIR] [--threads N]

Reads a `date,<ticker>,...` CSV of daily yields (percent per annum),
estimates the return vector and covariance, solves the long-only
minimum-variance weights at target return MU (percent), and grids the
confidence set over the weight simplex. --fixture uses the built-in
synthetic panel that matches the published three-asset estimates.
Defaults: --alpha 0.10 --grid-step 0.01 --annualize-factor 1 --out-dir `.`.
Writes cs_points.csv (accepted points plus the rejected boundary shell) and
solution.json. Exits 2 when the confidence set is empty.
";

fn cmd_portfolio(args: &[String]) -> u8 {
    if args.iter().any(|a| a == "--help") {
        print!("{PORTFOLIO_HELP}");
        return EXIT_OK;
    }
    let flags = match parse_flags(
        args,
        &["data", "mu", "alpha", "grid-step", "annualize-factor", "out-dir", "threads"],
        &["fixture"],
    ) {
        Ok(f) => f,
        Err(msg) => {
            eprintln!("{msg}\n{PORTFOLIO_HELP}");
            return EXIT_USAGE;
        }
    };
    if !flags.positional.is_empty() {
        eprintln!("unexpected argument `{}`\n{PORTFOLIO_HELP}", flags.positional[0]);
        return EXIT_USAGE;
    }
    let fixture = flags.switches.iter().any(|s| s == "fixture");
    let data = flags.options.get("data");
    if fixture == data.is_some() {
        eprintln!("provide exactly one of --data or --fixture\n{PORTFOLIO_HELP}");
        return EXIT_USAGE;
    }
    let Some(mu_raw) = flags.options.get("mu") else {
        eprintln!("--mu is required\n{PORTFOLIO_HELP}");
        return EXIT_USAGE;
    };
    let Ok(mu) = mu_raw.parse::<f64>() else {
        eprintln!("bad value for --mu: `{mu_raw}`");
        return EXIT_USAGE;
    };
    let alpha = match opt_parse::<f64>(&flags, "alpha", 0.10) {
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    let grid_step = match opt_parse::<f64>(&flags, "grid-step", 0.01) {
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    let factor = match opt_parse::<f64>(&flags, "annualize-factor", 1.0) {
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    let threads = match opt_parse::<usize>(&flags, "threads", 0) {
        Ok(0) => exec::default_threads(),
        Ok(v) => v,
        Err(m) => return usage_error(&m),
    };
    let out_dir = PathBuf::from(
        flags.options.get("out-dir").cloned().unwrap_or_else(|| ".".to_string()),
    );
    if !(alpha > 0.0 && alpha < 1.0) || grid_step <= 0.0 || factor <= 0.0 {
        eprintln!("--alpha must be in (0,1); --grid-step and --annualize-factor must be positive");
        return EXIT_ERROR;
    }

    let panel = if fixture {
        fixture_panel()
    } else {
        match ingest_csv(Path::new(data.unwrap())) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("{e}");
                return EXIT_ERROR;
            }
        }
    };
    if panel.dropped_rows > 0 {
        println!("dropped {} unusable rows", panel.dropped_rows);
    }

    let result = (|| -> Result<u8, String> {
        let inst =
            estimate_instance_scaled(&panel, mu, factor).map_err(|e| e.to_string())?;
        let sol = efficient_weights(&inst).map_err(|e| e.to_string())?;
        let cs = portfolio_cs_threads(&inst, alpha, grid_step, threads)
            .map_err(|e| e.to_string())?;

        let k = inst.num_assets();
        let mut json = JsonObject::new();
        json.field_array("theta", &sol.theta)
            .field_array("lambda_ineq", &sol.lambda_ineq)
            .field_array("lambda_eq", &sol.lambda_eq)
            .field_num("mu", mu)
            .field_num("alpha", alpha)
            .field_int("df", 1 + k)
            .field_num("critical_value", cs.set.critical_value)
            .field_int("accepted_points", cs.set.accepted.len())
            .field_int("boundary_points", cs.boundary.len());
        write_file(&out_dir, "solution.json", &json.finish())?;
        write_file(
            &out_dir,
            "cs_points.csv",
            &cs_points_csv(k, &cs.set.accepted, &cs.boundary),
        )?;

        if cs.set.accepted.is_empty() {
            println!(
                "confidence set is empty (minimum statistic {})",
                fmt_num(cs.set.min_statistic)
            );
            return Ok(EXIT_EMPTY);
        }
        println!(
            "accepted {} simplex points at level {} (critical value {})",
            cs.set.accepted.len(),
            1.0 - alpha,
            fmt_num(cs.set.critical_value)
        );
        for (name, weight) in panel.tickers.iter().zip(sol.theta.iter()) {
            println!("weight {name}: {}", fmt_num(*weight));
        }
        Ok(EXIT_OK)
    })();

    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("{msg}");
            EXIT_ERROR
        }
    }
}

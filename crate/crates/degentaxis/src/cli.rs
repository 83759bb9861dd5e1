//! Command-line front end: configuration loading, run orchestration and
//! output writing for every experiment type.
//!
//! Commands: `run`, `steady`, `sweep`, `verify-inequalities`, `dual-norm`.
//! Exit codes: 0 success, 2 science-verdict failure, 1 error.

use std::path::{Path, PathBuf};

use crate::config::{parse_config, OutputFormat, RunConfig};
use crate::dualnorm::dual_norm;
use crate::error::Error;
use crate::grid::make_grid;
use crate::inequalities::{
    csv_header, default_boundary_points, default_exponent_points, fit_constant, violation_hunt,
    HarnessConfig,
};
use crate::output::{prepare_output_dir, write_ndjson, write_text, FileSinks};
use crate::scenarios::{
    initial_state, make_initial_data, sweep_summary_table, v0_sweep, ScenarioOptions,
};
use crate::snapshot;
use crate::stepper::{run, RunOptions, Termination};

pub const USAGE: &str = "degentaxis <command> [options]

commands:
  run                     advance one trajectory to the horizon
  steady                  run until the steady-state detector fires
  sweep                   v0-scaling sweep with fitted decay exponent
  verify-inequalities     fit and stress the interpolation inequalities
  dual-norm <a> <b>       (W^{1,inf})* distance between two snapshots' u fields

options:
  --config <path>         sectioned key = value configuration file
  --out <dir>             output directory (fallback: config, then $DEGENTAXIS_OUT)
  --seed <u64>            override the configured seed
  --certify               refuse to run outside the admissible alpha window
  --threads <n>           worker pool bound for sweep legs (default 1)
  --help                  print this text
";

struct Cli {
    command: String,
    config_path: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    certify: bool,
    threads: usize,
    positional: Vec<String>,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    let mut cli = Cli {
        command: String::new(),
        config_path: None,
        out_dir: None,
        seed: None,
        certify: false,
        threads: 1,
        positional: Vec::new(),
    };
    let mut it = args.iter().peekable();
    let need_value = |it: &mut std::iter::Peekable<std::slice::Iter<String>>,
                      flag: &str|
     -> Result<String, String> {
        it.next()
            .cloned()
            .ok_or_else(|| format!("{flag} needs a value"))
    };
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => cli.config_path = Some(PathBuf::from(need_value(&mut it, "--config")?)),
            "--out" => cli.out_dir = Some(PathBuf::from(need_value(&mut it, "--out")?)),
            "--seed" => {
                let v = need_value(&mut it, "--seed")?;
                cli.seed = Some(v.parse().map_err(|_| format!("bad seed '{v}'"))?);
            }
            "--certify" => cli.certify = true,
            "--threads" => {
                let v = need_value(&mut it, "--threads")?;
                cli.threads = v.parse().map_err(|_| format!("bad thread count '{v}'"))?;
                if cli.threads == 0 {
                    return Err("--threads must be at least 1".into());
                }
            }
            "--help" | "-h" => {
                cli.command = "help".into();
                return Ok(cli);
            }
            other if other.starts_with("--") => return Err(format!("unknown flag '{other}'")),
            other => {
                if cli.command.is_empty() {
                    cli.command = other.to_string();
                } else {
                    cli.positional.push(other.to_string());
                }
            }
        }
    }
    if cli.command.is_empty() {
        return Err("missing command".into());
    }
    Ok(cli)
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            parse_config(&text)?
        }
        None => parse_config("")?,
    };
    if let Some(seed) = cli.seed {
        cfg.initial.seed = seed;
    }
    if cli.certify {
        cfg.run.certify = true;
        if !cfg.params.in_admissible_window() {
            return Err(Error::Regime {
                alpha: cfg.params.alpha,
            });
        }
    }
    Ok(cfg)
}

fn resolve_out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = &cli.out_dir {
        return dir.clone();
    }
    if let Some(dir) = &cfg.output.dir {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var("DEGENTAXIS_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("out")
}

fn run_options(cfg: &RunConfig, stop_on_steady: bool) -> RunOptions {
    RunOptions {
        horizon: cfg.run.horizon,
        sample_cadence: cfg.run.sample_cadence,
        snapshot_cadence: cfg.run.snapshot_cadence,
        steady: cfg.steady_tolerances(),
        stop_on_steady: stop_on_steady || cfg.run.stop_on_steady,
        track_dual_dist: cfg.diagnostics.dual_norm,
        certify: cfg.run.certify,
        functionals: cfg.functional_config(),
    }
}

fn cmd_run(cli: &Cli, stop_on_steady: bool) -> Result<i32, Error> {
    let cfg = load_config(cli)?;
    let grid = cfg.build_grid()?;
    let (u0, v0, k_bound) = make_initial_data(&grid, &cfg.initial)?;
    let state0 = initial_state(&u0, &v0, &cfg.params)?;
    let out_dir = resolve_out_dir(cli, &cfg);
    prepare_output_dir(&out_dir, cfg.config_hash, cfg.initial.seed, &grid)?;
    let mut sinks = FileSinks::new(
        &out_dir,
        cfg.output.formats.contains(&OutputFormat::Ndjson),
        cfg.output.formats.contains(&OutputFormat::Snapshots),
    )?;
    let options = run_options(&cfg, stop_on_steady);
    let result = run(&state0, &cfg.params, &options, &mut sinks)?;
    sinks.finish()?;
    snapshot::save_state(&out_dir.join("final.snap"), &result.final_state)?;

    println!(
        "termination: {}",
        match result.termination {
            Termination::Horizon => "horizon",
            Termination::Steady => "steady",
            Termination::Instability => "instability",
            Termination::RegimeViolation => "regime-violation",
        }
    );
    println!("t_final: {}", result.final_state.t);
    println!("steps: {}", result.total_steps);
    println!("K_bound: {k_bound}");
    if let Some(t) = result.steady_time {
        println!("steady_time: {t}");
    }
    if let Some(last) = result.records.last() {
        println!("mass_u: {}", last.mass_u);
        println!("mass_v: {}", last.mass_v);
        println!("clip_budget: {}", last.clip_budget);
    }

    let code = match result.termination {
        Termination::Horizon => {
            if stop_on_steady {
                // `steady` asked for convergence and never got it
                2
            } else {
                0
            }
        }
        Termination::Steady => 0,
        Termination::Instability => 2,
        Termination::RegimeViolation => 2,
    };
    Ok(code)
}

fn cmd_sweep(cli: &Cli) -> Result<i32, Error> {
    let cfg = load_config(cli)?;
    let grid = cfg.build_grid()?;
    let out_dir = resolve_out_dir(cli, &cfg);
    prepare_output_dir(&out_dir, cfg.config_hash, cfg.initial.seed, &grid)?;

    let mut options = ScenarioOptions::new(cfg.run.horizon, cfg.params.alpha);
    options.sample_cadence = cfg.run.sample_cadence;
    options.snapshot_cadence = cfg.run.snapshot_cadence;
    options.steady = cfg.steady_tolerances();
    options.stop_on_steady = cfg.run.stop_on_steady;
    options.certify = cfg.run.certify;
    options.nonconstancy_fraction = cfg.run.nonconstancy_fraction;
    options.threads = cli.threads;
    options.functionals = cfg.functional_config();

    let report = v0_sweep(
        &grid,
        &cfg.initial,
        &cfg.sweep.scales,
        &cfg.params,
        &options,
    )?;

    write_ndjson(&out_dir.join("sweep.ndjson"), &report.legs)?;
    let trailer = serde_json::json!({
        "sigma_hat": report.sigma_hat,
        "log_intercept": report.log_intercept,
        "monotone": report.monotone,
        "degenerate_legs": report.degenerate_legs,
    });
    std::fs::OpenOptions::new()
        .append(true)
        .open(out_dir.join("sweep.ndjson"))
        .and_then(|mut f| {
            use std::io::Write;
            writeln!(f, "{trailer}")
        })?;
    let table = sweep_summary_table(&report);
    write_text(&out_dir.join("sweep_summary.txt"), &table)?;
    print!("{table}");

    let verdict_ok = report.monotone && report.sigma_hat.map(|s| s > 0.0).unwrap_or(false);
    Ok(if verdict_ok { 0 } else { 2 })
}

fn cmd_verify_inequalities(cli: &Cli) -> Result<i32, Error> {
    let cfg = load_config(cli)?;
    let ineq = &cfg.inequalities;
    let grid = make_grid(1, &[ineq.cells], &[1.0])?;
    let out_dir = resolve_out_dir(cli, &cfg);
    prepare_output_dir(&out_dir, cfg.config_hash, cfg.initial.seed, &grid)?;

    let harness = HarnessConfig {
        grid,
        mode_count: ineq.mode_count,
        min_value: ineq.min_value,
        mass_bound: ineq.mass_bound,
    };
    let base_seed = cfg.initial.seed.wrapping_mul(0x1_0000_0001);
    let mut csv = String::from(csv_header());
    csv.push('\n');
    let mut hunt_rows: Vec<serde_json::Value> = Vec::new();
    let mut total_violations = 0usize;
    let mut agreement_failures = 0usize;

    for &id in &ineq.ids {
        for (pidx, point) in default_exponent_points(id).iter().enumerate() {
            let seed_a = base_seed.wrapping_add(0x10_0000u64 * (pidx as u64 + 1));
            let seed_b = seed_a.wrapping_add(2 * ineq.sample_count as u64 + 1);
            let batch_a = fit_constant(point, &harness, ineq.sample_count, seed_a)?;
            let batch_b = fit_constant(point, &harness, ineq.sample_count, seed_b)?;
            for row in batch_a.rows.iter().chain(&batch_b.rows) {
                csv.push_str(&row.to_csv());
                csv.push('\n');
            }
            let c_cap = 2.0 * batch_a.c_hat;
            let violations: Vec<(u64, f64)> = batch_b
                .rows
                .iter()
                .filter(|r| r.implied_constant > c_cap)
                .map(|r| (r.seed, r.implied_constant))
                .collect();
            let agree = (batch_a.c_hat - batch_b.c_hat).abs()
                <= 0.2 * batch_a.c_hat.max(batch_b.c_hat).max(f64::MIN_POSITIVE);
            if !violations.is_empty() {
                total_violations += violations.len();
            }
            if !agree {
                agreement_failures += 1;
            }
            println!(
                "{} [{}]: C_hat = {:.6e} / {:.6e} (agree: {}), violations at 2*C_hat: {}",
                id.name(),
                point.describe(),
                batch_a.c_hat,
                batch_b.c_hat,
                agree,
                violations.len()
            );
            hunt_rows.push(serde_json::json!({
                "id": id.name(),
                "exponents": point.describe(),
                "admissible": true,
                "c_hat_batch_a": batch_a.c_hat,
                "c_hat_batch_b": batch_b.c_hat,
                "agree_within_20pct": agree,
                "violations": violations,
                "skipped_mass_bound": batch_a.skipped_mass_bound + batch_b.skipped_mass_bound,
                "skipped_degenerate": batch_a.skipped_degenerate + batch_b.skipped_degenerate,
            }));
        }

        if ineq.boundary_probes {
            let points = default_boundary_points(id);
            let budget = ineq.sample_count.clamp(1, 40);
            let hunt = violation_hunt(&points, &harness, budget, base_seed ^ 0x5a5a)?;
            for report in &hunt.points {
                println!(
                    "{} [{}]: outside admissible range ({}); C_hat growth under refinement: {:?}",
                    id.name(),
                    report.exponents.describe(),
                    report.violated_hypotheses.join("; "),
                    report.refinement_growth
                );
                hunt_rows.push(serde_json::json!({
                    "id": id.name(),
                    "exponents": report.exponents.describe(),
                    "admissible": false,
                    "violated_hypotheses": report.violated_hypotheses,
                    "refinement_growth": report.refinement_growth,
                }));
            }
        }
    }

    write_text(&out_dir.join("inequalities.csv"), &csv)?;
    write_ndjson(&out_dir.join("hunt.ndjson"), &hunt_rows)?;

    println!("violations: {total_violations}, batch disagreements: {agreement_failures}");
    Ok(if total_violations == 0 && agreement_failures == 0 {
        0
    } else {
        2
    })
}

fn cmd_dual_norm(cli: &Cli) -> Result<i32, Error> {
    if cli.positional.len() != 2 {
        return Err(Error::DualNorm(
            "dual-norm needs exactly two snapshot paths".into(),
        ));
    }
    let a = snapshot::load_state(Path::new(&cli.positional[0]))?;
    let b = snapshot::load_state(Path::new(&cli.positional[1]))?;
    if a.grid() != b.grid() {
        return Err(Error::DualNorm("snapshots live on different grids".into()));
    }
    let diff = a.u.zip_with(&b.u, |x, y| x - y);
    let sol = dual_norm(&diff)?;
    println!("{}", sol.value);
    Ok(0)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(msg) => {
            eprintln!("error: {msg}");
            eprint!("{USAGE}");
            return 1;
        }
    };
    let outcome = match cli.command.as_str() {
        "help" => {
            print!("{USAGE}");
            return 0;
        }
        "run" => cmd_run(&cli, false),
        "steady" => cmd_run(&cli, true),
        "sweep" => cmd_sweep(&cli),
        "verify-inequalities" => cmd_verify_inequalities(&cli),
        "dual-norm" => cmd_dual_norm(&cli),
        other => {
            eprintln!("error: unknown command '{other}'");
            eprint!("{USAGE}");
            return 1;
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

//! Command-line driver.
//!
//! Subcommands: `calibrate`, `run`, `check-sosp`, `escape-demo`, `audit`,
//! `sweep-eps`. Every command takes a config file; errors exit nonzero with a
//! one-line `category: message` on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use noisy_sgd::analysis::{bucket_audit, descent_audit, escape_statistics};
use noisy_sgd::error::{Error, Result};
use noisy_sgd::harness::config::{apply_constant_overrides, parse_config, ExperimentConfig};
use noisy_sgd::harness::sweep::{sweep_epsilon, sweep_to_csv, RunShape};
use noisy_sgd::harness::trace::{plan_from_text, plan_kv, read_trace, write_trace_opts};
use noisy_sgd::optimizer::run;
use noisy_sgd::privacy::{
    laplace_scales, resolve_plan_with, selection_sample_warning, verify_plan, NoisePlan,
    ResolveOptions,
};
use noisy_sgd::problem::Point;
use noisy_sgd::rng::Streams;
use noisy_sgd::sosp::{check_sosp, private_select, EigParams};
use noisy_sgd::testbed::TestbedProblem;

#[derive(Parser)]
#[command(
    name = "noisy-sgd",
    about = "Differentially private SGD without clipping: calibration, runs, and second-order diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (sectioned key=value format).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated overrides for the absolute constants, e.g. "c_drop=2,c_eta=0.5".
    #[arg(long)]
    constants: Option<String>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve the privacy budget into a run plan and print it.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Execute runs for the configured seeds and write trace CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's mode (clip | no-clip).
        #[arg(long)]
        mode: Option<String>,
        /// Use a plan file (key=value lines) instead of resolving one.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Force coordinate columns on or off.
        #[arg(long)]
        coords: Option<bool>,
    },
    /// Check iterates of a stored trace for stationarity.
    #[command(name = "check-sosp")]
    CheckSosp {
        #[command(flatten)]
        common: Common,
        /// Trace file to scan.
        #[arg(long)]
        trace: PathBuf,
        /// Override the trace plan's alpha.
        #[arg(long)]
        alpha: Option<f64>,
        /// Add Laplace noise and apply the private selection rule.
        #[arg(long)]
        private: bool,
        /// Noise seed for the private path.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evenly subsample at most this many candidates.
        #[arg(long, default_value_t = 500)]
        max_candidates: usize,
    },
    /// Monte-Carlo saddle-escape statistics from the problem's saddle.
    #[command(name = "escape-demo")]
    EscapeDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Descent / improve-or-localize / bucket audits of a stored trace.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        /// Eigenvalue subsample budget.
        #[arg(long, default_value_t = 500)]
        max_eig_points: usize,
    },
    /// Sweep epsilon values and tabulate final objective gaps.
    #[command(name = "sweep-eps")]
    SweepEps {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending epsilon values, e.g. "0.125,0.25,0.5,1,2,4,8".
        #[arg(long)]
        eps: String,
        /// Fixed iteration count shared by all rows.
        #[arg(long, default_value_t = 300)]
        iterations: u64,
        /// Fixed step size shared by all rows.
        #[arg(long)]
        eta: Option<f64>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&common.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(overrides) = &common.constants {
        apply_constant_overrides(&mut cfg.constants, overrides)?;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn resolve_for(cfg: &ExperimentConfig, problem: &TestbedProblem) -> Result<NoisePlan> {
    let budget = cfg.budget_for(problem)?;
    let opts = ResolveOptions {
        assume_gradient_concentration: !cfg.no_nsg,
        ..ResolveOptions::default()
    };
    resolve_plan_with(problem.spec(), &budget, &cfg.constants, &opts)
}

fn cmd_calibrate(common: Common) -> Result<()> {
    let cfg = load_config(&common)?;
    let problem = cfg.build_problem()?;
    let budget = cfg.budget_for(&problem)?;
    let plan = resolve_for(&cfg, &problem)?;

    for (k, v) in plan_kv(&plan) {
        println!("{k}={v}");
    }
    let delta_report = if cfg.delta_prehalved {
        cfg.delta
    } else {
        2.0 * cfg.delta
    };
    println!();
    println!(
        "plan for preset '{}' (n = {}, d = {})",
        cfg.preset,
        problem.spec().n_components,
        problem.spec().dim
    );
    println!(
        "  privacy guarantee: ({}, {}) (spent delta = {})",
        cfg.epsilon,
        delta_report,
        cfg.effective_delta()
    );
    println!("  gradient bound C     = {}", plan.grad_bound);
    println!("  gaussian scale Delta = {}", plan.gauss_std);
    println!("  step size eta        = {}", plan.step_size);
    println!("  iterations T         = {}", plan.iterations);
    println!("  accuracy alpha       = {}", plan.alpha);
    println!("  total noise variance = {}", plan.total_noise_var);
    match &plan.escape {
        Some(esc) => println!(
            "  escape schedule      : {} iters, radius {}, drop {}",
            esc.iters, esc.radius, esc.drop
        ),
        None => println!("  escape schedule      : none (rho = 0, first-order mode)"),
    }
    let violations = verify_plan(&plan, problem.spec(), &budget);
    println!(
        "  invariants           : {}",
        if violations.is_empty() {
            "ok"
        } else {
            "FAILED"
        }
    );
    for v in &violations {
        println!("    violation: {v}");
    }
    if let Some(w) = selection_sample_warning(problem.spec(), &budget) {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_run(
    common: Common,
    seed: Option<u64>,
    mode: Option<String>,
    plan_path: Option<PathBuf>,
    coords: Option<bool>,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let problem = cfg.build_problem()?;
    let plan = match plan_path {
        Some(p) => plan_from_text(&std::fs::read_to_string(p)?)?,
        None => resolve_for(&cfg, &problem)?,
    };
    let mode = match mode {
        Some(m) => m.parse()?,
        None => cfg.mode,
    };
    let seeds: Vec<u64> = seed.map(|s| vec![s]).unwrap_or_else(|| cfg.seeds.clone());
    std::fs::create_dir_all(&cfg.out_dir)?;
    let write_coords = coords.or(cfg.coords).unwrap_or(problem.spec().dim <= 50);
    for s in seeds {
        let x0 = problem.default_x0(false, s);
        let trace = run(
            problem.oracles(),
            problem.spec(),
            Some(problem.clamp_radius()),
            &x0,
            &plan,
            mode,
            s,
        )?;
        let path = cfg
            .out_dir
            .join(format!("trace-{}-seed{}-{}.csv", cfg.preset, s, mode));
        write_trace_opts(&trace, &path, write_coords)?;
        println!(
            "seed {s}: T = {}, final f = {}, final |grad| = {}, clips = {}, wrote {}",
            trace.iterations(),
            trace.objective.last().unwrap(),
            trace.grad_norm.last().unwrap(),
            trace.clip_events.iter().map(|&c| c as u64).sum::<u64>(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_check_sosp(
    common: Common,
    trace_path: PathBuf,
    alpha: Option<f64>,
    private: bool,
    seed: u64,
    max_candidates: usize,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let problem = cfg.build_problem()?;
    let trace = read_trace(&trace_path)?;
    let mut plan = trace.plan.clone();
    if let Some(a) = alpha {
        plan.alpha = a;
    }
    let spec = problem.spec();
    let n_points = trace.points.len();
    let count = max_candidates.max(1).min(n_points);
    let indices: Vec<usize> = (0..count)
        .map(|k| {
            if count == 1 {
                0
            } else {
                k * (n_points - 1) / (count - 1)
            }
        })
        .collect();
    let candidates: Vec<Point> = indices.iter().map(|&t| trace.points[t].clone()).collect();

    let eig = EigParams::default();
    let streams = Streams::new(seed);
    let mut eig_rng = streams.stream("check-eig", 0);

    println!("t,grad_norm,min_eig,noisy_grad_norm,noisy_min_eig,is_sosp_exact,is_sosp_private,power_iters");
    if private {
        let budget = cfg.budget_for(&problem)?;
        let scales = laplace_scales(
            plan.grad_bound,
            spec.lipschitz_grad,
            spec.n_components,
            budget.epsilon,
        );
        let mut lap_rng = streams.stream("check-laplace", 0);
        let (chosen, reports) = private_select(
            &candidates,
            problem.oracles(),
            spec,
            &plan,
            scales,
            &eig,
            &mut eig_rng,
            &mut lap_rng,
        )?;
        for (t, r) in indices.iter().zip(&reports) {
            println!(
                "{t},{},{},{},{},{},{},{}",
                r.grad_norm,
                r.min_eig,
                r.noisy_grad_norm.unwrap(),
                r.noisy_min_eig.unwrap(),
                r.is_sosp_exact,
                r.is_sosp_private.unwrap(),
                r.power_iters_used
            );
        }
        match chosen {
            Some(i) => eprintln!("selected candidate index {} (t = {})", i, indices[i]),
            None => eprintln!("no candidate passed the private thresholds"),
        }
    } else {
        for (&t, x) in indices.iter().zip(&candidates) {
            let r = check_sosp(x, problem.oracles(), spec, plan.alpha, &eig, &mut eig_rng)?;
            println!(
                "{t},{},{},,,{},,{}",
                r.grad_norm, r.min_eig, r.is_sosp_exact, r.power_iters_used
            );
        }
    }
    Ok(())
}

fn cmd_escape_demo(common: Common, trials: u64, seed: u64) -> Result<()> {
    let cfg = load_config(&common)?;
    let problem = cfg.build_problem()?;
    let plan = resolve_for(&cfg, &problem)?;
    let saddle = problem
        .truth()
        .saddle
        .clone()
        .ok_or_else(|| Error::Input(format!("preset '{}' has no saddle", cfg.preset)))?;
    let summary = escape_statistics(
        problem.oracles(),
        problem.spec(),
        Some(problem.clamp_radius()),
        &saddle,
        &plan,
        trials,
        seed,
    )?;
    let esc = plan
        .escape
        .as_ref()
        .expect("escape schedule checked inside");
    println!("trials,escape_iters,escape_radius,escape_drop,frac_drop,frac_rise,frac_displaced");
    println!(
        "{},{},{},{},{},{},{}",
        summary.trials,
        esc.iters,
        esc.radius,
        esc.drop,
        summary.frac_drop,
        summary.frac_rise,
        summary.frac_displaced
    );
    Ok(())
}

fn cmd_audit(common: Common, trace_path: PathBuf, max_eig_points: usize) -> Result<()> {
    let cfg = load_config(&common)?;
    let problem = cfg.build_problem()?;
    let trace = read_trace(&trace_path)?;
    let spec = problem.spec();

    let audit = descent_audit(&trace, spec, 0.01)?;
    println!("check,constant,worst_start,worst_len");
    println!(
        "descent,{},{},{}",
        audit.descent_constant, audit.worst_descent.start, audit.worst_descent.len
    );
    println!(
        "improve_or_localize,{},{},{}",
        audit.improve_or_localize_constant, audit.worst_iol.start, audit.worst_iol.len
    );

    if trace.plan.escape.is_some() {
        let b = bucket_audit(
            &trace,
            problem.oracles(),
            spec,
            &EigParams::default(),
            max_eig_points,
            0,
        )?;
        println!();
        println!("large_grad_count,eig_sample_size,saddle_sample_count,buckets,saddle_buckets");
        println!(
            "{},{},{},{},{}",
            b.large_grad_count,
            b.eig_sample_size,
            b.saddle_sample_count,
            b.stats.per_bucket_drop.len(),
            b.stats.saddle_buckets.len()
        );
        println!();
        println!("bucket,drop");
        for (k, drop) in b.stats.per_bucket_drop.iter().enumerate() {
            println!("{k},{drop}");
        }
    }
    Ok(())
}

fn cmd_sweep(common: Common, eps: String, iterations: u64, eta: Option<f64>) -> Result<()> {
    let cfg = load_config(&common)?;
    let problem = cfg.build_problem()?;
    let budget = cfg.budget_for(&problem)?;
    let mut eps_values = Vec::new();
    for part in eps.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        eps_values.push(
            part.parse::<f64>()
                .map_err(|_| Error::Input(format!("bad epsilon '{part}'")))?,
        );
    }
    // Default step size: the classic 0.1 capped for stability on this problem.
    let step = eta.unwrap_or_else(|| (0.1f64).min(0.5 / problem.spec().lipschitz_grad));
    let shape = RunShape {
        step_size: step,
        iterations,
    };
    let table = sweep_epsilon(
        &problem,
        cfg.effective_delta(),
        budget.batch_size,
        &cfg.constants,
        &eps_values,
        &cfg.seeds,
        &shape,
    )?;
    let csv = sweep_to_csv(&table);
    print!("{csv}");
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("sweep-{}.csv", cfg.preset));
    std::fs::write(&path, &csv)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { common } => cmd_calibrate(common),
        Command::Run {
            common,
            seed,
            mode,
            plan,
            coords,
        } => cmd_run(common, seed, mode, plan, coords),
        Command::CheckSosp {
            common,
            trace,
            alpha,
            private,
            seed,
            max_candidates,
        } => cmd_check_sosp(common, trace, alpha, private, seed, max_candidates),
        Command::EscapeDemo {
            common,
            trials,
            seed,
        } => cmd_escape_demo(common, trials, seed),
        Command::Audit {
            common,
            trace,
            max_eig_points,
        } => cmd_audit(common, trace, max_eig_points),
        Command::SweepEps {
            common,
            eps,
            iterations,
            eta,
        } => cmd_sweep(common, eps, iterations, eta),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}

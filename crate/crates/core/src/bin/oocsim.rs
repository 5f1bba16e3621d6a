//! Scenario-driven front end: validate a scenario file, run one scheme, or
//! compare all three schemes on a shared seed.
//!
//! Exit codes: 0 success, 2 parse error, 3 validation/configuration error,
//! 4 simulation divergence or domain exit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use oocsim::analysis;
use oocsim::control::Scheme;
use oocsim::costs;
use oocsim::plant;
use oocsim::scenario::{self, ScenarioFile};
use oocsim::sim;
use oocsim::trace_io;
use oocsim::Error;

const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "oocsim",
    version,
    about = "Distributed PI output-consensus simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Continuous,
    Periodic,
    Event,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Continuous => Scheme::Continuous,
            SchemeArg::Periodic => Scheme::Periodic,
            SchemeArg::Event => Scheme::EventTriggered,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario's assumptions without running it.
    Validate {
        /// Scenario file path or the built-in name "example1".
        scenario: String,
    },
    /// Run one scheme and write the trace plus an analysis report.
    Run {
        scenario: String,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Output directory (default: env OOCSIM_OUT_DIR, then "./out").
        #[arg(long, env = "OOCSIM_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Run several schemes on a shared seed and emit a joined error CSV.
    Compare {
        scenario: String,
        /// Schemes to include (default: all three).
        #[arg(long, value_enum, value_delimiter = ',')]
        schemes: Vec<SchemeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "OOCSIM_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run {
            scenario,
            scheme,
            seed,
            horizon,
            dt,
            out,
        } => cmd_run(&scenario, scheme, seed, horizon, dt, &out),
        Command::Compare {
            scenario,
            schemes,
            seed,
            out,
        } => cmd_compare(&scenario, &schemes, seed, &out),
    }
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Parse(_) | Error::Io(_) => ExitCode::from(EXIT_PARSE),
        Error::Divergence { .. } | Error::DomainExit { .. } => ExitCode::from(EXIT_DIVERGENCE),
        _ => ExitCode::from(EXIT_VALIDATION),
    }
}

fn load(path_or_name: &str) -> Result<ScenarioFile, ExitCode> {
    scenario::load(path_or_name).map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })
}

fn cmd_validate(path: &str) -> ExitCode {
    let file = match load(path) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let built = match file.build() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("validation failed: {e}");
            return exit_for(&e);
        }
    };

    let mut failed = false;
    let connected = oocsim::graph::is_connected(&built.graph);
    println!(
        "assumption 1 (connected undirected graph): {} (lambda_2 = {:.4})",
        pass_str(connected),
        built.graph.lambda2()
    );
    failed |= !connected;

    for (i, cost) in built.costs.costs().iter().enumerate() {
        match (cost.lipschitz_w, cost.strong_convexity_m) {
            (Some(w), Some(m)) => {
                println!("assumptions 2-3, cost {i}: analytic constants w = {w}, m = {m}")
            }
            _ => {
                let mut lo = vec![-10.0_f64; cost.dim()];
                let hi = vec![10.0_f64; cost.dim()];
                for &(idx, b) in cost.guards() {
                    lo[idx] = lo[idx].max(b + 0.1);
                }
                match costs::estimate_constants(cost, &lo, &hi, 200) {
                    Ok((w_est, m_est)) => println!(
                        "assumptions 2-3, cost {i}: estimated over {lo:?}..{hi:?}: \
                         w ~ {w_est:.4}, m ~ {m_est:.4} (not certified)"
                    ),
                    Err(e) => println!("assumptions 2-3, cost {i}: estimate failed ({e})"),
                }
            }
        }
    }

    for (i, p) in built.plants.iter().enumerate() {
        let report = plant::validate_assumption4(p);
        let ok = report.cb_full_rank;
        println!(
            "assumption 4, agent {i}: rank(CB) = {} of {} -> {}; controllability rank {} of {}{}",
            report.cb_rank,
            report.q,
            pass_str(ok),
            report.controllability_rank,
            report.n_states,
            if report.controllable {
                ""
            } else {
                " (warning: uncontrollable modes)"
            }
        );
        failed |= !ok;
    }

    for warning in built.controller.bound_violations() {
        println!("warning: {warning}");
    }

    if failed {
        eprintln!("validation failed");
        ExitCode::from(EXIT_VALIDATION)
    } else {
        println!("scenario valid");
        ExitCode::SUCCESS
    }
}

fn pass_str(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    path: &str,
    scheme: Option<SchemeArg>,
    seed: Option<u64>,
    horizon: Option<f64>,
    dt: Option<f64>,
    out: &Path,
) -> ExitCode {
    let mut file = match load(path) {
        Ok(f) => f,
        Err(code) => return code,
    };
    if let Some(s) = scheme {
        file.controller.scheme = s.into();
        if Scheme::from(s).is_sampled() && file.controller.delta.is_none() {
            file.controller.delta = Some(0.2);
        }
    }
    if let Some(s) = seed {
        file.sim.seed = s;
    }
    if let Some(h) = horizon {
        file.sim.horizon = h;
    }
    if let Some(d) = dt {
        file.sim.dt = d;
    }

    match run_one(
        &file,
        out,
        &format!("{}_{}", file.meta.name, file.controller.scheme),
    ) {
        Ok(_) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn run_one(file: &ScenarioFile, out: &Path, stem: &str) -> Result<sim::SimulationTrace, ExitCode> {
    let scenario = file.build().map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })?;
    let trace = sim::run(&scenario).map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })?;

    let (csv_path, json_path) =
        trace_io::write_trace(&trace, Some(file), out, stem).map_err(|e| {
            eprintln!("error: {e}");
            exit_for(&e)
        })?;

    println!("scheme:        {}", trace.scheme);
    println!("final error:   {:.6e}", trace.final_error());
    println!(
        "min error:     {:.6e} at t = {:.3}",
        trace.min_error, trace.min_error_time
    );
    match analysis::fit_rate(&trace, 1e-12) {
        Ok(fit) => println!(
            "fitted rate:   {:.4} (r^2 = {:.4}, window {:.2}..{:.2})",
            fit.rate, fit.r_squared, fit.window.0, fit.window.1
        ),
        Err(e) => println!("fitted rate:   unavailable ({e})"),
    }
    if trace.scheme.is_sampled() {
        if let Ok(stats) = analysis::event_stats(&trace, trace.delta) {
            println!(
                "events:        {} total, min gap {:?}",
                stats.total_events, stats.min_gap
            );
        }
    }
    if let Some(t0) = scenario.controller.tau0 {
        println!("tau0:          {t0:.6e}");
    }
    println!("trace:         {}", csv_path.display());
    println!("sidecar:       {}", json_path.display());

    let report_path = out.join(format!("{stem}_report.json"));
    let report = build_report(&trace);
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap()).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_PARSE)
    })?;
    println!("report:        {}", report_path.display());
    Ok(trace)
}

fn build_report(trace: &sim::SimulationTrace) -> serde_json::Value {
    let mut report = serde_json::json!({
        "scheme": trace.scheme.to_string(),
        "final_error": trace.final_error(),
        "min_error": trace.min_error,
        "min_error_time": trace.min_error_time,
    });
    if let Ok(fit) = analysis::fit_rate(trace, 1e-12) {
        report["rate_fit"] = serde_json::to_value(&fit).unwrap();
    }
    if let Ok(audit) = analysis::audit_lyapunov(trace) {
        report["lyapunov_audit"] = serde_json::to_value(&audit).unwrap();
    }
    if trace.scheme.is_sampled() {
        if let Ok(stats) = analysis::event_stats(trace, trace.delta) {
            report["event_stats"] = serde_json::to_value(&stats).unwrap();
        }
    }
    report
}

fn cmd_compare(path: &str, schemes: &[SchemeArg], seed: Option<u64>, out: &Path) -> ExitCode {
    let base = match load(path) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let schemes: Vec<SchemeArg> = if schemes.is_empty() {
        vec![SchemeArg::Continuous, SchemeArg::Periodic, SchemeArg::Event]
    } else {
        schemes.to_vec()
    };

    let mut traces = Vec::new();
    let mut any_failed = false;
    for &arg in &schemes {
        let scheme: Scheme = arg.into();
        let mut file = base.clone();
        file.controller.scheme = scheme;
        if scheme.is_sampled() && file.controller.delta.is_none() {
            file.controller.delta = Some(0.2);
        }
        if let Some(s) = seed {
            file.sim.seed = s;
        }
        let stem = format!("{}_{}", file.meta.name, scheme);
        match run_one(&file, out, &stem) {
            Ok(trace) => traces.push((scheme.to_string(), trace)),
            Err(_) => {
                eprintln!("scheme {scheme} failed; continuing");
                any_failed = true;
            }
        }
        println!();
    }

    if !traces.is_empty() {
        let refs: Vec<(String, &sim::SimulationTrace)> =
            traces.iter().map(|(n, t)| (n.clone(), t)).collect();
        let cmp_path = out.join(format!("{}_comparison.csv", base.meta.name));
        match std::fs::File::create(&cmp_path)
            .map_err(Error::Io)
            .and_then(|f| trace_io::write_comparison_csv(&refs, f))
        {
            Ok(()) => println!("comparison:    {}", cmp_path.display()),
            Err(e) => {
                eprintln!("error writing comparison: {e}");
                any_failed = true;
            }
        }
        println!("{:<18} {:>14} {:>10}", "scheme", "final error", "events");
        for (name, trace) in &traces {
            println!(
                "{:<18} {:>14.6e} {:>10}",
                name,
                trace.final_error(),
                trace.total_events()
            );
        }
    }

    if any_failed {
        ExitCode::from(EXIT_DIVERGENCE)
    } else {
        ExitCode::SUCCESS
    }
}

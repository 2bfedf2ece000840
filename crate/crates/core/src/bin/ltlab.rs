//! Command-line experiment runner: scale tables, path/population/queue
//! simulation, local-time profiles, and the verification suites.
//!
//! Exit codes: 0 = success/pass, 1 = suite failure, 2 = configuration error.

use clap::{Parser, Subcommand};
use ltlab::config::Config;
use ltlab::localtime::profile_from_path;
use ltlab::model::ModelParams;
use ltlab::paths::{simulate, StartLaw, StopRule};
use ltlab::population::{simulate_cmj, simulate_ps, InitLaw, StepPath, DEFAULT_MAX_EVENTS};
use ltlab::report::SuiteReport;
use ltlab::rng::stream_rng;
use ltlab::scale::solve_scale;
use ltlab::suites;
use ltlab::{LabError, Result};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ltlab", version, about = "Simulation and verification lab for compound Poisson processes with negative drift")]
struct Cli {
    /// Master seed; every replica derives its own RNG stream from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// key=value config file ('#' starts a comment). Keys documented in the README.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report/CSV output (stdout is always written too).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the per-suite Monte Carlo replica count.
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the scale-function table as CSV (x,w,wprime).
    ScaleTable,
    /// Simulate one path and emit its jump events as CSV plus a JSON footer.
    SimulatePath,
    /// Simulate the branching population and emit its step path as CSV.
    SimulateCmj,
    /// Simulate one Processor-Sharing busy period and emit the queue-length path as CSV.
    SimulatePs,
    /// Simulate one killed path and emit its local-time profile as CSV (level,count).
    Profile,
    /// Run one named verification suite.
    Verify { suite: String },
    /// Run the finite-dimensional convergence diagnostic.
    ConvergeFdd,
    /// Run every verification suite plus the convergence diagnostic.
    RunAll,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut pairs: Vec<String> = Vec::new();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                pairs.push(line.to_string());
            }
        }
    }
    if let Some(n) = cli.replicas {
        pairs.push(format!("replicas={n}"));
    }
    Config::from_pairs(pairs)
}

fn model_from(cfg: &Config) -> Result<ModelParams> {
    ModelParams::new(cfg.get_f64("alpha", 1.5)?, cfg.get_f64("kappa", 0.5)?, cfg.get_u64("n", 100)?)
}

fn write_out(out: &Option<PathBuf>, name: &str, content: &str) -> Result<()> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), content)?;
    }
    Ok(())
}

fn fmt12(x: f64) -> String {
    format!("{x:.12e}")
}

fn step_path_csv(path: &StepPath) -> String {
    let mut s = String::from("time,value\n");
    for (t, v) in path.starts.iter().zip(&path.values) {
        s.push_str(&format!("{},{}\n", fmt12(*t), fmt12(*v)));
    }
    s
}

fn tests_csv(report: &SuiteReport) -> String {
    let mut s = String::from("name,method,statistic,threshold,n1,n2,pass\n");
    for t in &report.tests {
        s.push_str(&format!(
            "{},{:?},{},{},{},{},{}\n",
            t.name,
            t.method,
            fmt12(t.statistic),
            fmt12(t.threshold),
            t.n1,
            t.n2,
            t.pass
        ));
    }
    s
}

fn emit_report(report: &SuiteReport, out: &Option<PathBuf>) -> Result<()> {
    let json = report.to_json();
    println!("{json}");
    write_out(out, &format!("{}.json", report.suite), &json)?;
    write_out(out, &format!("{}.csv", report.suite), &tests_csv(report))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let seed = cli.seed;
    match &cli.command {
        Command::ScaleTable => {
            let p = model_from(&cfg)?;
            let step = cfg.get_f64("step", 1e-3)?;
            let x_max = cfg.get_f64("x_max", 10.0)?;
            let table = solve_scale(p, step, x_max)?;
            let mut s = String::from("x,w,wprime\n");
            for i in 0..table.values.len() {
                s.push_str(&format!(
                    "{},{},{}\n",
                    fmt12(i as f64 * table.step),
                    fmt12(table.values[i]),
                    fmt12(table.deriv[i])
                ));
            }
            print!("{s}");
            write_out(&cli.out, "scale_table.csv", &s)?;
            Ok(true)
        }
        Command::SimulatePath => {
            let p = model_from(&cfg)?;
            let x0 = cfg.get_f64("x0", 1.0)?;
            let horizon = cfg.get_f64("horizon", 0.0)?;
            let stops = if horizon > 0.0 {
                vec![StopRule::Horizon(horizon)]
            } else {
                vec![StopRule::HitZero]
            };
            let mut rng = stream_rng(seed, 0);
            let path = simulate(&p, StartLaw::Fixed(x0), &stops, &mut rng)?;
            let mut s = String::from("time,pre_jump_value,jump\n");
            for ev in &path.events {
                s.push_str(&format!("{},{},{}\n", fmt12(ev.time), fmt12(ev.pre_jump_value), fmt12(ev.jump)));
            }
            s.push_str(&format!(
                "# {}\n",
                serde_json::json!({
                    "x0": path.x0,
                    "end_time": path.end_time,
                    "end_reason": format!("{:?}", path.end_reason),
                    "n_events": path.events.len(),
                })
            ));
            print!("{s}");
            write_out(&cli.out, "path.csv", &s)?;
            Ok(true)
        }
        Command::SimulateCmj => {
            let p = model_from(&cfg)?;
            let z0 = cfg.get_u64("z0", 1)?;
            let horizon = cfg.get_f64("horizon", 0.0)?;
            let horizon = if horizon > 0.0 { Some(horizon) } else { None };
            let mut rng = stream_rng(seed, 0);
            let out = simulate_cmj(&p, z0, InitLaw::Lifetime, horizon, DEFAULT_MAX_EVENTS, &mut rng)?;
            let s = step_path_csv(&out.path);
            print!("{s}");
            write_out(&cli.out, "cmj.csv", &s)?;
            Ok(true)
        }
        Command::SimulatePs => {
            let p = model_from(&cfg)?;
            let z0 = cfg.get_u64("z0", 1)?;
            let mut rng = stream_rng(seed, 0);
            let out = simulate_ps(&p, z0, InitLaw::Lifetime, DEFAULT_MAX_EVENTS, &mut rng)?;
            let s = step_path_csv(&out.queue);
            print!("{s}");
            write_out(&cli.out, "ps.csv", &s)?;
            Ok(true)
        }
        Command::Profile => {
            let p = model_from(&cfg)?;
            let x0 = cfg.get_f64("x0", 1.0)?;
            let grid_step = cfg.get_f64("grid_step", 0.1)?;
            let mut rng = stream_rng(seed, 0);
            let path = simulate(&p, StartLaw::Fixed(x0), &[StopRule::HitZero], &mut rng)?;
            let prof = profile_from_path(&path, 1.0);
            let mut s = String::from("level,count\n");
            for (level, count) in prof.grid(grid_step, prof.domain_end) {
                s.push_str(&format!("{},{}\n", fmt12(level), count));
            }
            print!("{s}");
            write_out(&cli.out, "profile.csv", &s)?;
            Ok(true)
        }
        Command::Verify { suite } => {
            let report = suites::run_suite(suite, &cfg, seed)?;
            emit_report(&report, &cli.out)?;
            Ok(report.pass)
        }
        Command::ConvergeFdd => {
            let report = suites::run_converge_fdd(&cfg, seed)?;
            emit_report(&report, &cli.out)?;
            Ok(report.pass)
        }
        Command::RunAll => {
            let reports = suites::run_all(&cfg, seed)?;
            let mut all_pass = true;
            for report in &reports {
                emit_report(report, &cli.out)?;
                all_pass &= report.pass;
            }
            Ok(all_pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (LabError::Config(_) | LabError::Param(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

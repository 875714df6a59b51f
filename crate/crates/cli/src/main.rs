mod cache;
mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use hpfnav::export::{field_to_csv, fmt_f64, trajectory_to_csv};
use hpfnav::scenario::{load_scenario_with_overrides, parse_override, Scenario};
use hpfnav::sim::{reference_path, Metrics};
use hpfnav::{PotentialField, SimError, SolveError};
use rayon::prelude::*;

use svg::Plot;

#[derive(Parser)]
#[command(name = "hpfnav", version, about = "Harmonic potential field planning and robot simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario's field; write field.csv and field.svg.
    Solve(Common),
    /// Trace the kinematic reference path; write reference.csv and reference.svg.
    Refpath(Common),
    /// Run the closed loop; write trajectory.csv, metrics.json and trajectory.svg.
    Simulate(Common),
    /// Run a one- or two-axis parameter sweep; write sweep.csv.
    Sweep(SweepArgs),
    /// Solve and report residual, maximum principle, C_m and the damping condition.
    Check(Common),
}

#[derive(Args)]
struct Common {
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scenario override, `dotted.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `key=v1,v2,...`
    #[arg(long)]
    axis: String,
    #[arg(long)]
    axis2: Option<String>,
    /// Concurrent runs; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

/// An error with its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }

    fn solver(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        Failure::solver(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::solver(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Refpath(a) => cmd_refpath(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Check(a) => cmd_check(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load(a: &Common, extra: &[(String, String)]) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(&a.scenario)
        .with_context(|| format!("reading {}", a.scenario.display()))
        .map_err(Failure::input)?;
    let mut overrides = a.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>().map_err(Failure::input)?;
    overrides.extend_from_slice(extra);
    load_scenario_with_overrides(&text, &overrides).map_err(Failure::input)
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join(name), contents))
        .with_context(|| format!("writing {}", dir.join(name).display()))
        .map_err(Failure::input)
}

fn field_for(sc: &Scenario, out: &Path) -> Result<PotentialField, Failure> {
    Ok(cache::load_or_solve(sc, &cache::cache_dir(out))?)
}

fn cmd_solve(a: &Common) -> Outcome {
    let sc = load(a, &[])?;
    let field = field_for(&sc, &a.out)?;
    write(&a.out, "field.csv", &field_to_csv(&field))?;
    let mut plot = Plot::new(&field);
    plot.marker(sc.bvp.start, "#2a7");
    plot.marker(field.target(), "#d22");
    write(&a.out, "field.svg", &plot.finish())?;
    println!(
        "solved {}x{} {} field: residual {:e}, C_m {}",
        sc.workspace.width(),
        sc.workspace.height(),
        sc.bvp.kind.name(),
        field.residual(),
        field.max_gradient_magnitude()
    );
    Ok(())
}

fn cmd_refpath(a: &Common) -> Outcome {
    let sc = load(a, &[])?;
    let field = field_for(&sc, &a.out)?;
    let reference = reference_path(&field, sc.initial.position(), &sc.sim)?;
    let mut csv = String::from("x,y\n");
    for p in &reference.points {
        let _ = writeln!(csv, "{},{}", fmt_f64(p.x), fmt_f64(p.y));
    }
    write(&a.out, "reference.csv", &csv)?;
    let mut plot = Plot::new(&field);
    plot.path(&reference.points, "#1f5fbf", true);
    plot.marker(sc.initial.position(), "#2a7");
    plot.marker(field.target(), "#d22");
    write(&a.out, "reference.svg", &plot.finish())?;
    println!(
        "reference path: length {}, reached target {}, max guidance {}",
        reference.length(),
        reference.reached_target,
        reference.max_guidance
    );
    Ok(())
}

fn cmd_simulate(a: &Common) -> Outcome {
    let sc = load(a, &[])?;
    let field = field_for(&sc, &a.out)?;
    let (traj, metrics) = sc.closed_loop().run(&field)?;
    let reference = reference_path(&field, sc.initial.position(), &sc.sim)?;
    write(&a.out, "trajectory.csv", &trajectory_to_csv(&traj))?;
    let json = serde_json::to_string_pretty(&metrics).map_err(Failure::input)?;
    write(&a.out, "metrics.json", &format!("{json}\n"))?;
    let mut plot = Plot::new(&field);
    plot.path(&reference.points, "#1f5fbf", true);
    plot.path(&traj.positions(), "#111", false);
    plot.marker(sc.initial.position(), "#2a7");
    plot.marker(field.target(), "#d22");
    write(&a.out, "trajectory.svg", &plot.finish())?;
    println!("{}", summary(&metrics));
    Ok(())
}

fn summary(m: &Metrics) -> String {
    match m.convergence_time {
        Some(t) => format!("converged at t = {t}, max deviation {}", m.max_deviation),
        None => format!("not converged ({:?}), diverged = {}", m.end_reason, m.diverged),
    }
}

/// `key=v1,v2,...`
fn parse_axis(spec: &str) -> Result<(String, Vec<String>), Failure> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Failure::input(anyhow!("axis `{spec}` must look like key=v1,v2,...")))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(Failure::input(anyhow!("axis `{spec}` names no values")));
    }
    Ok((key.trim().to_string(), values))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_sweep(a: &SweepArgs) -> Outcome {
    let mut axes = vec![parse_axis(&a.axis)?];
    if let Some(spec) = &a.axis2 {
        axes.push(parse_axis(spec)?);
    }
    // Cartesian product, first axis outermost
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    let scenarios = points.iter().map(|p| load(&a.common, p)).collect::<Result<Vec<_>, _>>()?;

    let mut fields: Vec<(String, PotentialField)> = Vec::new();
    let mut field_of = Vec::with_capacity(scenarios.len());
    for sc in &scenarios {
        let key = cache::field_key(sc);
        let slot = match fields.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                fields.push((key, field_for(sc, &a.common.out)?));
                fields.len() - 1
            }
        };
        field_of.push(slot);
    }

    let jobs = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(Failure::input)?;
    let results: Vec<Result<Metrics, SimError>> = pool.install(|| {
        scenarios
            .par_iter()
            .zip(field_of.par_iter())
            .map(|(sc, &f)| sc.closed_loop().run(&fields[f].1).map(|(_, m)| m))
            .collect()
    });

    let mut csv = String::new();
    for (key, _) in &axes {
        csv.push_str(&csv_field(key));
        csv.push(',');
    }
    csv.push_str("converged,convergence_time,max_deviation,min_clearance,diverged,end_reason\n");
    let mut converged = 0;
    for (point, result) in points.iter().zip(results) {
        let m = result?;
        for (_, v) in point {
            csv.push_str(&csv_field(v));
            csv.push(',');
        }
        converged += m.converged as usize;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            m.converged,
            m.convergence_time.map(fmt_f64).unwrap_or_default(),
            fmt_f64(m.max_deviation),
            fmt_f64(m.min_clearance),
            m.diverged,
            serde_json::to_value(m.end_reason).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        );
    }
    write(&a.common.out, "sweep.csv", &csv)?;
    println!("{} runs, {converged} converged", points.len());
    Ok(())
}

fn cmd_check(a: &Common) -> Outcome {
    let sc = load(a, &[])?;
    let field = field_for(&sc, &a.out)?;
    let mut failed = Vec::new();
    let mut report = |name: &str, ok: bool, detail: String| {
        println!("{:<5} {name}: {detail}", if ok { "ok" } else { "FAIL" });
        if !ok {
            failed.push(name.to_string());
        }
    };
    let residual = field.recompute_residual();
    report(
        "residual",
        residual <= field.tolerance(),
        format!("{residual:e} (tolerance {:e})", field.tolerance()),
    );
    let violations = field.check_max_principle();
    report("maximum principle", violations.is_empty(), format!("{} interior extrema", violations.len()));
    let cm = field.max_gradient_magnitude();
    report("C_m", cm.is_finite() && cm > 0.0, format!("{cm}"));
    if sc.robot_kind.is_dynamic() {
        let g = sc.gains;
        report(
            "damping condition KD1 > K1, KD2 > 0",
            g.damping_dominates(),
            format!("KD1 = {}, K1 = {}, KD2 = {}", g.kd1, g.k1, g.kd2),
        );
    } else {
        println!("n/a   damping condition KD1 > K1, KD2 > 0: kinematic model");
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            error: anyhow!("failed checks: {}", failed.join(", ")),
        })
    }
}

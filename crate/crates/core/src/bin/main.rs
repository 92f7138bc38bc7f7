use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use reflected_morse::scenario::{
    builtin_suite, emit_batch_csv, emit_csv, emit_plot, load_scenario, load_scenario_as, run, to_json, to_json_value, RunKind, RunReport, Scenario,
    Status, BUILTIN,
};
use reflected_morse::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "reflected-morse", version, about = "Reflected paths, Jacobi fields and Morse index checks")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Integrate a path from initial data and report its events.
    Shoot,
    /// Solve the two-point problem for the scenario endpoints.
    Solve,
    /// Fixed-endpoint index theorem.
    IndexFixed,
    /// Periodic index theorem (or a sweep, for sweep scenarios).
    IndexPeriodic,
    /// Run the built-in scenario suite, or the given scenario files.
    VerifyAll {
        files: Vec<PathBuf>,
    },
    /// Write plot data: det B along the path and eigenvalue tables.
    EmitPlot,
}

fn write_out(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load(cli: &Cli, kind: Option<RunKind>) -> Result<Scenario, Error> {
    let Some(path) = &cli.scenario else {
        return Err(Error::Scenario("--scenario <file> is required".into()));
    };
    let mut s = load_scenario_as(path, kind)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn input_error(cli: &Cli, name: &str, e: &Error) -> anyhow::Result<Status> {
    eprintln!("error: {e}");
    let v = RunReport::from_load_error(name, e);
    if matches!(cli.format, Format::Json) {
        write_out(cli.out.as_deref(), &to_json_value(&v)?)?;
    }
    Ok(Status::InputError)
}

fn summary_line(r: &RunReport) {
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    eprint!("{}: {:?} ({} checks, {:.2} s)", r.scenario.name, r.status, r.checks.len(), r.elapsed.as_secs_f64());
    if let Some(e) = &r.error {
        eprint!(" {}: {}", e.kind, e.message);
    }
    if !failed.is_empty() {
        eprint!(" failed: {}", failed.join(", "));
    }
    eprintln!();
}

fn single(cli: &Cli, kind: Option<RunKind>, plot: bool) -> anyhow::Result<Status> {
    let scenario = match load(cli, kind) {
        Ok(s) => s,
        Err(e) => {
            let name = cli.scenario.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            return input_error(cli, &name, &e);
        }
    };
    let report = run(&scenario);
    summary_line(&report);
    let text = if plot {
        emit_plot(&report)
    } else {
        match cli.format {
            Format::Json => to_json(&report)?,
            Format::Csv => emit_csv(&report)?,
        }
    };
    write_out(cli.out.as_deref(), &text)?;
    Ok(report.status)
}

fn verify_all(cli: &Cli, files: &[PathBuf]) -> anyhow::Result<Status> {
    let mut loaded: Vec<Result<Scenario, (String, Error)>> = Vec::new();
    if files.is_empty() {
        let suite = builtin_suite().context("built-in suite")?;
        loaded.extend(suite.into_iter().map(Ok));
    } else {
        for f in files {
            loaded.push(load_scenario(f).map_err(|e| (f.display().to_string(), e)));
        }
    }
    for s in loaded.iter_mut().flatten() {
        if let Some(seed) = cli.seed {
            s.seed = seed;
        }
    }
    let reports = run_batch(&loaded);
    let mut statuses = Vec::new();
    let mut values = Vec::new();
    for (l, r) in loaded.iter().zip(reports) {
        match (l, r) {
            (Ok(_), Some(r)) => {
                summary_line(&r);
                statuses.push(r.status);
                values.push(serde_json::to_value(&r)?);
            }
            (Err((name, e)), _) => {
                eprintln!("{name}: {e}");
                statuses.push(Status::InputError);
                values.push(RunReport::from_load_error(name, e));
            }
            (Ok(_), None) => unreachable!(),
        }
    }
    let status = Status::worst(statuses);
    let passed = values.iter().filter(|v| v["status"] == "pass").count();
    eprintln!("{passed}/{} scenarios pass", values.len());
    let text = match cli.format {
        Format::Json => to_json_value(&serde_json::json!({
            "suite": if files.is_empty() { BUILTIN.len().to_string() + " built-in scenarios" } else { format!("{} files", files.len()) },
            "status": status,
            "exit_code": status.exit_code(),
            "reports": values,
        }))?,
        Format::Csv => emit_batch_csv(&values)?,
    };
    write_out(cli.out.as_deref(), &text)?;
    Ok(status)
}

fn run_batch(loaded: &[Result<Scenario, (String, Error)>]) -> Vec<Option<RunReport>> {
    use rayon::prelude::*;
    loaded.par_iter().map(|l| l.as_ref().ok().map(run)).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    let res = match &cli.verb {
        Verb::Shoot => single(&cli, Some(RunKind::Shoot), false),
        Verb::Solve => single(&cli, Some(RunKind::Solve), false),
        Verb::IndexFixed => single(&cli, Some(RunKind::IndexFixed), false),
        Verb::IndexPeriodic => single(&cli, Some(RunKind::IndexPeriodic), false),
        Verb::EmitPlot => single(&cli, None, true),
        Verb::VerifyAll { files } => verify_all(&cli, files),
    };
    match res {
        Ok(s) => ExitCode::from(s.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(4)
        }
    }
}

mod args;
mod job;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

use args::Cli;
use job::Job;

const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Lib(#[from] lsmnet::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Lib(lsmnet::Error::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub allow_nonconverged: bool,
    pub out: PathBuf,
    pub config: Job,
    pub artifacts: Vec<String>,
    pub duration_secs: f64,
}

fn job_seed(job: &Job) -> u64 {
    match job {
        Job::SimulateNetwork { sim, .. } => sim.seed,
        Job::SimulateTransplants { generator } => generator.seed,
        Job::Fit { refine, .. } | Job::Eval { refine, .. } => refine.fit.seed,
        Job::Table1 { sim, .. } => sim.seed,
        Job::Coxph { seed, .. } => *seed,
        Job::Pipeline { config, .. } => config.generator.seed,
    }
}

fn resolve(cli: Cli) -> Result<(Job, PathBuf, Option<usize>, bool), CliError> {
    match (cli.config, cli.command) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "--config replaces the subcommand; give one or the other".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "a subcommand or --config is required (see --help)".into(),
        )),
        (Some(path), None) => {
            let m: RunManifest = lsmnet::io::read_json(&path)?;
            let out = cli.out.unwrap_or(m.out);
            let threads = cli.threads.or(m.threads);
            Ok((
                m.config,
                out,
                threads,
                cli.allow_nonconverged || m.allow_nonconverged,
            ))
        }
        (None, Some(command)) => {
            let job = Job::from_command(command, cli.seed)?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("out"));
            Ok((job, out, cli.threads, cli.allow_nonconverged))
        }
    }
}

fn absolute_out(out: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    std::fs::canonicalize(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn real_main(cli: Cli) -> Result<u8, CliError> {
    let (job, out, threads, allow_nonconverged) = resolve(cli)?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out = absolute_out(&out)?;
    let start = Instant::now();
    let outcome = run::execute(&job, &out)?;
    let manifest = RunManifest {
        command: job.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: job_seed(&job),
        threads,
        allow_nonconverged,
        out: out.clone(),
        config: job,
        artifacts: outcome.artifacts.clone(),
        duration_secs: start.elapsed().as_secs_f64(),
    };
    lsmnet::io::write_json(&out.join(MANIFEST_FILE), &manifest)?;

    print!("{}", outcome.report);
    println!(
        "wrote {} artifacts to {}",
        outcome.artifacts.len() + 1,
        out.display()
    );
    for f in &outcome.failures {
        eprintln!("failed: {f}");
    }
    if !outcome.nonconverged.is_empty() {
        let verb = if allow_nonconverged {
            "tolerated"
        } else {
            "error"
        };
        for n in &outcome.nonconverged {
            eprintln!("{verb}: not converged: {n}");
        }
    }
    Ok(if !outcome.failures.is_empty() {
        1
    } else if !outcome.nonconverged.is_empty() && !allow_nonconverged {
        3
    } else {
        0
    })
}

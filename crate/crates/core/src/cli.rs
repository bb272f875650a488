//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::harness::{run_experiment, run_single, ExperimentConfig, HarnessError, RunPoint, RunSummary};
use crate::metrics::{analyze, render_table, replay_render};
use crate::nn::{gradient_check, TrunkSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "taskgrid", version, about = "Multitask grid world with independent DDDQN / A2C learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one run at the config's agent count, bottleneck and seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every point of the config's `[sweep]` grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of both network heads.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a recorded frames.jsonl as text grids.
    Replay {
        #[arg(long)]
        frames: PathBuf,
    },
    /// Aggregate specialization and fairness across run directories.
    Analyze {
        /// Run directories, or parents containing run directories.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Only count the last K episodes of each run.
        #[arg(long)]
        window: Option<usize>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn harness_exit(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Config(_) | HarnessError::Io { .. } | HarnessError::Env(_) => EXIT_USER,
        _ => EXIT_INTERNAL,
    }
}

fn summary_line(dir: &Path, s: &RunSummary) -> String {
    let fairness = s.population.fairness.map(|f| format!("{f:.4}")).unwrap_or_else(|| "n/a".into());
    format!(
        "{}: total_reward {:.3}, mean_specialization {:.4}, fairness {fairness}",
        dir.display(),
        s.population.total_reward,
        s.population.mean_specialization
    )
}

/// Expands parents into their run subdirectories (those with an
/// `episodes.csv` or `summary.json`), sorted by name.
fn expand_runs(paths: &[PathBuf]) -> Vec<PathBuf> {
    let is_run = |p: &Path| p.join("summary.json").exists() || p.join("episodes.csv").exists();
    let mut out = Vec::new();
    for p in paths {
        if is_run(p) || !p.is_dir() {
            out.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> =
            std::fs::read_dir(p).into_iter().flatten().flatten().map(|e| e.path()).filter(|c| c.is_dir()).collect();
        children.sort();
        if children.is_empty() {
            out.push(p.clone());
        } else {
            out.extend(children);
        }
    }
    out
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USER
                }
            };
        }
    };
    match cli.command {
        Command::Run { config, seed, out: out_dir } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return harness_exit(&e);
                }
            };
            if let Some(d) = out_dir {
                cfg.output_dir = d;
            }
            let point = RunPoint {
                agents: cfg.env.n_agents,
                bottleneck: cfg.env.bottleneck,
                seed: seed.unwrap_or(cfg.master_seed),
            };
            let dir = cfg.output_dir.join(point.dir_name());
            match run_single(&cfg, point, &dir) {
                Ok(s) => {
                    let _ = writeln!(out, "{}", summary_line(&dir, &s));
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", dir.display());
                    harness_exit(&e)
                }
            }
        }
        Command::Sweep { config } => {
            let outcomes = match ExperimentConfig::load(&config).and_then(|c| run_experiment(&c)) {
                Ok(o) => o,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return harness_exit(&e);
                }
            };
            let mut code = EXIT_OK;
            for o in &outcomes {
                match &o.result {
                    Ok(s) => {
                        let _ = writeln!(out, "{}", summary_line(&o.dir, s));
                    }
                    Err(e) => {
                        let _ = writeln!(err, "error: {}: {e}", o.dir.display());
                        code = code.max(harness_exit(e));
                    }
                }
            }
            code
        }
        Command::Gradcheck { tolerance, seed } => {
            if tolerance.is_nan() || tolerance <= 0.0 {
                let _ = writeln!(err, "error: tolerance must be positive");
                return EXIT_USER;
            }
            let report = gradient_check(&TrunkSpec::default(), seed, tolerance);
            for p in &report.params {
                let status = if p.max_rel_error < tolerance { "ok" } else { "FAIL" };
                let _ = writeln!(
                    out,
                    "{status:4} {:28} max_rel_error {:.3e} ({} checked, {} skipped at ReLU kinks)",
                    p.name, p.max_rel_error, p.checked, p.skipped
                );
            }
            let _ = writeln!(out, "max relative error {:.3e}, tolerance {tolerance:e}", report.max_rel_error());
            if report.passed() {
                EXIT_OK
            } else {
                let _ = writeln!(err, "gradient check failed: {}", report.failures().join(", "));
                EXIT_INTERNAL
            }
        }
        Command::Replay { frames } => {
            let text = match std::fs::read_to_string(&frames) {
                Ok(t) => t,
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", frames.display());
                    return EXIT_USER;
                }
            };
            match replay_render(&text) {
                Ok(r) => {
                    let _ = out.write_all(r.as_bytes());
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", frames.display());
                    EXIT_USER
                }
            }
        }
        Command::Analyze { runs, window, out: table_path } => {
            if window == Some(0) {
                let _ = writeln!(err, "error: --window must be at least 1");
                return EXIT_USER;
            }
            let dirs = expand_runs(&runs);
            let (loaded, rows, errors) = analyze(&dirs, window);
            for e in &errors {
                let _ = writeln!(err, "warning: {e}");
            }
            if loaded.is_empty() {
                let _ = writeln!(err, "error: no usable runs");
                return EXIT_USER;
            }
            let table = render_table(&rows);
            match table_path {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, &table) {
                        let _ = writeln!(err, "error: {}: {e}", p.display());
                        return EXIT_USER;
                    }
                }
                None => {
                    let _ = out.write_all(table.as_bytes());
                }
            }
            EXIT_OK
        }
    }
}

pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli(argv, &mut stdout.lock(), &mut stderr.lock())
}

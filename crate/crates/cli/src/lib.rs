//! Command-line front end. `run` parses arguments, executes one stage and
//! returns the process exit code: 0 success, 2 invalid input, 3 I/O or
//! parse failure, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use dfssmvep::cca::Method;
use dfssmvep::dataset::Manifest;
use dfssmvep::metrics::TRule;
use dfssmvep::pipeline::{
    build_dataset, build_plan, build_schedule, classify_dataset_dir, evaluate_predictions,
    plan_summary, psd_files, read_plan, read_predictions, sweep_dataset, Overrides, RunConfig,
};
use dfssmvep::synth::Dataset;
use dfssmvep::{Error, ErrorKind, Result};

#[derive(Debug, Parser)]
#[command(name = "dfssmvep", version, about = "Dual-frequency SSmVEP pipeline")]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for synthesis.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_method)]
    classifier: Option<Method>,
    /// Classification window in seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    window: Option<f64>,
    /// Selection time used for ITR.
    #[arg(long = "t-rule", global = true, value_parser = parse_t_rule)]
    t_rule: Option<TRule>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive the frequency pairs and write the plan.
    Plan {
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the frame schedule of one target.
    Schedule {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        target: usize,
        /// Seconds; the configured trial duration when omitted.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        /// Plan file; derived from the configuration when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every trial of a dataset.
    Classify {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-target scores.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Skip the band-pass filter.
        #[arg(long)]
        no_filter: bool,
    },
    /// Accuracy, ITR, per-class indices and ANOVA for a predictions file.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and ITR over a grid of windows.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated seconds; defaults to 0.5 s steps up to the trial length.
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<f64>>,
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class Welch spectra.
    Psd {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_t_rule(s: &str) -> std::result::Result<TRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Io => 3,
        ErrorKind::Numerical => 4,
    }
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn execute(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        master_seed: cli.seed,
        method: cli.classifier,
        window: cli.window,
        t_rule: cli.t_rule,
    };
    let mut cfg = RunConfig::layered(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Plan { out } => {
            let plan = build_plan(&cfg)?;
            eprint!("{}", plan_summary(&plan));
            write_or_print(out.as_deref(), &plan.to_document())
        }
        Command::Schedule {
            plan,
            target,
            duration,
            out,
        } => {
            let plan = read_plan(&plan)?;
            let s = build_schedule(&plan, target, duration.unwrap_or(cfg.trial_duration), &cfg)?;
            write_or_print(out.as_deref(), &s.to_delimited())
        }
        Command::Synth { plan, out } => {
            let (plan, name) = match &plan {
                Some(p) => (
                    read_plan(p)?,
                    p.file_name().map(|n| n.to_string_lossy().into_owned()),
                ),
                None => (build_plan(&cfg)?, None),
            };
            let ds = build_dataset(&plan, &cfg)?;
            ds.save(&out, name)?;
            write_file(&out.join("run.toml"), &cfg.to_document())?;
            println!("wrote {} trials to {}", ds.trials.len(), out.display());
            Ok(())
        }
        Command::Classify {
            dataset,
            out,
            scores,
            no_filter,
        } => {
            if no_filter {
                cfg.classifier.prefilter = false;
            }
            let outcome = classify_dataset_dir(&dataset, &cfg)?;
            write_file(&out, &outcome.predictions.to_delimited(&cfg.echo()))?;
            if let Some(path) = scores {
                write_file(&path, &outcome.scores)?;
            }
            let hits = outcome
                .predictions
                .rows
                .iter()
                .filter(|r| r.predicted == r.true_class)
                .count();
            println!(
                "classified {} trials ({} correct)",
                outcome.predictions.rows.len(),
                hits
            );
            // The first failure is returned and reported by the caller.
            let mut failures = outcome.failures.into_iter();
            let first = failures.next();
            for e in failures {
                eprintln!("error: {e}");
            }
            first.map_or(Ok(()), Err)
        }
        Command::Evaluate {
            dataset,
            predictions,
            out,
        } => {
            let manifest = Manifest::load(&dataset)?;
            let preds = read_predictions(&predictions)?;
            let reports = evaluate_predictions(&preds, &manifest, &cfg)?;
            for path in reports.write_to(&out)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Sweep {
            dataset,
            windows,
            no_filter,
            out,
        } => {
            if windows.is_some() {
                cfg.sweep_windows = windows;
            }
            if no_filter {
                cfg.classifier.prefilter = false;
            }
            let ds = Dataset::load(&dataset)?;
            let (_, table) = sweep_dataset(&ds, &cfg)?;
            write_or_print(out.as_deref(), &table)
        }
        Command::Psd { dataset, out } => {
            let ds = Dataset::load(&dataset)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for (name, body) in psd_files(&ds, &cfg)? {
                write_file(&out.join(&name), &body)?;
            }
            println!("wrote {} spectra to {}", ds.n_classes(), out.display());
            Ok(())
        }
    }
}

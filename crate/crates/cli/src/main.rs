//! `ssx`: explain a stochastic policy with meta-states and strategic states.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on pipeline
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssx_cli::config::RunConfig;
use ssx_cli::pipeline::{self, RunStatus, Study};
use ssx_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ssx", version, about = "Strategic state explanations of stochastic policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `section.key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every stochastic component; overrides `ssx.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Explain the configured state space and render it.
    Explain(Common),
    /// Run an evaluation study.
    Eval {
        #[command(flatten)]
        common: Common,
        /// sampling, horizon, perturbation, growth or ksweep.
        #[arg(long)]
        study: String,
    },
    /// Solve the configured space by value iteration and write a tabular policy.
    Train(Common),
    /// Re-render an explanation document.
    Render {
        #[command(flatten)]
        common: Common,
        /// Explanation document; defaults to explanation.json in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.ssx.seed = seed;
    }
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn report(cfg: &RunConfig, command: &str, files: &[PathBuf]) -> Result<()> {
    match pipeline::record_run(cfg, command, files).map_err(Error::at("output"))? {
        RunStatus::Repeat => eprintln!("note: {command} repeats an earlier run with config {}", &cfg.hash()[..12]),
        RunStatus::Replaced => eprintln!("note: {} held outputs of another config; manifest reset", cfg.output_dir.display()),
        RunStatus::Fresh => {}
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cache = std::env::var_os("SSX_CACHE_DIR").map(PathBuf::from);
    let cache = cache.as_deref();
    match cli.command {
        Command::Explain(common) => {
            let cfg = load(&common)?;
            let run = pipeline::run_explain(&cfg, cache)?;
            for m in &run.doc.meta_states {
                let pick = m.strategic.first().map_or("-", |s| s.encoded.as_str());
                println!("meta-state {}: {} states, priority {pick}", m.id, m.size);
            }
            report(&cfg, "explain", &run.files)
        }
        Command::Eval { common, study } => {
            let cfg = load(&common)?;
            let study = Study::parse(&study).ok_or_else(|| {
                let names: Vec<&str> = Study::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidConfig(format!("unknown study {study:?}; expected one of {}", names.join(", ")))
            })?;
            let out = pipeline::run_eval(&cfg, study, cache)?;
            print!("{}", out.summary);
            report(&cfg, &format!("eval:{}", study.name()), &out.files)
        }
        Command::Train(common) => {
            let cfg = load(&common)?;
            let files = pipeline::run_train(&cfg)?;
            report(&cfg, "train", &files)
        }
        Command::Render { common, input } => {
            let cfg = load(&common)?;
            let input = input.unwrap_or_else(|| cfg.output_dir.join(pipeline::EXPLANATION_FILE));
            let file = pipeline::run_render(&cfg, Path::new(&input))?;
            report(&cfg, "render", &[file])
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

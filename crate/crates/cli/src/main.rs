//! `wirematch` command line. Errors go to stderr as one JSON object.

mod commands;
mod config;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wirematch::{Error, Result};

use commands::Run;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "wirematch", version, about = "Joint point and line matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(Common),
    /// Train a matcher on a dataset or on freshly generated pairs.
    Train(Common),
    /// Match one pair, or every pair of a dataset.
    Match(Common),
    /// Label one pair, or every pair of a dataset, from its geometry.
    Gt(Common),
    /// Score matches against labels.
    Eval(Common),
    /// Estimate the relative rotation from matches.
    Rotation(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pairs processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Features of image A.
    #[arg(long = "a")]
    features_a: Option<PathBuf>,
    /// Features of image B.
    #[arg(long = "b")]
    features_b: Option<PathBuf>,
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// A match file, or a directory of `pairs/NNNN/matches.json`.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// JSON with `K_a` and `K_b`.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let i = &mut cfg.inputs;
        for (flag, slot) in [
            (&self.data, &mut i.data),
            (&self.checkpoint, &mut i.checkpoint),
            (&self.features_a, &mut i.features_a),
            (&self.features_b, &mut i.features_b),
            (&self.geometry, &mut i.geometry),
            (&self.matches, &mut i.matches),
            (&self.gt, &mut i.gt),
            (&self.intrinsics, &mut i.intrinsics),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        cfg.resolve()
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, f): (&Common, fn(&Run) -> Result<()>) = match &cli.command {
        Command::Synth(c) => (c, commands::synth),
        Command::Train(c) => (c, commands::train_cmd),
        Command::Match(c) => (c, commands::match_cmd),
        Command::Gt(c) => (c, commands::gt_cmd),
        Command::Eval(c) => (c, commands::eval_cmd),
        Command::Rotation(c) => (c, commands::rotation_cmd),
    };
    let cfg = common.resolve()?;
    if common.jobs == 0 {
        return Err(Error::Invalid("--jobs must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&common.out).map_err(|e| Error::Io {
        path: common.out.clone(),
        source: e,
    })?;
    f(&Run {
        cfg: &cfg,
        out: &common.out,
        pool: &pool,
    })
}

fn report(kind: &str, message: &str) {
    let v = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{v}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}

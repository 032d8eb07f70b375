//! `jrnet` command-line driver.
//!
//! Settings come from, in decreasing precedence: command-line flags, the
//! `--config` file, built-in defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jrnet::config::{MetricChoice, PipelineConfig};
use jrnet::learn::Target;
use jrnet::pipeline::{self, Runner};
use jrnet::synth::{self, CouplingSpec, DatasetSpec};
use jrnet::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "jrnet", version, about = "Joint-recurrence temporal network pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DataDir {
    /// Directory holding recordings, schemas and labels.csv.
    #[arg(long = "in", alias = "data")]
    data: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Jdet,
    Jlam,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Valence,
    Arousal,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic recordings from a trial or dataset spec (JSON).
    Synth {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Estimate delay and dimension per channel and print them as JSON.
    EmbedParams {
        #[command(flatten)]
        data: DataDir,
    },
    /// Build weighted and binarised temporal networks.
    Analyze {
        #[command(flatten)]
        data: DataDir,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        /// Also write every layer as Graphviz.
        #[arg(long)]
        dot: bool,
    },
    /// Extract temporal network features.
    Features,
    /// Fit a sparse model per target.
    Train {
        #[command(flatten)]
        data: DataDir,
        /// Defaults to both targets.
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
    },
    /// Cross-validated evaluation per target.
    Evaluate {
        #[command(flatten)]
        data: DataDir,
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
    },
    /// Every stage in order.
    Pipeline {
        #[command(flatten)]
        data: DataDir,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(long)]
        dot: bool,
    },
}

fn targets(t: Option<TargetArg>) -> Vec<Target> {
    match t {
        Some(TargetArg::Valence) => vec![Target::Valence],
        Some(TargetArg::Arousal) => vec![Target::Arousal],
        None => Target::ALL.to_vec(),
    }
}

fn runner(common: &Common, metric: Option<MetricArg>) -> Result<Runner> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(m) = metric {
        config.weight_metric = match m {
            MetricArg::Jdet => MetricChoice::Jdet,
            MetricArg::Jlam => MetricChoice::Jlam,
            MetricArg::Both => MetricChoice::Both,
        };
    }
    Runner::new(config, common.jobs)
}

fn run_synth(spec_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path).map_err(|source| Error::Io {
        path: spec_path.to_owned(),
        source,
    })?;
    let json_err = |source| Error::Json {
        context: spec_path.display().to_string(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    if value.get("coupling_matrix").is_some() {
        let mut spec: CouplingSpec = serde_json::from_value(value).map_err(json_err)?;
        if let Some(s) = seed {
            spec.seed = s;
        }
        let rec = synth::generate(&spec)?;
        synth::write_generated(&spec, &rec, out)?;
        log::info!("wrote trial {} to {}", spec.trial_id, out.display());
    } else {
        let mut spec: DatasetSpec = serde_json::from_value(value).map_err(json_err)?;
        if let Some(s) = seed {
            spec.seed = s;
        }
        let dataset = spec.write(out)?;
        log::info!("wrote {} trials to {}", dataset.specs.len(), out.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let out = common.out.as_path();
    match cli.command {
        Command::Synth { spec } => run_synth(&spec, common.seed, out),
        Command::EmbedParams { data } => {
            let embeddings = pipeline::embed_params(&runner(common, None)?, &data.data, out)?;
            let json = serde_json::to_string_pretty(&embeddings).expect("embeddings serialise");
            println!("{json}");
            Ok(())
        }
        Command::Analyze { data, metric, dot } => {
            pipeline::analyze(&runner(common, metric)?, &data.data, out, dot).map(drop)
        }
        Command::Features => pipeline::features(&runner(common, None)?, out).map(drop),
        Command::Train { data, target } => {
            pipeline::train(&runner(common, None)?, &data.data, out, &targets(target))
        }
        Command::Evaluate { data, target } => {
            let r = runner(common, None)?;
            let targets = targets(target);
            pipeline::evaluate(&r, &data.data, out, &targets)?;
            for t in targets {
                let path = out.join(pipeline::evaluation_file(t));
                log::info!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Pipeline { data, metric, dot } => {
            pipeline::run_pipeline(&runner(common, metric)?, &data.data, out, dot)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Input => ExitCode::from(2),
                ErrorKind::Numeric => ExitCode::from(3),
            }
        }
    }
}

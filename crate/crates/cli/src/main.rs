use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use spkid_core::error::Error;

mod commands;
mod config;
mod plot;

use config::{parse_classifier_modality, RunConfig, Settings};

/// Speaker identification from audio MFCCs, EEG features, or both.
///
/// Settings come from built-in defaults, then `--config FILE`, then each
/// `--set KEY=VALUE` in order, then the dedicated flags.
#[derive(Parser, Debug)]
#[command(name = "spkid", version)]
struct Cli {
    /// Settings file of `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one setting (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Corpus directory holding manifest.csv
    #[arg(long, global = true, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// Output directory for intermediate and final artifacts
    #[arg(long, global = true, value_name = "DIR")]
    work: Option<PathBuf>,
    /// Worker threads; more than one enables data-parallel execution
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus into the corpus directory
    Synth,
    /// Filter the EEG and remove ICA artifact components
    Preprocess,
    /// Extract MFCC and EEG features and assign the split
    Features,
    /// Fit kernel PCA on training EEG features and reduce every utterance
    Kpca,
    /// Train one classifier
    Train {
        #[arg(long, value_parser = modality)]
        modality: spkid_core::features::Modality,
    },
    /// Evaluate a trained classifier on the test partition
    Eval {
        #[arg(long, value_parser = modality)]
        modality: spkid_core::features::Modality,
    },
    /// Run every stage and compare the modalities
    Experiment {
        /// Generate the corpus in memory instead of reading one
        #[arg(long)]
        synthetic: bool,
    },
    /// Print the resolved settings
    ShowConfig,
}

fn modality(s: &str) -> Result<spkid_core::features::Modality, String> {
    parse_classifier_modality(s).map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } => 2,
        Error::Config(_)
        | Error::Dimension { .. }
        | Error::Shape(_)
        | Error::Input(_)
        | Error::Rate { .. }
        | Error::Alignment(_)
        | Error::Design(_) => 3,
        Error::Numeric { .. } | Error::Degenerate { .. } | Error::ReducedRank { .. } => 4,
    }
}

fn settings(cli: &Cli) -> spkid_core::error::Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        s.load_file(path)?;
    }
    for kv in &cli.set {
        s.assign(kv)?;
    }
    if let Some(p) = &cli.corpus {
        s.set("paths.corpus", &p.to_string_lossy())?;
    }
    if let Some(p) = &cli.work {
        s.set("paths.work", &p.to_string_lossy())?;
    }
    if let Some(t) = cli.threads {
        s.set("run.threads", &t.to_string())?;
    }
    if let Some(seed) = cli.seed {
        s.set("run.seed", &seed.to_string())?;
    }
    Ok(s)
}

fn run(cli: &Cli) -> spkid_core::error::Result<String> {
    let s = settings(cli)?;
    let cfg: RunConfig = s.build()?;
    if cfg.threads > 1 {
        // a second initialization only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Features => commands::features(&cfg),
        Command::Kpca => commands::kpca(&cfg),
        Command::Train { modality } => commands::train(&cfg, *modality),
        Command::Eval { modality } => commands::eval(&cfg, *modality),
        Command::Experiment { synthetic } => commands::experiment(&cfg, &s, *synthetic),
        Command::ShowConfig => Ok(s.to_text().trim_end().to_string()),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(config::key_table()).try_get_matches();
    let cli = match matches.and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

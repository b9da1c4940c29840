use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use precursors::cli::{self, RunConfig};
use precursors::extraction::Method;
use precursors::synthcorpus::SynthConfig;
use precursors::{Error, Result};

#[derive(Parser)]
#[command(name = "precursors", version, about = "Incident-report classifiers and precursor extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Length distribution of a corpus (tokens, sentences, words per sentence).
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Vocabulary, splits, class weights and embeddings.
    Prepare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Learning-rate range test for the configured deep model.
    LrRange {
        #[arg(long)]
        config: PathBuf,
    },
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Ranked fragments per category: regions, saliency, attention or svm.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// HTML explanation of a single report.
    Explain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Synthetic corpus with planted precursors.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Neighbors {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats { corpus, schema } => {
            let s = cli::cmd_stats(&corpus, &schema)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Prepare { config } => {
            cli::cmd_prepare(&mut RunConfig::load(&config)?)?;
        }
        Command::LrRange { config } => {
            let r = cli::cmd_lr_range(&mut RunConfig::load(&config)?)?;
            if let Some(w) = &r.suggestion.warning {
                eprintln!("warning: {w}");
            }
            println!("lr_max {:e}  lr_min {:e}", r.suggestion.lr_max, r.suggestion.lr_min);
        }
        Command::Train { config } => {
            let r = cli::cmd_train(&mut RunConfig::load(&config)?)?;
            println!("{}", r.checkpoint.display());
        }
        Command::Eval { config, checkpoint } => {
            let r = cli::cmd_eval(&mut RunConfig::load(&config)?, checkpoint.as_deref())?;
            println!("macro-F1 {:.4}  random {:.4}", r.metrics.macro_f1, r.baseline.mean.macro_f1);
        }
        Command::Extract { config, method, checkpoint } => {
            let m = Method::parse(&method).ok_or_else(|| Error::InvalidConfig(format!("unknown method `{method}`")))?;
            for r in cli::cmd_extract(&mut RunConfig::load(&config)?, checkpoint.as_deref(), m)? {
                println!("# {}", r.category);
                for e in r.entries.iter().take(5) {
                    println!("  {:.4}\t{}", e.score, e.fragment);
                }
            }
        }
        Command::Explain { config, report, checkpoint } => {
            let f = cli::cmd_explain(&mut RunConfig::load(&config)?, checkpoint.as_deref(), &report)?;
            println!("{}", f.display());
        }
        Command::Synth { config, out } => {
            let cfg = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)?,
                None => SynthConfig::default(),
            };
            cli::cmd_synth(&cfg, &out)?;
        }
        Command::Neighbors { embeddings, vocab, word, k } => {
            for (w, s) in cli::cmd_neighbors(&embeddings, &vocab, &word, k)? {
                println!("{w}\t{s:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = run(cli.command);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}

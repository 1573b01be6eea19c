use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ecg_report::config::RunConfig;
use ecg_report::corpus::Split;
use ecg_report::dataset::report_tokens;
use ecg_report::metrics::{corpus_evaluate, MeteorConfig};
use ecg_report::pipeline::{self, CHECKPOINT_FILE};
use ecg_report::textprep::AbbreviationTable;
use ecg_report::{Error, Result};

/// ECG report generation: corpus preparation, training, evaluation and inspection.
#[derive(Parser)]
#[command(name = "ecg-report", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic corpus.
    Synth(ConfigArg),
    /// Deduplicate, split and build the vocabulary.
    Prep(ConfigArg),
    /// Train and write the best checkpoint plus history.
    Train(ConfigArg),
    /// Score generated reports on a split.
    Evaluate(CheckpointArgs),
    /// Compare real inputs against all-ones inputs.
    Sanity(CheckpointArgs),
    /// Export per-token attention overlays (LSTM, K > 1).
    Attn(CheckpointArgs),
    /// Score aligned candidate and reference files, one report per line.
    Score(ScoreArgs),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint written by `train` (for example `<run dir>/model.ckpt`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    references: PathBuf,
    /// Skip abbreviation unification before tokenizing.
    #[arg(long)]
    no_unify: bool,
    /// Exact matching only in METEOR.
    #[arg(long)]
    no_stem: bool,
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path)
}

fn checkpoint(args: &CheckpointArgs) -> Result<PathBuf> {
    let path = args.checkpoint.clone().ok_or_else(|| Error::config("--checkpoint is required"))?;
    if !path.is_file() {
        return Err(Error::Checkpoint { path, message: "no such file".into() });
    }
    Ok(path)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let cfg = load(&a.config)?;
            let corpus = pipeline::synth(&cfg)?;
            println!("wrote {} episodes to {}", corpus.len(), cfg.manifest_path().display());
        }
        Command::Prep(a) => {
            let cfg = load(&a.config)?;
            let p = pipeline::prep(&cfg)?;
            let [tr, va, te] = p.split.counts();
            println!(
                "{} episodes after deduplication; train {tr}, validation {va}, test {te}; vocabulary {} tokens; artifacts in {}",
                p.corpus.len(),
                p.vocabulary.len(),
                cfg.run_dir().display()
            );
        }
        Command::Train(a) => {
            let cfg = load(&a.config)?;
            let (_, history) = pipeline::train_run(&cfg, &mut |r| {
                eprintln!(
                    "epoch {:>3}  loss {:.4}  val METEOR {:.4}  lr {:.2e}/{:.2e}  {:.1}s{}",
                    r.epoch,
                    r.train_loss,
                    r.val_meteor,
                    r.encoder_lr,
                    r.decoder_lr,
                    r.wall_seconds,
                    if r.improved { "  *" } else { "" }
                );
            })?;
            println!(
                "best epoch {} (validation METEOR {:.4}); checkpoint {}",
                history.best_epoch,
                history.best_meteor,
                cfg.run_dir().join(CHECKPOINT_FILE).display()
            );
        }
        Command::Evaluate(a) => {
            let cfg = load(&a.config)?;
            let report = pipeline::evaluate_run(&cfg, &checkpoint(&a)?, a.split.into())?;
            print!("{}", report.to_table());
        }
        Command::Sanity(a) => {
            let cfg = load(&a.config)?;
            let r = pipeline::sanity_run(&cfg, &checkpoint(&a)?, a.split.into())?;
            println!("metric\treal_percent\tones_percent");
            println!("METEOR\t{:.2}\t{:.2}", 100.0 * r.real.meteor, 100.0 * r.ones.meteor);
            println!("BLEU-4\t{:.2}\t{:.2}", 100.0 * r.real.bleu[3], 100.0 * r.ones.bleu[3]);
            println!("# relative METEOR drop {:.1}%; {} distinct report(s) on all-ones input", 100.0 * r.meteor_drop, r.distinct_ones_reports.len());
        }
        Command::Attn(a) => {
            let cfg = load(&a.config)?;
            for e in pipeline::attention_run(&cfg, &checkpoint(&a)?, a.split.into())? {
                println!("{}\t{}\t{}", e.weights.display(), e.overlay.display(), e.image.display());
            }
        }
        Command::Score(a) => {
            let (cands, refs) = (read_lines(&a.candidates)?, read_lines(&a.references)?);
            if cands.len() != refs.len() {
                return Err(Error::Shape(format!("{} candidate lines but {} reference lines", cands.len(), refs.len())));
            }
            let table = (!a.no_unify).then(AbbreviationTable::bundled);
            let pairs: Vec<(Vec<String>, Vec<String>)> =
                cands.iter().zip(&refs).map(|(c, r)| (report_tokens(c, table.as_ref()), report_tokens(r, table.as_ref()))).collect();
            let meteor = if a.no_stem { MeteorConfig::EXACT_ONLY } else { MeteorConfig::default() };
            print!("{}", corpus_evaluate(&pairs, &meteor)?.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\t'], " ");
            eprintln!("ERROR\t{}\t{message}", e.kind());
            ExitCode::from(1)
        }
    }
}

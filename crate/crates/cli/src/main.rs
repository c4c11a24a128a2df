use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use claimrisk::config::RunConfig;
use claimrisk::files::read_text;
use claimrisk::pipeline::Pipeline;
use claimrisk::seqmodel::ModelKind;

#[derive(Parser)]
#[command(
    name = "claimrisk",
    version,
    about = "Complication-risk prediction from coded claims records"
)]
struct Cli {
    /// Flat `key = value` run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Prediction gap in days; repeatable, overrides `gaps`.
    #[arg(long = "gap", global = true)]
    gaps: Vec<u32>,
    /// Restrict training to one model kind.
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population with a planted risk signal.
    Synth,
    /// Extract labelled windows for every gap.
    Cohort,
    /// Pretrain skipgram code embeddings.
    Embed,
    /// Cross-validate the configured models.
    Train,
    /// Average fold ROC and PR curves.
    Eval,
    /// Export the attention map of one held-out individual.
    Attend {
        /// Individual id; defaults to the highest-scoring held-out positive.
        #[arg(long)]
        individual: Option<String>,
    },
    /// Render the AUC table from aggregate.json.
    Report,
    /// synth, cohort, embed, train, eval and report in sequence.
    RunAll,
}

fn resolve(cli: &Cli) -> claimrisk::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::parse(&read_text(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    if !cli.gaps.is_empty() {
        cfg.gaps = cli.gaps.clone();
    }
    if let Some(m) = cli.model {
        cfg.models = vec![m];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> claimrisk::Result<()> {
    let pipeline = Pipeline::new(resolve(cli)?, &cli.out)?;
    pipeline.persist_config()?;
    match &cli.command {
        Command::Synth => println!("{}", pipeline.synth()?),
        Command::Cohort => {
            for s in pipeline.build_cohorts()? {
                println!(
                    "gap {:>3}: {} diabetics, {} positives, {} negatives",
                    s.gap_days, s.diabetics, s.positives, s.negatives
                );
            }
        }
        Command::Embed => {
            let e = pipeline.embed()?;
            println!("{} codes × {} dims from {} sequences", e.vocab_size, e.dim, e.sequences);
        }
        Command::Train => {
            for a in pipeline.train()? {
                println!("{} gap {}: mean AUC {:.4}", a.model.label(), a.gap_days, a.mean_auc);
            }
        }
        Command::Eval => {
            for e in pipeline.eval()? {
                println!(
                    "{} gap {}: mean AUC {:.4}, averaged ROC area {:.4}, PR area {:.4}",
                    e.model.label(),
                    e.gap_days,
                    e.mean_auc,
                    e.mean_roc_area,
                    e.mean_pr_area
                );
            }
        }
        Command::Attend { individual } => {
            let gap = cli.gaps.first().copied();
            let a = pipeline.attend(individual.as_deref(), gap)?;
            println!(
                "{}: {} records, p = {:.4}, written to {}",
                a.individual_id,
                a.records,
                a.probability,
                a.csv.display()
            );
        }
        Command::Report => print!("{}", pipeline.report()?.1),
        Command::RunAll => print!("{}", pipeline.run_all()?.1),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

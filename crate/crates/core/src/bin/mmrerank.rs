use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmrerank::harness::{Harness, HarnessError, StageOutcome};

#[derive(Parser)]
#[command(name = "mmrerank", version, about = "Two-stage multi-modal reranking pipeline")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "pipeline.toml")]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides `seeds` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for backend calls (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the corpus or convert the raw dataset. Needs: corpus section of the config.
    Ingest,
    /// Convert images to text descriptions. Needs: ingest.
    Unify,
    /// Train the lexical pointwise ranker. Needs: ingest.
    TrainRanker,
    /// Score every question's pool with the stage-1 ranker. Needs: unify, train-ranker.
    Score,
    /// Pick the stage-1 selection threshold on the dev split. Needs: score.
    TuneThreshold,
    /// Emit permutation-augmented instruction-tuning data. Needs: score, unify.
    BuildSft,
    /// Rerank the evaluation split with the generator. Needs: score, unify.
    Rerank,
    /// Compute metrics over rerank results. Needs: rerank.
    Eval,
    /// Rerank and evaluate for several stage-1 cutoffs. Needs: score, unify.
    SweepDoccount {
        /// Comma-separated cutoffs; defaults to experiments.sweep_k.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Run the permutation and target ablations. Needs: score, unify, tune-threshold.
    Ablate,
    /// Run ingest through eval.
    Run,
}

fn report(outcomes: &[StageOutcome]) {
    for o in outcomes {
        let state = if o.skipped { "skipped" } else { "done" };
        println!(
            "{}: {state} ({}){}",
            o.stage,
            o.message,
            if o.warnings > 0 {
                format!(", {} warnings", o.warnings)
            } else {
                String::new()
            }
        );
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut h = Harness::from_config_file(&cli.config, cli.out, cli.seed)?.force(cli.force);
    let outcomes = match cli.command {
        Command::Ingest => vec![h.ingest()?],
        Command::Unify => vec![h.unify()?],
        Command::TrainRanker => vec![h.train_ranker()?],
        Command::Score => vec![h.score()?],
        Command::TuneThreshold => vec![h.tune_threshold()?],
        Command::BuildSft => vec![h.build_sft()?],
        Command::Rerank => vec![h.rerank()?],
        Command::Eval => vec![h.eval()?],
        Command::SweepDoccount { k } => vec![h.sweep_doccount(k)?],
        Command::Ablate => vec![h.ablate()?],
        Command::Run => h.run_all()?,
    };
    report(&outcomes);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("thread pool: {e}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

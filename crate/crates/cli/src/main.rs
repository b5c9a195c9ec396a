use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use normseg_cli::commands;
use normseg_cli::config::{apply_presets, RunConfig};
use normseg_cli::CliError;

/// Label-free lung lesion segmentation workbench: synthesize lesions into
/// healthy volumes, train a normalcy-recognizing ensemble, and segment
/// anomalies in unseen volumes.
#[derive(Parser)]
#[command(name = "normseg", version, about)]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, default_value = "normseg.toml")]
    config: PathBuf,

    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated preset overlay names (see docs for the list).
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Rebase all output paths under this directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write the post-processing intermediates (d), (e), (f), (g).
    #[arg(long, global = true)]
    emit_intermediates: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural healthy phantom cases into the case directory.
    Demo,
    /// Synthesize the training corpus and held-out test cases.
    Synth,
    /// Train the model ensemble on the synthesized corpus.
    Train,
    /// Run ensemble inference and post-processing on held-out cases.
    Infer,
    /// Score predictions and write CSV reports.
    Eval,
    /// Full run: synth, train, infer, eval, gates.
    Pipeline,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(presets) = &cli.preset {
        apply_presets(&mut cfg, presets)?;
    }
    if let Some(out) = &cli.out {
        cfg.paths.rebase(out);
    }

    match cli.command {
        Command::Demo => {
            let n = commands::cmd_demo(&cfg)?;
            println!("wrote {n} phantom case(s) to {}", cfg.paths.cases_dir.display());
        }
        Command::Synth => {
            let s = commands::cmd_synth(&cfg)?;
            println!(
                "synthesized {} training pair(s) and {} held-out case(s) in {}",
                s.train_pairs,
                s.holdout_pairs,
                cfg.paths.corpus_dir.display()
            );
        }
        Command::Train => {
            let n = commands::cmd_train(&cfg)?;
            println!("trained {n} model(s) into {}", cfg.paths.model_dir.display());
        }
        Command::Infer => {
            let n = commands::cmd_infer(&cfg, cli.emit_intermediates)?;
            println!("segmented {n} case(s) into {}", cfg.paths.pred_dir.display());
        }
        Command::Eval => {
            let outcome = commands::cmd_eval(&cfg)?;
            println!(
                "evaluated {} case(s); reports in {}",
                outcome.reports.len(),
                cfg.paths.report_dir.display()
            );
        }
        Command::Pipeline => {
            let s = commands::cmd_pipeline(&cfg, cli.emit_intermediates)?;
            println!(
                "pipeline done: {} case(s), mean DSC {:.4} vs threshold baseline {:.4} (margin {:+.4})",
                s.cases, s.mean_dsc, s.baseline_mean_dsc, s.margin
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Worker count only; results are independent of it.
    if let Ok(v) = std::env::var("NORMSEG_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests are successes; everything else is usage.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("normseg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eegdit_cli::commands::{cmd_evaluate, cmd_fid, cmd_generate, cmd_synth, cmd_train_classifier, cmd_train_diffusion};
use eegdit_cli::experiment::{run_experiment, Progress};
use eegdit_cli::{AugmentMode, CliError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "eegdit", version, about = "Generate signals with a diffusion transformer and train classifiers on them")]
struct Cli {
    /// JSON run config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset to <out>/dataset.sdf.
    Synth,
    /// Train the generator on a whole dataset file (default: the configured source).
    TrainDiffusion {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample from a generator checkpoint into <out>/generated.sdf.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the generator's training-set size.
        #[arg(long)]
        count: Option<usize>,
        /// Comma-separated class of each segment, for conditional checkpoints.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<usize>>,
    },
    /// Split a dataset, train one classifier and score it on the test part.
    TrainClassifier {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Generated segments for the go and append modes.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Defaults to the config's augmentation mode.
        #[arg(long, value_enum)]
        mode: Option<AugmentMode>,
        /// Overrides append_ratio.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Score a classifier checkpoint and append a row to <out>/metrics.csv.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the test split of the configured source.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Fréchet distance between two dataset files in a classifier's embedding space.
    Fid {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        extractor: PathBuf,
        /// Also write mean spectra as CSV and SVG.
        #[arg(long)]
        spectra: bool,
        /// Model tag for the results row; defaults to the generated file's name.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Run or resume the full pipeline in <out>.
    Experiment {
        /// Stop once the named stage is recorded.
        #[arg(long, hide = true)]
        stop_after: Option<String>,
    },
    /// Print the effective config as JSON.
    ShowConfig,
}

struct Printer;

impl Progress for Printer {
    fn stage(&mut self, name: &str, skipped: bool) {
        if skipped {
            eprintln!("[{name}] already done");
        } else {
            eprintln!("[{name}]");
        }
    }

    fn epoch(&mut self, stage: &str, epoch: usize, loss: f64) {
        if epoch.is_multiple_of(25) {
            eprintln!("  {stage} epoch {epoch} loss {loss:.5}");
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SDF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("SDF_THREADS={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    cfg.validate()?;

    match cli.command {
        Command::Synth => {
            let (path, d) = cmd_synth(&cfg)?;
            let (c, l) = d.shape().unwrap_or((0, 0));
            println!("{}: {} segments, {} classes, {c}x{l} at {} Hz", path.display(), d.len(), d.num_classes(), d.sample_rate_hz());
        }
        Command::TrainDiffusion { data } => {
            let out = cmd_train_diffusion(&cfg, data.as_deref(), |e, l| Printer.epoch("diffusion", e, l))?;
            match (out.losses.first(), out.losses.last()) {
                (Some(a), Some(b)) => println!("loss {a:.5} -> {b:.5} over {} epochs", out.losses.len()),
                _ => println!("no epochs run; saved the initialization"),
            }
            println!("{}", out.checkpoint.display());
            println!("{}", out.curve.display());
        }
        Command::Generate { checkpoint, count, classes } => {
            let (path, d) = cmd_generate(&cfg, &checkpoint, count, classes.as_deref())?;
            println!("{}: {} segments", path.display(), d.len());
        }
        Command::TrainClassifier { data, pool, mode, ratio } => {
            if let Some(r) = ratio {
                cfg.append_ratio = r;
                cfg.validate()?;
            }
            let mode = mode.unwrap_or(cfg.augmentation);
            let out = cmd_train_classifier(&cfg, data.as_deref(), pool.as_deref(), mode)?;
            let r = &out.report;
            println!("mode {} trained on {} segments", r.mode, r.train_size);
            if let Some(m) = &r.test {
                println!("test acc {:.4} auc {:.4} f1 {:.4}", m.acc, m.auc, m.f1);
            }
            println!("{}", out.checkpoint.display());
        }
        Command::Evaluate { checkpoint, test } => {
            let (_, row) = cmd_evaluate(&cfg, &checkpoint, test.as_deref())?;
            println!("{row}");
        }
        Command::Fid { original, generated, extractor, spectra, tag } => {
            let r = cmd_fid(&cfg, &original, &generated, &extractor, spectra, tag.as_deref())?;
            if let Some(w) = &r.outcome.warning {
                eprintln!("warning: {w}");
            }
            println!("fid {:.6}", r.outcome.fid);
            for p in r.spectra {
                println!("{}", p.display());
            }
        }
        Command::Experiment { stop_after } => {
            let rec = run_experiment(&cfg, stop_after.as_deref(), &mut Printer)?;
            for n in &rec.notes {
                eprintln!("note: {n}");
            }
            if rec.summary.is_empty() {
                println!("stopped after {}", rec.completed.last().map_or("nothing", |s| s.as_str()));
            } else {
                print!("{}", eegdit_cli::experiment::table_csv(&rec.summary));
            }
        }
        Command::ShowConfig => println!("{}", cfg.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

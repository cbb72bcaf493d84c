//! Command-line front end. Exit codes: 0 success, 1 failure, 2 bad
//! configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spmf::pipeline::{self, PipelineConfig};
use spmf::skeleton::DatasetKind;
use spmf::{Error, Result};

#[derive(Parser)]
#[command(name = "spmf", version, about = "Skeleton action recognition with enhanced pose-motion images")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Skip adaptive histogram equalization.
    #[arg(long, global = true)]
    no_enhance: bool,
    /// Number of equalization tiles.
    #[arg(long, global = true)]
    regions: Option<usize>,
    #[arg(long, global = true, value_parser = ["16", "28", "40"])]
    depth: Option<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single worker thread and fixed reduction order.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Skeleton data directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["msr", "ntu", "canonical"])]
    dataset: Option<String>,
    /// Built-in split name, split JSON file, or `none`.
    #[arg(long, global = true)]
    split: Option<String>,
    /// Encoded image directory.
    #[arg(long, global = true)]
    images: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a skeleton directory into images and an index.
    Encode {
        /// Augmented copies per training image.
        #[arg(long)]
        augment: Option<usize>,
        /// Frozen normalization statistics JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Equalize an unequalized image directory.
    Enhance,
    /// Write train/test manifests for a split.
    Split,
    /// Train a classifier on an image directory.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on an image directory.
    Eval,
    /// Retrain a checkpoint's head (and body) on a new image directory.
    Finetune,
    /// Measure single-threaded per-sequence latency.
    Benchmark {
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// encode, train, eval and benchmark in one go.
    Pipeline {
        #[arg(long)]
        augment: Option<usize>,
    },
}

fn resolve(common: &Common, command: &Command) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.augment.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if common.no_enhance {
        cfg.enhance = false;
    }
    if let Some(r) = common.regions {
        cfg.ahe = spmf::enhance::AheConfig::with_regions(r)?;
    }
    if let Some(d) = &common.depth {
        cfg.depth = d.parse().map_err(|_| Error::Config(format!("bad depth {d}")))?;
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if common.deterministic {
        cfg.deterministic = true;
    }
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    if let Some(d) = &common.dataset {
        cfg.dataset = d.parse::<DatasetKind>()?;
    }
    if let Some(s) = &common.split {
        cfg.split = s.clone();
    }
    if let Some(i) = &common.images {
        cfg.images = Some(i.clone());
    }
    if let Some(c) = &common.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    if let Some(e) = common.epochs {
        cfg.train.epochs = e;
    }
    match command {
        Command::Encode { augment, stats } => {
            if let Some(a) = augment {
                cfg.augment_copies = *a;
            }
            if let Some(s) = stats {
                cfg.stats = Some(s.clone());
            }
        }
        Command::Pipeline { augment: Some(a) } => cfg.augment_copies = *a,
        Command::Train { resume: Some(r) } => cfg.resume = Some(r.clone()),
        Command::Benchmark { warmup, runs } => {
            if let Some(w) = warmup {
                cfg.warmup = *w;
            }
            if let Some(r) = runs {
                cfg.runs = *r;
            }
        }
        _ => {}
    }
    if cfg.deterministic {
        cfg.threads = Some(1);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(common: &Common, command: &Command) -> Result<()> {
    let cfg = resolve(common, command)?;
    if let Some(t) = cfg.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match command {
        Command::Encode { .. } => {
            let s = pipeline::cmd_encode(&cfg)?;
            println!("wrote {} images for {} classes to {}", s.rows.len(), s.class_names.len(), cfg.out.display());
            if !s.failures.is_empty() {
                for (p, e) in &s.failures {
                    eprintln!("failed: {p}: {e}");
                }
                return Err(Error::DegenerateData(format!("{} inputs could not be encoded", s.failures.len())));
            }
        }
        Command::Enhance => {
            let n = pipeline::cmd_enhance(&cfg)?;
            println!("equalized {n} images into {}", cfg.out.display());
        }
        Command::Split => {
            let (tr, te) = pipeline::cmd_split(&cfg)?;
            println!("split {}: {tr} train, {te} test", cfg.split);
        }
        Command::Train { .. } | Command::Finetune => {
            let o = if matches!(command, Command::Train { .. }) {
                pipeline::cmd_train(&cfg)?
            } else {
                pipeline::cmd_finetune(&cfg)?
            };
            println!(
                "initial loss {:.4}, kept epoch {}, train accuracy {:.4}{}",
                o.report.initial_loss,
                o.report.best_epoch,
                o.report.final_train_acc,
                o.eval.map(|e| format!(", test accuracy {:.4}", e.accuracy)).unwrap_or_default()
            );
            println!("checkpoint: {}", o.checkpoint.display());
        }
        Command::Eval => {
            let r = pipeline::cmd_eval(&cfg)?;
            println!("accuracy {:.4} over {} samples", r.accuracy, r.predictions.len());
        }
        Command::Benchmark { .. } => {
            let r = pipeline::cmd_benchmark(&cfg)?;
            print_benchmark(&r);
        }
        Command::Pipeline { .. } => {
            let (s, o, b) = pipeline::cmd_pipeline(&cfg)?;
            println!("encoded {} images", s.rows.len());
            if let Some(e) = o.eval {
                println!("test accuracy {:.4}", e.accuracy);
            }
            print_benchmark(&b);
        }
    }
    Ok(())
}

fn print_benchmark(r: &pipeline::BenchmarkReport) {
    println!(
        "total {:.2} ms mean / {:.2} ms p95 (encode {:.2}, enhance {:.2}, inference {:.2}); {:.1} sequences/s",
        r.total.mean_ms, r.total.p95_ms, r.encode.mean_ms, r.enhance.mean_ms, r.inference.mean_ms, r.sequences_per_sec
    );
    println!("{}", r.hardware);
}

fn main() -> ExitCode {
    // clap exits with status 2 on malformed arguments
    let cli = Cli::parse();
    match run(&cli.common, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

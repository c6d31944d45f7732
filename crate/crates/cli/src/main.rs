use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use voxelnet::convnet::ConvMode;
use voxelnet::dataio::Task;
use voxelnet_cli::commands;
use voxelnet_cli::RunConfig;

#[derive(Parser)]
#[command(name = "voxelnet", version, about = "Sparse-autoencoder pretrained 3D CNN pipeline for volume classification")]
struct Cli {
    /// key = value config file; flags below override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    mode: Option<ConvMode>,
    #[arg(long, global = true)]
    task: Option<Task>,
    /// Override any config key, e.g. `--set ae.epochs=5` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled dataset and its manifest
    Synth,
    /// Train the sparse autoencoder on sampled patches
    Pretrain,
    /// Compute pooled convolutional features for every manifest entry
    Featurize,
    /// Train the classifier for the selected task
    Train,
    /// Evaluate on the test split and write metrics
    Eval {
        /// Print an accuracy table over all tasks with metrics in work_dir
        #[arg(long)]
        table: bool,
    },
    /// Write one feature-map slice as a PGM image
    ExportSlice {
        #[arg(long)]
        scan: Option<usize>,
        #[arg(long)]
        filter: Option<usize>,
        #[arg(long)]
        slice: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved configuration
    Config,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    if let Some(task) = cli.task {
        cfg.task = task;
    }
    Ok(cfg)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("VOXELNET_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("VOXELNET_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "VOXELNET_THREADS must be a positive integer, got {v:?}");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut cfg = resolve(&cli)?;
    match cli.command {
        Command::Synth => println!("{}", commands::cmd_synth(&cfg)?),
        Command::Pretrain => println!("{}", commands::cmd_pretrain(&cfg)?),
        Command::Featurize => println!("{}", commands::cmd_featurize(&cfg)?),
        Command::Train => println!("{}", commands::cmd_train(&cfg)?),
        Command::Eval { table } => {
            if table {
                print!("{}", commands::accuracy_table(&cfg.work_dir)?);
            } else {
                println!("{}", commands::cmd_eval(&cfg)?);
            }
        }
        Command::ExportSlice { scan, filter, slice, out } => {
            cfg.export_scan = scan.unwrap_or(cfg.export_scan);
            cfg.export_filter = filter.unwrap_or(cfg.export_filter);
            cfg.export_slice = slice.unwrap_or(cfg.export_slice);
            println!("{}", commands::cmd_export_slice(&cfg, out.as_deref())?);
        }
        Command::Config => print!("{}", cfg.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use srnet_cli::config::RunConfig;
use srnet_cli::{commands, CliError};

#[derive(Parser)]
#[command(name = "srnet", version, about = "Train, evaluate and audit SRNet saliency networks")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(flatten)]
    keys: KeyOverrides,
    #[command(subcommand)]
    command: Command,
}

/// One flag per config key.
#[derive(Args, Default)]
struct KeyOverrides {
    #[arg(long, global = true)]
    backbone: Option<String>,
    #[arg(long, global = true)]
    ablation: Option<String>,
    #[arg(long, global = true)]
    stage_channels: Option<String>,
    #[arg(long, global = true)]
    units_per_stage: Option<String>,
    #[arg(long, global = true)]
    stage_dilations: Option<String>,
    #[arg(long, global = true)]
    group_count: Option<String>,
    #[arg(long, global = true)]
    shuffle_groups: Option<String>,
    #[arg(long, global = true)]
    width_divisor: Option<String>,
    #[arg(long, global = true)]
    input_size: Option<String>,
    #[arg(long, global = true)]
    lr: Option<String>,
    #[arg(long, global = true)]
    momentum: Option<String>,
    #[arg(long, global = true)]
    weight_decay: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    batch_size: Option<String>,
    /// `auto` or a fixed weight in (0, 1).
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long, global = true)]
    augment: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long, global = true)]
    holdout: Option<String>,
    #[arg(long, global = true)]
    dataset: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<String>,
}

impl KeyOverrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        [
            ("backbone", &self.backbone),
            ("ablation", &self.ablation),
            ("stage_channels", &self.stage_channels),
            ("units_per_stage", &self.units_per_stage),
            ("stage_dilations", &self.stage_dilations),
            ("group_count", &self.group_count),
            ("shuffle_groups", &self.shuffle_groups),
            ("width_divisor", &self.width_divisor),
            ("input_size", &self.input_size),
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("weight_decay", &self.weight_decay),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("delta", &self.delta),
            ("augment", &self.augment),
            ("samples", &self.samples),
            ("holdout", &self.holdout),
            ("dataset", &self.dataset),
            ("checkpoint", &self.checkpoint),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (images/*.ppm, masks/*.pgm) under --out.
    Gen,
    /// Train and checkpoint; per-epoch CSV on stdout.
    Train,
    /// Write saliency maps for the given images (or the dataset) under --out.
    Infer { inputs: Vec<PathBuf> },
    /// Print PR points and fbeta_max / mae trailers as CSV.
    Eval {
        /// Directory of predicted maps; without it the checkpoint is run.
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        /// Directory of ground-truth maps, matched by file name.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Parameter, mult-add and receptive-field audit.
    Cost {
        #[arg(long)]
        csv: bool,
        /// Full-width 320x320 network instead of the desk config.
        #[arg(long)]
        reference: bool,
    },
    /// Finite-difference check of every operator and a full network.
    Gradcheck {
        #[arg(long)]
        ops_only: bool,
    },
    /// Depth-wise layer sweep: depth,fbeta_max,mae,params,flops as CSV.
    SweepDepth {
        #[arg(long, value_delimiter = ',', default_value = "1,9,12,18,24")]
        depths: Vec<usize>,
    },
}

fn resolve(cli: &Cli, reference: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if reference {
        cfg.net.width_divisor = 1;
        cfg.net.input_size = 320;
    }
    for (k, v) in cli.keys.pairs() {
        cfg.set(k, v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let reference = matches!(cli.command, Command::Cost { reference: true, .. });
    let cfg = resolve(&cli, reference)?;
    let mut stdout = io::stdout().lock();
    match &cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Train => commands::train_cmd(&cfg, &mut stdout).map(drop),
        Command::Infer { inputs } => commands::infer(&cfg, inputs),
        Command::Eval { pred: Some(p), gt: Some(g) } => commands::eval_dirs(p, g, &mut stdout),
        Command::Eval { pred: None, gt: Some(g) } => {
            let mut cfg = cfg;
            cfg.dataset = Some(g.clone());
            commands::eval_model(&cfg, &mut stdout)
        }
        Command::Eval { .. } => commands::eval_model(&cfg, &mut stdout),
        Command::Cost { csv, .. } => commands::cost(&cfg, *csv, &mut stdout),
        Command::Gradcheck { ops_only } => commands::gradcheck(cfg.seed, !ops_only, &mut stdout),
        Command::SweepDepth { depths } => commands::sweep_depth(&cfg, depths, &mut stdout).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("srnet: {e:#}");
            if let CliError::Usage(_) = e {
                eprintln!("run `srnet --help` for usage");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::error::Result;
use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "archstyle",
    version,
    about = "Mask-driven style transfer for architectural photos"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// RNG seed for initialization, sampling and augmentation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for outputs without an explicit path.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Working resolution (shorter side for inference, crop size for training).
    #[arg(long, global = true)]
    pub size: Option<usize>,

    /// key=value settings file; `#` starts a comment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override one setting, e.g. `--set lambda_gd=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Fg,
    Bg,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Fg => "fg",
            Branch::Bg => "bg",
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Translate an image with per-branch checkpoints and composite the result.
    Transfer(TransferArgs),
    /// Train one branch on two unpaired corpora.
    Train(TrainArgs),
    /// Score results against references.
    Eval(EvalArgs),
    /// Blend a translated image back onto its source.
    Blend(BlendArgs),
    /// Sweep between two style codes.
    Interpolate(InterpolateArgs),
    /// Write the synthetic two-domain corpus.
    ToyCorpus(ToyArgs),
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub input_mask: PathBuf,
    #[arg(long)]
    pub style: PathBuf,
    #[arg(long)]
    pub style_mask: PathBuf,
    #[arg(long)]
    pub fg_ckpt: PathBuf,
    #[arg(long)]
    pub bg_ckpt: PathBuf,
    /// Run gradient-domain blending with the input as geometry constraint.
    #[arg(long)]
    pub blend: bool,
    /// `1to2` or `2to1`.
    #[arg(long, default_value = "1to2")]
    pub direction: String,
    /// Output PNG; defaults to `<out-dir>/transfer.png`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub domain1: PathBuf,
    #[arg(long)]
    pub domain2: PathBuf,
    #[arg(long, value_enum)]
    pub branch: Branch,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Continue from a checkpoint (weights and optimizer state).
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    /// `<stem>.png` reference masks and `<stem>_result.png` result masks.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Classifier posteriors: `id[,label],p0,...`.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Report CSV; defaults to `<out-dir>/eval.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BlendArgs {
    /// Colour constraint (the translated image).
    #[arg(long, visible_alias = "style")]
    pub translated: PathBuf,
    /// Geometry constraint (the source photo).
    #[arg(long, visible_alias = "geo")]
    pub source: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Weight of the colour term; overrides `blend_beta`.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Coarse-to-fine sweeps; overrides `blend_iters`.
    #[arg(long)]
    pub iters: Option<usize>,
    /// `spectral` or `cg`; overrides `blend_solver`.
    #[arg(long)]
    pub solver: Option<String>,
    /// Output PNG; defaults to `<out-dir>/blend.png`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// First style image; a sampled code when absent.
    #[arg(long)]
    pub style_a: Option<PathBuf>,
    /// Last style image; a sampled code when absent.
    #[arg(long)]
    pub style_b: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    #[arg(long, default_value = "1to2")]
    pub direction: String,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    /// 1: bright squares on dark; 2: dark squares on warm bright.
    #[arg(long)]
    pub domain: usize,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut settings = Settings::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    if let Some(seed) = cli.global.seed {
        settings.set("seed", seed);
    }
    let g = &cli.global;
    match &cli.command {
        Command::Transfer(a) => commands::transfer::run(a, g, &settings),
        Command::Train(a) => commands::train::run(a, g, &settings),
        Command::Eval(a) => commands::eval::run(a, g, &settings),
        Command::Blend(a) => commands::eval::blend(a, g, &settings),
        Command::Interpolate(a) => commands::interpolate::run(a, g, &settings),
        Command::ToyCorpus(a) => commands::toy::run(a, g, &settings),
    }
}

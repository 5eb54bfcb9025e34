//! `fingergan` command line: dataset synthesis, training, enhancement,
//! evaluation, plotting and a self-check.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod selfcheck;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Settings;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "fingergan", version, about = "Latent fingerprint enhancement with adversarial skeleton reconstruction")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value settings file, applied over the built-in defaults
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting (repeatable), applied after FINGERGAN_* variables
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the effective settings and exit
    #[arg(long, global = true)]
    pub dump_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a training set of latents and ground truths
    SynthData(SynthArgs),
    /// Train the generator and discriminator on a synthesized set
    Train(TrainArgs),
    /// Enhance full-size latents with a trained generator
    Enhance(EnhanceArgs),
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Render a metrics log or CMC table to PNG
    Plot(PlotArgs),
    /// Run the built-in closed-form checks
    Selfcheck,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Procedural prints to generate
    #[arg(long)]
    pub prints: Option<u64>,
    /// Side of each procedural print in pixels
    #[arg(long)]
    pub size: Option<u64>,
    #[arg(long)]
    pub latents: Option<u64>,
    /// Directory of rolled prints to use instead of procedural ones
    #[arg(long)]
    pub rolled: Option<PathBuf>,
    /// Directory of background crops to use instead of procedural ones
    #[arg(long)]
    pub backgrounds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    /// Continue from the run directory's latest checkpoint
    #[arg(long)]
    pub resume: bool,
    /// Reconstruction loss only
    #[arg(long)]
    pub no_discriminator: bool,
    /// Gray rolled texture as the reconstruction target
    #[arg(long)]
    pub gray_gt: bool,
    /// Unit weight map
    #[arg(long)]
    pub no_weight: bool,
    #[arg(long)]
    pub saturating: bool,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub batch: Option<u64>,
    #[arg(long)]
    pub patch: Option<u64>,
    /// Channels of the first convolution of each network
    #[arg(long)]
    pub channels: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Threshold at 0.5, thin and extract minutiae
    #[arg(long)]
    pub binarize: bool,
    #[arg(long)]
    pub window: Option<u64>,
    #[arg(long)]
    pub step: Option<u64>,
    /// mean or gaussian
    #[arg(long)]
    pub aggregation: Option<String>,
    /// Inputs are already encoded TV textures
    #[arg(long)]
    pub texture_input: bool,
}

#[derive(Debug, Args)]
pub struct ToleranceArgs {
    #[arg(long)]
    pub loc_radius: Option<f64>,
    #[arg(long)]
    pub angle_tol_deg: Option<f64>,
    /// Match minutiae regardless of type
    #[arg(long)]
    pub ignore_type: bool,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Recovered genuine and introduced fake minutiae per image
    Recover {
        #[arg(long)]
        extracted: PathBuf,
        #[arg(long)]
        genuine: PathBuf,
        /// TSV report path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: ToleranceArgs,
    },
    /// Identification CMC curve of probes against a gallery
    Cmc {
        #[arg(long)]
        probes: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Curve image (defaults to the CSV path with a .png extension)
        #[arg(long)]
        png: Option<PathBuf>,
        #[command(flatten)]
        tol: ToleranceArgs,
    },
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, conflicts_with = "cmc")]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub cmc: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn overrides(cmd: &Command) -> Vec<(&'static str, String)> {
    let mut o = Vec::new();
    let mut opt = |key: &'static str, v: Option<String>| {
        if let Some(v) = v {
            o.push((key, v));
        }
    };
    let text = |v: &Option<u64>| v.map(|x| x.to_string());
    let real = |v: &Option<f64>| v.map(|x| x.to_string());
    let path = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
    let on = |b: bool| b.then(|| "true".to_string());
    let tolerance = |t: &ToleranceArgs, opt: &mut dyn FnMut(&'static str, Option<String>)| {
        opt("eval.loc_radius", real(&t.loc_radius));
        opt("eval.angle_tol_deg", real(&t.angle_tol_deg));
        opt("eval.require_type", t.ignore_type.then(|| "false".to_string()));
    };
    match cmd {
        Command::SynthData(a) => {
            opt("synth.prints", text(&a.prints));
            opt("synth.size", text(&a.size));
            opt("synth.latents_per_print", text(&a.latents));
            opt("synth.rolled_dir", path(&a.rolled));
            opt("synth.background_dir", path(&a.backgrounds));
        }
        Command::Train(a) => {
            opt("train.no_discriminator", on(a.no_discriminator));
            opt("train.gray_gt", on(a.gray_gt));
            opt("train.no_weight", on(a.no_weight));
            opt("train.saturating", on(a.saturating));
            opt("train.max_iterations", text(&a.iterations));
            opt("train.batch_size", text(&a.batch));
            opt("net.patch_size", text(&a.patch));
            opt("net.base_channels", text(&a.channels));
            opt("train.learning_rate", real(&a.lr));
            opt("train.eta", real(&a.eta));
            opt("train.checkpoint_every", text(&a.checkpoint_every));
        }
        Command::Enhance(a) => {
            opt("infer.window", text(&a.window));
            opt("infer.step", text(&a.step));
            opt("infer.aggregation", a.aggregation.clone());
            opt("infer.texture_input", on(a.texture_input));
        }
        Command::Eval(EvalCommand::Recover { tol, .. }) | Command::Eval(EvalCommand::Cmc { tol, .. }) => {
            tolerance(tol, &mut opt)
        }
        Command::Plot(_) | Command::Selfcheck => {}
    }
    o
}

/// Defaults < `--config` file < `FINGERGAN_*` environment < `--set` < flags.
pub fn settings(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &cli.common.config {
        s.apply_file(path)?;
    }
    s.apply_env(env)?;
    for kv in &cli.common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        s.set(k.trim(), v)?;
    }
    for (k, v) in overrides(&cli.command) {
        s.set(k, &v)?;
    }
    if let Some(seed) = cli.common.seed {
        s.set("seed", &seed.to_string())?;
    }
    s.validate()?;
    Ok(s)
}

fn execute(cli: Cli) -> Result<()> {
    let s = settings(&cli, std::env::vars())?;
    if cli.common.dump_config {
        print!("{}", s.dump());
        return Ok(());
    }
    match &cli.command {
        Command::SynthData(a) => {
            eprintln!("seed={}", s.seed());
            commands::synth_data(&s, &a.out)
        }
        Command::Train(a) => {
            eprintln!("seed={}", s.seed());
            commands::train(&s, &a.data, &a.run, a.resume)
        }
        Command::Enhance(a) => commands::enhance(&s, &a.checkpoint, &a.input, &a.out, a.binarize),
        Command::Eval(EvalCommand::Recover {
            extracted, genuine, out, ..
        }) => commands::eval_recover(&s, extracted, genuine, out.as_deref()),
        Command::Eval(EvalCommand::Cmc {
            probes, gallery, csv, png, ..
        }) => commands::eval_cmc(&s, probes, gallery, csv, png.as_deref()),
        Command::Plot(a) => commands::plot(a.metrics.as_deref(), a.cmc.as_deref(), &a.out),
        Command::Selfcheck => match selfcheck::run_all(&mut std::io::stdout()) {
            0 => Ok(()),
            n => Err(CliError::Runtime(format!("{n} self-checks failed"))),
        },
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! `hcn`: train, evaluate and chat with Hybrid Code Network dialog policies.

mod commands;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hcn::config::KeyValues;

use crate::commands::CliError;
use crate::run_config::{Mode, Overrides, RunConfig, Task};

#[derive(Parser, Debug)]
#[command(name = "hcn", version, about = "Hybrid Code Networks for task-oriented dialog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Supervised training; writes a checkpoint, metrics.csv and the action inventory.
    Train(Flags),
    /// Teacher-forced test accuracy (bAbI) or simulated success rate (dialer) into report.csv.
    Eval(Flags),
    /// Learning curve over training-set sizes into curve.csv.
    Curve(Flags),
    /// Reinforcement learning against the dialer simulator into rl_curve.csv.
    Rl(Flags),
    /// Interactive session with a trained checkpoint.
    Chat(Flags),
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// babi5, babi6, dialer or custom.
    #[arg(long)]
    task: Option<Task>,
    /// Data directory. bAbI tasks default to $HCN_BABI_DIR.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Word-vector text file used with --embed.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Output directory, or a `.ckpt` path with outputs beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, overrides_with = "no_mask")]
    mask: bool,
    #[arg(long = "no-mask")]
    no_mask: bool,
    #[arg(long, overrides_with = "no_embed")]
    embed: bool,
    #[arg(long = "no-embed")]
    no_embed: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated training-set sizes for `curve`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    sizes: Option<Vec<usize>>,
    #[arg(long = "rl-dialogs")]
    rl_dialogs: Option<usize>,
    /// Oracle dialogs used for supervised initialization; 0 starts from scratch.
    #[arg(long = "sl-init")]
    sl_init: Option<usize>,
    /// Size of an oracle dialog pool; one pool dialog joins the supervised set every 100 RL dialogs.
    #[arg(long)]
    interleave: Option<usize>,
    #[arg(long = "eval-episodes")]
    eval_episodes: Option<usize>,
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn toggle(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            task: self.task,
            data: self.data.clone(),
            embeddings: self.embeddings.clone(),
            ckpt: self.ckpt.clone(),
            out: self.out.clone(),
            embed: toggle(self.embed, self.no_embed),
            mask: toggle(self.mask, self.no_mask),
            seed: self.seed,
            epochs: self.epochs,
            hidden: self.hidden,
            runs: self.runs,
            sizes: self.sizes.clone(),
            rl_dialogs: self.rl_dialogs,
            sl_init: self.sl_init,
            interleave: self.interleave,
            eval_episodes: self.eval_episodes,
        }
    }
}

fn resolve(mode: Mode, flags: &Flags) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(path) => {
            let kv = KeyValues::load(path).map_err(|e| CliError::Data(e.to_string()))?;
            Overrides::from_key_values(&kv).map_err(CliError::Usage)?
        }
        None => Overrides::default(),
    };
    RunConfig::resolve(mode, flags.overrides().over(file)).map_err(CliError::Usage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (mode, flags) = match &cli.command {
        Command::Train(f) => (Mode::Train, f),
        Command::Eval(f) => (Mode::Eval, f),
        Command::Curve(f) => (Mode::Curve, f),
        Command::Rl(f) => (Mode::Rl, f),
        Command::Chat(f) => (Mode::Chat, f),
    };
    let outcome = resolve(mode, flags).and_then(|rc| commands::run(&rc));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hcn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

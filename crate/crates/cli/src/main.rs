//! `reuse-inr`: encode, decode and evaluate videos with the reuse-inr codec.

mod ablate;
mod commands;
mod manifest;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reuse_inr::Error;

use ablate::Suite;

#[derive(Parser, Debug)]
#[command(name = "reuse-inr", version, about = "Neural video codec with parameter reuse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the network and training settings come from.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Run config file (`version`, `[network]` and `[train]` tables).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named network preset, trained with the default schedule.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies every epoch count.
    #[arg(long)]
    pub scale_epochs: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Overfit a network to a raw video and write its bitstream.
    Encode {
        video: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Start from the weights carried by an existing bitstream.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Pack the initial weights without training.
        #[arg(long)]
        no_train: bool,
    },
    /// Reconstruct the raw video carried by a bitstream.
    Decode {
        bitstream: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR of a decoded video against its reference, and bpp of a bitstream.
    Eval {
        reference: PathBuf,
        decoded: PathBuf,
        #[arg(long)]
        bitstream: Option<PathBuf>,
        /// Label of the row appended to `rd.csv` in the run directory.
        #[arg(long, default_value = "run")]
        label: String,
        #[arg(long, requires = "bitstream")]
        out: Option<PathBuf>,
    },
    /// Run one ablation grid over every raw video in a corpus directory.
    Ablate {
        #[arg(value_enum)]
        suite: Suite,
        corpus: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bjøntegaard delta rate of a test RD curve against an anchor.
    Bdrate { anchor: PathBuf, test: PathBuf },
    /// Decoding multiply-accumulate count of a network.
    Macs {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Frame count; defaults to the network's own.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Write synthetic sequences as raw video.
    Synth {
        /// Sequence kind; every kind when omitted.
        #[arg(long)]
        kind: Vec<String>,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status for each error class; 2 is shared with argument parsing.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Config(_) => 3,
        Error::Dimension { .. } | Error::Index(_) | Error::Data(_) | Error::Evaluation(_) | Error::Io(_) => 4,
        Error::Format(_) | Error::Corruption(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let res = match cli.command {
        Command::Encode { video, cfg, out, init, no_train } => {
            commands::encode(&argv, &video, &cfg, &out, init.as_deref(), no_train)
        }
        Command::Decode { bitstream, out } => commands::decode(&argv, &bitstream, &out),
        Command::Eval { reference, decoded, bitstream, label, out } => {
            commands::eval(&argv, &reference, &decoded, bitstream.as_deref(), &label, out.as_deref())
        }
        Command::Ablate { suite, corpus, cfg, out } => ablate::run(&argv, suite, &corpus, &cfg, &out),
        Command::Bdrate { anchor, test } => commands::bdrate(&anchor, &test),
        Command::Macs { cfg, frames, height, width } => commands::macs(&cfg, frames, height, width),
        Command::Synth { kind, frames, height, width, seed, out } => {
            commands::synth(&argv, &kind, (frames, height, width), seed, &out)
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

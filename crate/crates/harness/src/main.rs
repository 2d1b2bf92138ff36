use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vidmpi_harness::{bench, launch, restart, LaunchConfig};

#[derive(Parser)]
#[command(name = "vidmpi", about = "Run, checkpoint and restart mini-apps on model MPI backends")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an app, optionally checkpointing after a step.
    Launch {
        #[arg(long)]
        app: String,
        #[arg(long)]
        ranks: u32,
        #[arg(long)]
        backend: String,
        #[arg(long, requires = "ckpt_dir")]
        ckpt_after: Option<u64>,
        #[arg(long, requires = "ckpt_after")]
        ckpt_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Keep running after the checkpoint instead of exiting.
        #[arg(long)]
        continue_after_ckpt: bool,
    },
    /// Resume from a checkpoint directory on the given backend.
    Restart {
        #[arg(long)]
        ckpt_dir: PathBuf,
        #[arg(long)]
        backend: String,
    },
    /// Time the self-send loop directly and through the wrappers.
    Bench {
        #[arg(long, default_value_t = 1_000_000)]
        iters: u64,
        #[arg(long, default_value = "int_table")]
        backend: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Launch { app, ranks, backend, ckpt_after, ckpt_dir, seed, continue_after_ckpt } => {
            let cfg = LaunchConfig { app, ranks, backend, ckpt_after, ckpt_dir, seed, continue_after_ckpt };
            launch(&cfg).map(|r| r.to_kv())
        }
        Cmd::Restart { ckpt_dir, backend } => restart(&ckpt_dir, &backend).map(|r| r.to_kv()),
        Cmd::Bench { iters, backend } => {
            if iters < 100_000 {
                eprintln!("warning: fewer than 100000 iterations gives noisy ratios");
            }
            bench::bench(iters, &backend).map(|r| r.to_kv())
        }
    };
    match result {
        Ok(text) => {
            println!("{text}");
            println!("status=ok");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("status=error");
            println!("error={e}");
            ExitCode::FAILURE
        }
    }
}

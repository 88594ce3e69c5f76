use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcm_frame::io::{
    cmd_condense, cmd_local_stress, cmd_solve_global, cmd_verify_cantilever, CommonOptions, ExitStatus, Outcome,
    VerifyOptions,
};

/// Two-scale analysis of space frames with 3D joints.
#[derive(Parser)]
#[command(name = "fcm-frame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Job file (TOML).
    #[arg(long)]
    job: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory of the content-addressed condensed-matrix cache.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Condense substructures into superelement matrices.
    Condense {
        #[command(flatten)]
        common: Common,
        /// Only this substructure.
        #[arg(long)]
        substructure: Option<String>,
    },
    /// Assemble superelements with the beams and solve the frame.
    SolveGlobal {
        #[command(flatten)]
        common: Common,
    },
    /// Recover the resolved stress state of substructures.
    LocalStress {
        #[command(flatten)]
        common: Common,
        /// Only this substructure.
        #[arg(long)]
        substructure: Option<String>,
    },
    /// Compare a two-scale cantilever against the all-beam model.
    VerifyCantilever {
        #[command(flatten)]
        common: Common,
        /// Finer discretization of the condensed segment.
        #[arg(long)]
        refined: bool,
        /// Largest accepted pointwise error.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn options(c: &Common) -> CommonOptions {
    CommonOptions {
        job: c.job.clone(),
        out: c.out.clone(),
        cache: c.cache.clone(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Condense { common, .. }
        | Command::SolveGlobal { common }
        | Command::LocalStress { common, .. }
        | Command::VerifyCantilever { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(ExitStatus::InputError.code() as u8);
        }
    }
    let opts = options(common);
    let result: fcm_frame::Result<Outcome> = match &cli.command {
        Command::Condense { substructure, .. } => cmd_condense(&opts, substructure.as_deref()),
        Command::SolveGlobal { .. } => cmd_solve_global(&opts),
        Command::LocalStress { substructure, .. } => cmd_local_stress(&opts, substructure.as_deref()),
        Command::VerifyCantilever { refined, threshold, .. } => cmd_verify_cantilever(
            &opts,
            &VerifyOptions {
                refined: *refined,
                threshold: *threshold,
            },
        ),
    };
    let status = match result {
        Ok(outcome) => {
            for line in &outcome.report {
                println!("{line}");
            }
            outcome.status()
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::from_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}

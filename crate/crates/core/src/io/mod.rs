//! Job files, result writers and the command implementations of the
//! `fcm-frame` binary.

mod commands;
pub mod job;
pub mod output;

pub use commands::{
    cmd_condense, cmd_local_stress, cmd_solve_global, cmd_verify_cantilever, CommonOptions, ExitStatus, Outcome,
    VerifyOptions,
};
pub use job::{parse_job, JobFile, LoadedJob};

//! `mmlpc`: synthesis, benchmarking and inspection tools for the
//! multi-band multi-time LPCNet engine.
//!
//! The binary is a thin wrapper around [`run`], which parses arguments,
//! dispatches a subcommand and writes its report to any sink.
//!
//! Exit status: 0 success, 1 internal failure or failed check, 2 usage or
//! validation error (including unreadable or corrupt input files).

pub mod args;
pub mod commands;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use args::{Cli, Command};

/// Failure classes mapped to exit codes.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mmlpcnet::Error>() {
            return match e {
                mmlpcnet::Error::Numeric(_) | mmlpcnet::Error::Degenerate(_) | mmlpcnet::Error::State(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<commands::UsageError>().is_some() {
            return 2;
        }
    }
    1
}

/// Runs one subcommand; `Ok(false)` means it completed but a check it performs failed.
pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a, out),
        Command::Bench(a) => commands::bench(a, out),
        Command::Flops(a) => commands::flops(a, out),
        Command::FbCheck(a) => commands::fb_check(a, out),
        Command::AttnDemo(a) => commands::attn_demo(a, out),
        Command::GenWeights(a) => commands::gen_weights(a, out),
        Command::GenFeatures(a) => commands::gen_features(a, out),
    }
}

/// Full command-line behaviour: reports go to `out`, diagnostics to stderr.
/// Returns the process exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code().clamp(0, 255) as u8;
        }
    };
    match dispatch(&cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

//! Command-line driver for the `sade` pipeline.
//!
//! [`run`] parses an argument vector, executes one subcommand and maps the
//! outcome to an exit status:
//!
//! | status | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | invalid data, validation failure or any other non-provider error |
//! | 2 | provider failure |
//! | 3 | usage error |
//!
//! Failures also print one JSON line on stderr:
//! `{"error":{"kind":...,"exit_code":...,"subcommand":...,"message":...}}`.

mod args;
mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;
use sade_core::debias::DebiasError;
use sade_core::eval::EvalError;
use sade_core::scorer::ProviderError;

pub use args::{Cli, Command, PROVIDER_ENV};
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_PROVIDER: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

/// Bad arguments detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn is_provider_failure(cause: &(dyn std::error::Error + 'static)) -> bool {
    if let Some(e) = cause.downcast_ref::<ProviderError>() {
        return !matches!(e, ProviderError::BadEndpoint(_));
    }
    if let Some(DebiasError::Provider(_)) = cause.downcast_ref::<DebiasError>() {
        return true;
    }
    if let Some(e) = cause.downcast_ref::<EvalError>() {
        return e.provider_error().is_some()
            || matches!(e, EvalError::Debias(DebiasError::Provider(_)));
    }
    false
}

/// Exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|c| {
        c.downcast_ref::<UsageError>().is_some()
            || matches!(
                c.downcast_ref::<ProviderError>(),
                Some(ProviderError::BadEndpoint(_))
            )
    }) {
        EXIT_USAGE
    } else if err.chain().any(is_provider_failure) {
        EXIT_PROVIDER
    } else {
        EXIT_INVALID
    }
}

fn kind(code: i32) -> &'static str {
    match code {
        EXIT_PROVIDER => "provider",
        EXIT_USAGE => "usage",
        _ => "invalid",
    }
}

fn report_failure(subcommand: &str, code: i32, message: &str) {
    let line = serde_json::json!({
        "error": { "kind": kind(code), "exit_code": code, "subcommand": subcommand, "message": message }
    });
    eprintln!("{line}");
}

/// Runs one subcommand and returns its exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let message = e.render().to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            report_failure("", EXIT_USAGE, first);
            return EXIT_USAGE;
        }
    };
    let name = cli.command.name();
    match commands::execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            report_failure(name, code, &format!("{e:#}"));
            code
        }
    }
}

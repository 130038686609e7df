//! `cryolock` command-line front end.
//!
//! Every subcommand reads JSON configs or trace CSVs, runs one library
//! operation and writes its results atomically. Exit status is 0 on success,
//! 1 for invalid input and 2 when the analysis itself fails; failures print a
//! single JSON line on stderr.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::Cli;

/// Failure of a subcommand, split by exit status.
#[derive(Debug)]
pub enum Failure {
    Invalid { kind: String, message: String },
    Analysis { kind: String, message: String },
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure::Invalid {
            kind: "invalid_argument".into(),
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid { .. } => 1,
            Failure::Analysis { .. } => 2,
        }
    }

    fn diagnostic(&self) -> String {
        let (kind, message) = match self {
            Failure::Invalid { kind, message } | Failure::Analysis { kind, message } => (kind, message),
        };
        serde_json::json!({
            "error": kind,
            "exit_code": self.exit_code(),
            "message": message.replace('\n', " "),
        })
        .to_string()
    }
}

impl From<cryolock::Error> for Failure {
    fn from(e: cryolock::Error) -> Self {
        let kind = e.kind().to_string();
        let message = e.to_string();
        if e.is_analysis_failure() {
            Failure::Analysis { kind, message }
        } else {
            Failure::Invalid { kind, message }
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Invalid {
            kind: "json".into(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid {
            kind: "io".into(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid command line")
                .trim_start_matches("error: ")
                .to_string();
            let f = Failure::Invalid {
                kind: "usage".into(),
                message: first,
            };
            eprintln!("{}", f.diagnostic());
            return ExitCode::from(f.exit_code());
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.diagnostic());
            ExitCode::from(f.exit_code())
        }
    }
}

use std::process::ExitCode;

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(hyposcreen_core::Error),
    Internal(String),
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    kind: &'a str,
    message: String,
    exit_code: u8,
}

impl CliError {
    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(hyposcreen_core::Error::Data(msg.into()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    /// Prints a one-line JSON error record to stderr.
    pub fn report(&self) -> ExitCode {
        let (error, kind, message) = match self {
            CliError::Usage(m) => ("usage", "usage", m.clone()),
            CliError::Data(e) => ("data", e.kind(), e.to_string()),
            CliError::Internal(m) => ("internal", "internal", m.clone()),
        };
        let record = ErrorRecord {
            error,
            kind,
            message,
            exit_code: self.exit_code(),
        };
        eprintln!("{}", serde_json::to_string(&record).expect("error record serialises"));
        ExitCode::from(self.exit_code())
    }
}

macro_rules! data_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.into())
            }
        })*
    };
}

data_errors!(
    hyposcreen_core::Error,
    hyposcreen_core::table::TableError,
    hyposcreen_core::report::ReportError,
    hyposcreen_core::config::ConfigError,
    hyposcreen_core::featurize::FeatureError,
    hyposcreen_core::explain::ExplainError,
    hyposcreen_core::stats::StatsError,
    hyposcreen_core::synth::SynthError,
    hyposcreen_core::evaluate::EvalError,
    hyposcreen_core::ingest::IngestError,
    hyposcreen_core::ensemble::EnsembleError,
    std::io::Error,
    serde_json::Error,
);

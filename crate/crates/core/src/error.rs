use crate::config::ConfigError;
use crate::ensemble::EnsembleError;
use crate::evaluate::EvalError;
use crate::explain::ExplainError;
use crate::featurize::FeatureError;
use crate::ingest::IngestError;
use crate::model::ModelError;
use crate::preprocess::PreprocessError;
use crate::registry::UnknownStrategy;
use crate::report::ReportError;
use crate::select::SelectError;
use crate::stats::StatsError;
use crate::synth::SynthError;
use crate::table::TableError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    UnknownStrategy(#[from] UnknownStrategy),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind, e.g. `"ingest"`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingest(_) => "ingest",
            Error::Feature(_) => "featurize",
            Error::Table(_) => "table",
            Error::Preprocess(_) => "preprocess",
            Error::Select(_) => "select",
            Error::Model(_) => "model",
            Error::Ensemble(_) => "ensemble",
            Error::Eval(_) => "evaluate",
            Error::Stats(_) => "stats",
            Error::Explain(_) => "explain",
            Error::Config(_) => "config",
            Error::UnknownStrategy(_) => "config",
            Error::Synth(_) => "synth",
            Error::Report(_) => "report",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

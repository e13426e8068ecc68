//! Dataset ingestion, synthetic-world generation, configuration, CLI
//! entry points, end-to-end evaluation, and report emission.

mod cli;
mod config;
mod dataset;
mod evaluate;
mod synth;

pub use cli::cli;
pub use config::{build_roster, build_world, AgentSpec, ModelConfig, RosterSpec, RunConfig, World};
pub use dataset::{ingest, save_dataset, split_dataset, DatasetRecord};
pub use evaluate::{
    evaluate, evaluate_debate, solo_accuracy, DebateReport, EvalOptions, RunReport, SampleReport,
};
pub use synth::{
    min_region_separation_km, synth_world, SynthWorld, SYNTH_AWAY_ACCURACY, SYNTH_HOME_ACCURACY,
    SYNTH_PERSUADABILITY,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("ingest {path}, line {line}: {msg}")]
    Ingest {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("validation: {0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(String),
    #[error("runtime: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// CLI exit code: 1 for validation problems, 2 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Ingest { .. } | HarnessError::Validation(_) => 1,
            HarnessError::Io(_) | HarnessError::Runtime(_) => 2,
        }
    }
}

use std::io;

use thiserror::Error;

use crate::space::WorkgroupSize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("workgroup size space is empty for maximum {0} (need at least 4)")]
    EmptySpace(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("no samples for test case ({scenario}, {wgsize})")]
    UnknownTestCase {
        scenario: String,
        wgsize: WorkgroupSize,
    },

    #[error("no workgroup size is legal for every scenario")]
    NoSafeParameter,

    #[error("no legal workgroup size remains: {0}")]
    NoLegalParameter(String),

    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("instruction counts sum to {sum}, expected total {total}")]
    InconsistentCounts { sum: u64, total: u64 },

    #[error("workgroup size {0} was refused")]
    RefusedParameter(WorkgroupSize),

    #[error("workgroup size {wgsize} exceeds maximum {max}")]
    IllegalWorkgroupSize { wgsize: WorkgroupSize, max: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate test case ({scenario}, {wgsize})")]
    DuplicateTestCase {
        scenario: String,
        wgsize: WorkgroupSize,
    },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("feature schema mismatch: {0}")]
    Schema(String),

    #[error("invalid prediction {0} for reciprocal fitness")]
    InvalidPrediction(f64),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("sample table does not cover the space of scenario `{scenario}` (missing {wgsize})")]
    IncompleteSpace {
        scenario: String,
        wgsize: WorkgroupSize,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

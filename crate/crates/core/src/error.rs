use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(String),

    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("row {row}: value is not finite")]
    NonFinite { row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series too short: have {len} points, need more than {need}")]
    SeriesTooShort { len: usize, need: usize },

    #[error("every value was rejected as an outlier")]
    AllValuesRemoved,

    #[error("split time {split} outside series span [{start}, {end}]")]
    SplitOutOfRange { split: i64, start: i64, end: i64 },

    #[error("degenerate scaler: temperature min equals max ({0})")]
    DegenerateScaler(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFiniteParameter(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("length mismatch: actual has {actual}, predicted has {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },

    #[error("actual value at index {index} is too close to zero for MAPE")]
    NearZeroActual { index: usize },

    #[error("R² undefined: actual series is constant")]
    ConstantActual,

    #[error("all feature points are identical; no split is possible")]
    IdenticalPoints,

    #[error("event at {start} lies outside the calendar period [{period_start}, {period_end})")]
    EventOutsidePeriod {
        start: i64,
        period_start: i64,
        period_end: i64,
    },

    #[error("unknown output format `{0}`")]
    UnknownFormat(String),

    #[error("invalid household profile: {0}")]
    InvalidProfile(String),

    #[error("config: {0}")]
    Config(String),

    #[error("transfer job {source_id} -> {target_id} failed: {inner}")]
    Job {
        source_id: String,
        target_id: String,
        inner: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("imbalance factor must be finite and >= 1, got {0}")]
    InvalidImbalance(f64),
    #[error("need at least {min} classes, got {got}")]
    TooFewClasses { min: usize, got: usize },
    #[error("largest class size {n_max} is below the imbalance factor {gamma}; the tail class would be empty")]
    EmptyTail { n_max: u64, gamma: f64 },
    #[error("class {class} ({name}) has {available} rows but {requested} were requested")]
    InsufficientSamples {
        class: usize,
        name: String,
        available: usize,
        requested: u64,
    },
    #[error("class {0} has no training rows")]
    EmptyClass(usize),
    #[error("temperature must be positive and not NaN, got {0}")]
    InvalidTemperature(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("row {row} has norm {norm}, expected 1")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("cannot normalize a zero or non-finite vector")]
    DegenerateVector,
    #[error("step {step} is outside a schedule of {total} steps")]
    StepOutOfRange { step: usize, total: usize },
    #[error("class counts disagree with the data at class {class}: catalog says {catalog}, data has {data}")]
    CountMismatch {
        class: usize,
        catalog: u64,
        data: usize,
    },
    #[error("training diverged in stage {stage}, epoch {epoch}, step {step}: loss = {loss}")]
    Diverged {
        stage: u8,
        epoch: usize,
        step: usize,
        loss: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid length {0}: must be a power of two")]
    InvalidLength(usize),
    #[error("effective duration {t_eff} s too long for a {length}-sample kernel at {fs} Hz")]
    DurationTooLong { t_eff: f64, length: usize, fs: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("repetition period of {period} samples is shorter than the kernel support ({required} samples)")]
    PeriodTooShort { period: usize, required: usize },
    #[error("duration too short: need at least {required} samples, got {available}")]
    DurationTooShort { required: usize, available: usize },
    #[error("too few periods: {0} (need at least 4)")]
    TooFewPeriods(usize),
    #[error("combination id {0} out of range")]
    UnknownCombination(usize),

    #[error("no harmonic component below Nyquist")]
    EmptyTable,
    #[error("instantaneous frequency {freq:.1} Hz reaches Nyquist ({nyquist:.1} Hz)")]
    NyquistViolation { freq: f64, nyquist: f64 },
    #[error("cannot normalize an all-zero signal")]
    ZeroSignal,
    #[error("normalization would clip (peak {peak:.3})")]
    WouldClip { peak: f64 },

    #[error("signal too short: {available} samples, need {required}")]
    SignalTooShort { required: usize, available: usize },
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),

    #[error("no voiced frames")]
    NoVoicing,
    #[error("insufficient voicing: {voiced_s:.2} s voiced, need {required_s:.2} s")]
    InsufficientVoicing { voiced_s: f64, required_s: f64 },
    #[error("loop-back channel does not match the stimulus (median offset {offset_cents:.1} cents)")]
    LoopbackMismatch { offset_cents: f64 },

    #[error("meter level is not stable (std {std_db:.2} dB over the last second)")]
    UnstableLevel { std_db: f64 },
    #[error("already calibrated; reset before binding again")]
    AlreadyCalibrated,

    #[error("audio device unavailable: {0}")]
    DeviceUnavailable(String),
    #[error("audio engine is busy")]
    EngineBusy,

    #[error("nothing to save")]
    NothingToSave,
    #[error("artifact {0} has not been saved")]
    NotSaved(String),
    #[error("analysis for {0} is not available yet")]
    AnalysisPending(String),
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("subject model invalid: {0}")]
    ModelInvalid(String),

    #[error("analysis of {artifact} failed ({code}): {message}")]
    AnalysisFailed { artifact: String, code: String, message: String },

    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown command: {0}")]
    UnknownCommand(String),

    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Short machine-readable code, used on the wire and across the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidLength(_) => "invalid-length",
            Error::DurationTooLong { .. } => "duration-too-long",
            Error::InvalidInput(_) => "invalid-input",
            Error::PeriodTooShort { .. } => "period-too-short",
            Error::DurationTooShort { .. } => "duration-too-short",
            Error::TooFewPeriods(_) => "too-few-periods",
            Error::UnknownCombination(_) => "unknown-combination",
            Error::EmptyTable => "empty-table",
            Error::NyquistViolation { .. } => "nyquist-violation",
            Error::ZeroSignal => "zero-signal",
            Error::WouldClip { .. } => "would-clip",
            Error::SignalTooShort { .. } => "signal-too-short",
            Error::NonPositiveFrequency(_) => "nonpositive-frequency",
            Error::NoVoicing => "no-voicing",
            Error::InsufficientVoicing { .. } => "insufficient-voicing",
            Error::LoopbackMismatch { .. } => "loopback-mismatch",
            Error::UnstableLevel { .. } => "unstable-level",
            Error::AlreadyCalibrated => "already-calibrated",
            Error::DeviceUnavailable(_) => "device-unavailable",
            Error::EngineBusy => "engine-busy",
            Error::NothingToSave => "nothing-to-save",
            Error::NotSaved(_) => "not-saved",
            Error::AnalysisPending(_) => "analysis-pending",
            Error::Parse { .. } => "parse-error",
            Error::Validation(_) => "validation-error",
            Error::ModelInvalid(_) => "model-invalid",
            Error::AnalysisFailed { .. } => "analysis-failed",
            Error::InvalidState(_) => "invalid-state",
            Error::UnknownCommand(_) => "unknown-command",
            Error::Io(_) => "storage-failure",
            Error::Json(_) => "json-error",
            Error::Wav(_) => "wav-error",
        }
    }
}

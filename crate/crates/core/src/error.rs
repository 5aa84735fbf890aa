use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency grid too narrow: {clipped:.3e} of the spectral mass falls outside it")]
    GridTooNarrow { clipped: f64 },

    #[error("spectra are defined on different frequency grids")]
    GridMismatch,

    #[error("source and detector have no spectral overlap (overlap integral {overlap:.3e})")]
    NoOverlap { overlap: f64 },

    #[error("undersampled: {0}")]
    Undersampled(String),

    #[error("no peak found")]
    NoPeak,

    #[error("ambiguous peak: disjoint regions above half maximum share the global maximum")]
    AmbiguousPeak,

    #[error("peak is truncated by the edge of the sampled range")]
    TruncatedPeak,

    #[error(
        "displacement {needed_um:.3} um lies outside the point-spread range of {range_um:.3} um"
    )]
    PsfRange { needed_um: f64, range_um: f64 },

    #[error(
        "carrier Nyquist violated: bin spacing {bin_spacing_um} um must be below {limit_um} um"
    )]
    NyquistViolation { bin_spacing_um: f64, limit_um: f64 },

    #[error("input too short: {len} samples, need more than {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("signal and noise regions overlap")]
    RegionOverlap,

    #[error("region `{0}` contains no samples")]
    EmptyRegion(&'static str),

    #[error("noise variance is degenerate ({variance:e})")]
    DegenerateNoise { variance: f64 },

    #[error("sequence mean is zero")]
    ZeroMean,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("config syntax error at line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("value out of range for `{field}`: {reason}")]
    Range { field: String, reason: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by the configuration rather than by the models.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::ConfigSyntax { .. } | Error::Config(_) | Error::Range { .. } => true,
            Error::Context { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

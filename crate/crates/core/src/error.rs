use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("step {step}: observed gap collapsed to {gap:.6} m after redraws")]
    GapCollapse { step: usize, gap: f64 },

    #[error("collision behind vehicle {vehicle} at t = {t:.3} s")]
    Collision { vehicle: usize, t: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: need at least {need}, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),

    #[error("root not bracketed on [{a}, {b}]")]
    NoBracket { a: f64, b: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("outside the rare-event regime: {0}")]
    OutOfRegime(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse { line, msg: e.to_string() }
    }
}

pub(crate) fn check(cond: bool, name: &'static str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: reason.to_string() })
    }
}

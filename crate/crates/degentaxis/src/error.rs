use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid error: {0}")]
    Grid(String),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("parameter error: {0}")]
    Params(String),

    #[error("alpha = {alpha} outside the admissible window (3/2, 19/12)")]
    Regime { alpha: f64 },

    #[error("negative density: {0}")]
    NegativeDensity(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("instability detected at t = {t}: {what}")]
    Instability { t: f64, what: String },

    #[error("undefined functional: {0}")]
    UndefinedFunctional(String),

    #[error("inadmissible exponents for {id}: {hypothesis}")]
    Inadmissible {
        id: &'static str,
        hypothesis: String,
    },

    #[error("dual norm error: {0}")]
    DualNorm(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("config error:\n{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One configuration problem with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn format_config_errors(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

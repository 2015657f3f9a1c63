use std::path::PathBuf;

use thiserror::Error;

/// Hard constraint families checked by the position controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Input and velocity box limits.
    Control,
    /// Clearance from obstacle spheres.
    Obstacle,
    /// Light outside the camera field of view.
    FieldOfView,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Constraint::Control => "g_c (control limits)",
            Constraint::Obstacle => "g_obs (obstacle clearance)",
            Constraint::FieldOfView => "g_rti (camera field of view)",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid scan region: {0}")]
    InvalidRegion(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("brute-force tour refused for {n} points (limit {max})")]
    TooManyPoints { n: usize, max: usize },
    #[error("no feasible control sequence: violates {constraint}: {detail}")]
    Infeasible { constraint: Constraint, detail: String },
    #[error("ill-conditioned lighting (condition number {condition:.3e}): {geometry}")]
    IllConditionedLighting { condition: f64, geometry: String },
    #[error("lighting vector ({u}, {v}) lies outside the unit disc")]
    OutOfDisc { u: f64, v: f64 },
    #[error("normal maps share no mutually valid pixel")]
    UndefinedMean,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("png: {0}")]
    Png(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<png::EncodingError> for Error {
    fn from(e: png::EncodingError) -> Self {
        Error::Png(e.to_string())
    }
}

impl From<png::DecodingError> for Error {
    fn from(e: png::DecodingError) -> Self {
        Error::Png(e.to_string())
    }
}

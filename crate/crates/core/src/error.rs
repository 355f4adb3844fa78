use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage names used to tag failures in the correction flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Normalize,
    Reconstruct,
    Segment,
    EstimateMaterials,
    SimulatePoly,
    FitPoly,
    SelectEnergy,
    Correct,
    Rereconstruct,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Normalize => "normalize",
            Stage::Reconstruct => "reconstruct",
            Stage::Segment => "segment",
            Stage::EstimateMaterials => "estimate-materials",
            Stage::SimulatePoly => "simulate-poly",
            Stage::FitPoly => "fit-poly",
            Stage::SelectEnergy => "select-energy",
            Stage::Correct => "correct",
            Stage::Rereconstruct => "re-reconstruct",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("energy {energy} keV is outside the tabulated range of material `{material}`")]
    EnergyOutOfRange { material: String, energy: f64 },

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("expected a {expected} volume, got {found}")]
    WrongKind { expected: &'static str, found: &'static str },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("look-up table mismatch: {0}")]
    LutMismatch(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format { path: path.as_ref().display().to_string(), message: message.into() }
    }

    /// True for failures inside numeric stages (as opposed to bad config or files).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Stage { .. } | Error::Degenerate(_) | Error::EnergyOutOfRange { .. }
        )
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e) })
    }
}

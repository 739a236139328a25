use thiserror::Error;

use crate::fock::{ModeId, Spatial};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cannot form tensor product: both states occupy mode {0}")]
    OverlappingModes(ModeId),

    #[error("cannot normalize the zero state")]
    ZeroState,

    #[error("linear mode map is not an isometry (max Gram deviation {defect:.3e})")]
    NotIsometric { defect: f64 },

    #[error("mode {0} passes through unmapped but is also an output of the map")]
    PassThroughCollision(ModeId),

    #[error("spatial label {0} is used more than once")]
    RepeatedLabel(Spatial),

    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("coefficients must satisfy alpha^2 + beta^2 = 1, got {0}")]
    UnnormalizedCoefficients(f64),

    #[error("invalid mixed state: {0}")]
    InvalidMixture(String),

    #[error("mode {0} is neither a detector channel nor an output mode")]
    UnmeasuredMode(ModeId),

    #[error("{0} is not a heralding pattern")]
    InvalidPattern(String),

    #[error("no phase-flip correction restores the target for pattern {pattern} (best overlap^2 {best})")]
    NoCorrection { pattern: String, best: f64 },

    #[error("phase-flip correction for pattern {pattern} is not unique up to global phase")]
    AmbiguousCorrection { pattern: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

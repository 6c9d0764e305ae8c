use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid { field, reason: reason.into() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("occupancy {0} outside [0, 1]")]
    OccupancyOutOfRange(f64),
    #[error("densities {0:?} are not admissible")]
    Inadmissible(Vec<f64>),
    #[error("lattices of {candidate} and {field} classes are not nested")]
    LatticeNesting { candidate: usize, field: usize },
    #[error("a lattice needs at least 2 speed classes, got {0}")]
    TooFewClasses(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative distribution entry {value} in population {population}, class {class}")]
    NegativeDistribution { population: usize, class: usize, value: f64 },
    #[error("non-finite value in state at t = {t}")]
    NumericalFailure { t: f64 },
    #[error("negative discriminant {0} in free-phase equilibrium")]
    NegativeDiscriminant(f64),
}

use crate::fraud::FraudError;
use crate::geostat::GeostatError;
use crate::ingest::IngestError;
use crate::model::{CourseId, LineId, ProfileError};
use crate::occupancy::FlowError;

/// Errors of the pipeline-level operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no course carries counting-cell data; nothing to learn fraud rates from")]
    NoCoveredCourses,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geostat(#[from] GeostatError),
    #[error("course {course}: {source}")]
    Profile {
        course: CourseId,
        source: ProfileError,
    },
    #[error("course {0} has no ticketing profile")]
    MissingTicketing(CourseId),
    #[error("station {0} has no known location")]
    UnknownStation(String),
    #[error("leave-line-out needs at least two lines with coverage, found {0}")]
    TooFewLines(usize),
    #[error("line {line}: {covered} of {total} courses covered, below the sweep threshold")]
    NotCoveredEnough {
        line: LineId,
        covered: usize,
        total: usize,
    },
    #[error("wMAPE undefined: reference occupancy sums to zero")]
    ZeroReference,
    #[error("wMAPE inputs differ in shape ({0} vs {1})")]
    ShapeMismatch(usize, usize),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl From<FraudError> for Error {
    fn from(e: FraudError) -> Self {
        match e {
            FraudError::NoCoveredCourses => Error::NoCoveredCourses,
            FraudError::Apc { source, .. } => Error::Flow(source),
            FraudError::MissingTicketing(c) => Error::MissingTicketing(c),
            FraudError::LengthMismatch { course } => Error::Profile {
                course,
                source: ProfileError::LengthMismatch,
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Every failure mode of the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error("point too close to the projection pole (1 - <P,q> = {0:e})")]
    PoleProximity(f64),
    #[error("vector is not tangent at the base point (<X,q> = {0:e})")]
    NotTangent(f64),
    #[error("curvature {0:e} too small for a Frenet frame")]
    DegenerateFrame(f64),
    #[error("curve is not parametrized by arc length (max |speed^2 - 1| = {0:e})")]
    ArcLengthViolation(f64),
    #[error("profile leaves the open upper hemisphere (sin phi = {0:e})")]
    HemisphereViolation(f64),
    #[error("immersion degenerates at ({u}, {v})")]
    DegenerateImmersion { u: f64, v: f64 },
    #[error("coordinates are not asymptotic Tschebycheff coordinates at ({u}, {v}): max defect {defect:e}")]
    NotAsymptotic { u: f64, v: f64, defect: f64 },
    #[error("hypothesis failed: {0}")]
    Precondition(String),
    #[error("denominator vanishes: {0}")]
    DegenerateDenominator(String),
    #[error("angle constraint violated by {0:e}")]
    ConstraintViolation(f64),
    #[error("normal angle with the Hopf field is not constant (stddev {0:e})")]
    NonConstantAngle(f64),
    #[error("initial data inside the singular band: {0}")]
    SingularInitialData(String),
    #[error("local error estimate {0:e} above tolerance after three step halvings")]
    StiffnessAbort(f64),
    #[error("Lame component l{index} vanishes at the sample point")]
    DivisionByZeroComponent { index: usize },
    #[error("point outside the parameter domain (margin {0})")]
    OutsideDomain(f64),
}

pub type Result<T> = std::result::Result<T, GeomError>;

use thiserror::Error;

/// Failures surfaced by the model, oracle, planner and simulator.
///
/// Momenta and energies are reported as `f64` regardless of the scalar type
/// used for the computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("gap closes at k = ({kx}, {ky}): gap {gap:e} below tolerance")]
    GaplessPoint { kx: f64, ky: f64, gap: f64 },

    #[error("({x}, {y}) is not an integer combination of the reciprocal vectors")]
    NotReciprocal { x: f64, y: f64 },

    #[error("plaquette flux {flux} reached ±π; refine the grid")]
    PlaquetteSaturated { flux: f64 },

    #[error("Chern number not quantized: residual {residual:e}")]
    NotQuantized { residual: f64 },

    #[error("open path has no closure: endpoints are not reciprocal-equivalent")]
    NoClosure,

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error("time step too large: norm drift {drift:e}")]
    StepTooLarge { drift: f64 },

    #[error("degenerate fringe scan: {0}")]
    DegenerateScan(String),

    #[error("serialization failed: {0}")]
    Serialization(String),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "INVALID_PARAMS",
            Error::GaplessPoint { .. } => "GAPLESS_POINT",
            Error::NotReciprocal { .. } => "NOT_RECIPROCAL",
            Error::PlaquetteSaturated { .. } => "PLAQUETTE_SATURATED",
            Error::NotQuantized { .. } => "NOT_QUANTIZED",
            Error::NoClosure => "NO_CLOSURE",
            Error::InvalidPath(_) => "INVALID_PATH",
            Error::MalformedPlan(_) => "MALFORMED_PLAN",
            Error::StepTooLarge { .. } => "STEP_TOO_LARGE",
            Error::DegenerateScan(_) => "DEGENERATE_SCAN",
            Error::Serialization(_) => "SERIALIZATION",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

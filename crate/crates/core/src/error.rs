use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    /// `J` was applied outside its domain (functions with zero mean).
    #[error("function has non-zero mean {mean:.3e} (tolerance {tol:.3e})")]
    NonZeroMean { mean: f64, tol: f64 },

    #[error("operator does not map real functions to real functions (asymmetry {asymmetry:.3e})")]
    NotRealOperator { asymmetry: f64 },

    #[error("point z = {re} + {im}i lies within {distance:.3e} of the image curve (tolerance {tol:.3e})")]
    OnBoundaryCurve {
        re: f64,
        im: f64,
        distance: f64,
        tol: f64,
    },

    #[error("numerical rank is ambiguous: candidates {lower} and {upper}, gap ratio {gap:.3e}")]
    RankAmbiguous { lower: usize, upper: usize, gap: f64 },

    #[error("rank {rank} is not small relative to the truncated dimension {size}")]
    UnboundedRank { rank: usize, size: usize },

    #[error("handle rank {rank} is odd")]
    OddRank { rank: usize },

    #[error("winding number is ill-conditioned: raw value {raw:.6} (defect {defect:.3e})")]
    WindingIllConditioned { raw: f64, defect: f64 },

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("interior stiffness block is singular: {0}")]
    SingularInterior(String),

    #[error("boundary has {vertices} vertices, need at least {required} for {modes} modes")]
    Underresolved {
        vertices: usize,
        required: usize,
        modes: usize,
    },

    #[error("no kernel element has a usable tangential derivative at s = {at:.4}")]
    NoCoordinateCandidate { at: f64 },

    #[error("witness is not invertible in the kernel: {0}")]
    WitnessNotInvertible(String),

    #[error("winding field has no cell with positive winding")]
    EmptyRegion,

    #[error("no kernel element yields a defect-free boundary curve with positive winding")]
    NoUnivalentCandidate,

    #[error("function is not in the kernel span (relative distance {distance:.3e})")]
    NotInKernel { distance: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input data, as opposed
    /// to numerical breakdowns.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::GridMismatch { .. }
                | Error::NotRealOperator { .. }
                | Error::DegenerateMesh(_)
                | Error::Underresolved { .. }
                | Error::InvalidInput(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

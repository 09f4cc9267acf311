use thiserror::Error;

use crate::mesh::Element;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("basis index {index} out of range for {count} functions")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("parameter {0} lies outside [0, 1]")]
    ParameterOutOfRange(f64),

    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),

    #[error("fine knot vector is not the dyadic refinement of the coarse one")]
    NotARefinement,

    #[error("singular local Gram matrix")]
    SingularGram,

    #[error("basis function {target:?} does not overlap the element")]
    NotSupportedOnElement { target: (usize, usize) },

    #[error("interface mismatch: {0}")]
    InterfaceMismatch(String),

    #[error("element {0:?} is not active in the mesh")]
    StaleElement(Element),

    #[error("meshes are not nested")]
    NotNested,

    #[error("meshes do not share the same initial mesh")]
    IncompatibleMeshes,

    #[error("mesh is not admissible")]
    NotAdmissible,

    #[error("degenerate Jacobian on patch {patch} at ({}, {})", t[0], t[1])]
    DegenerateJacobian { patch: usize, t: [f64; 2] },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,

    #[error("unclassifiable element adjacency: {0}")]
    Adjacency(String),

    #[error("point is not located on the boundary")]
    PointNotLocatable,

    #[error("point lies on an edge of the boundary")]
    NonSmoothPoint,

    #[error("Galerkin matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("estimator report is empty")]
    EmptyReport,

    #[error("sequence has {0} entries, at least 3 are required")]
    SequenceTooShort(usize),

    #[error("extrapolated energy {limit} is below the discrete energy {discrete}")]
    Extrapolation { limit: f64, discrete: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from a numerical failure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularGram
                | Error::DegenerateJacobian { .. }
                | Error::CoincidentPoints
                | Error::NotPositiveDefinite
                | Error::Extrapolation { .. }
                | Error::Adjacency(_)
        )
    }
}

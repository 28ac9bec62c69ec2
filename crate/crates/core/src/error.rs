use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("zero polynomial has no Sturm chain")]
    ZeroPolynomial,
    #[error("division by the zero polynomial")]
    DivisionByZero,
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),

    #[error("series has a non-negligible constant term {0:e}")]
    NonzeroConstantTerm(f64),
    #[error("trivial branch not detected: coefficient of lambda^{0} is {1:e}")]
    TrivialBranchNotDetected(usize, f64),
    #[error("multiplicity exceeds truncation order {0}")]
    MultiplicityExceedsTruncation(usize),
    #[error("Newton polygon needs at least two vertices")]
    InsufficientPolygon,
    #[error("degenerate edge polynomial on edge {0}")]
    DegenerateEdge(usize),
    #[error("branch counts disagree across probe scales: {0:?}")]
    NeighborhoodTooLarge(Vec<(usize, usize)>),

    #[error("determinant is not polynomial to tolerance at degree cap {cap} (held-out residual {residual:e})")]
    NotPolynomialAtCap { cap: usize, residual: f64 },
    #[error("matrix curve is not Fredholm of index zero near {0}")]
    NotFredholm(f64),
    #[error("endpoint {0} is an eigenvalue")]
    EndpointEigenvalue(f64),
    #[error("eigenvalue at {0} is not isolated in the window")]
    NotIsolated(f64),
    #[error("determinant vanishes identically near {0}")]
    DetIdenticallyZero(f64),
    #[error("non-isolated eigenvalue branch near {0}")]
    NonIsolatedBranch(f64),
    #[error("inverse iteration failed to converge at {0}")]
    EigenIterationFailed(f64),
    #[error("matrix dimensions do not match: {0}")]
    DimensionMismatch(String),

    #[error("regular point: the linearization is invertible (smallest singular value ratio {0:e})")]
    NotSingular(f64),
    #[error("kernel dimension {0} is not supported (only simple kernels)")]
    MultiDimensionalKernel(usize),
    #[error("complement solve did not converge at lambda={lambda}, z={z} (residual {residual:e})")]
    ComplementNoConvergence { lambda: f64, z: f64, residual: f64 },
    #[error("reduced fit unstable: held-out residual {heldout:e} vs noise floor {noise:e}")]
    FitUnstable { heldout: f64, noise: f64 },
    #[error("base state is not on a trivial branch (residual {0:e})")]
    NotOnTrivialBranch(f64),
    #[error("inconsistent multiplicity: series {series}, determinant {det}, eigenvalue {mu}")]
    InconsistentMultiplicity { series: usize, det: usize, mu: usize },

    #[error("bordered tangent system is singular at lambda={0}")]
    TangentSingular(f64),
    #[error("corrector failed at minimum step {0:e}")]
    StepFailure(f64),
    #[error("Newton did not converge ({0})")]
    NewtonFailure(String),
    #[error("no departing branch found")]
    NoDeparture,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

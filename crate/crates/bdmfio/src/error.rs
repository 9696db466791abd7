use thiserror::Error;

/// Errors raised by the library operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fiber sample {0:?} lies inside the excision radius")]
    DegenerateFiber(Vec<f64>),
    #[error("Newton inversion failed: {0}")]
    NonInvertibleJacobian(String),
    #[error("boundary map is not a cotangent lift (fiber-linearity residual {0:.3e})")]
    NotALift(f64),
    #[error("Newton iteration diverged: {0}")]
    NewtonDivergence(String),
    #[error("fiber Jacobian is degenerate: {0}")]
    NondegeneracyViolated(String),
    #[error("Hamiltonian flow leaves the chart box at {0:?}")]
    FlowLeavesChart(Vec<f64>),
    #[error("flow chart fails admissibility: {0}")]
    AdmissibilityViolated(String),
    #[error("phase depends on the normal fiber variable at the boundary (residual {0:.3e})")]
    BoundaryDependenceOnNormalFiber(f64),
    #[error("symbol has no principal part and the H-membership route is disabled")]
    MissingPrincipalPart,
    #[error("residual after the polynomial fit of degree {degree} still grows (relative {residual:.3e})")]
    PolynomialDegreeOverflow { degree: usize, residual: f64 },
    #[error("Taylor split series does not settle (last term {0:.3e})")]
    SeriesDivergence(f64),
    #[error("side mismatch: {0}")]
    SideMismatch(String),
    #[error("dilation scale must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("norm not resolved: {0}")]
    UnderResolved(String),
    #[error("jet order {requested} exceeds cap {cap}")]
    JetCapExceeded { requested: usize, cap: usize },
    #[error("quadrature did not converge (entry change {0:.3e})")]
    QuadratureNonconvergence(f64),
    #[error("symbol violates the transmission condition: {0}")]
    TransmissionViolated(String),
    #[error("symbol has a nonzero polynomial part (max coefficient {0:.3e})")]
    PolynomialPartPresent(f64),
    #[error("type {d} exceeds max(order, 0) for order {m}")]
    TypeBoundViolated { m: f64, d: usize },
    #[error("order mismatch: {0}")]
    OrderMismatch(String),
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),
    #[error("adjoint requires order <= 0 and type 0 (got order {m}, type {d})")]
    PositiveOrderAdjoint { m: f64, d: usize },
    #[error("boundary symbol is singular (smallest singular value {0:.3e})")]
    SingularBoundarySymbol(f64),
    #[error("kernel quadrature did not converge: {0}")]
    KernelQuadratureNonconvergence(String),
    #[error("section is not unitary (max ||u|-1| = {0:.3e})")]
    NonUnitarySection(f64),
    #[error("index estimate is unstable: {0}")]
    UnstableIndex(String),
    #[error("sections are not homotopic (winding numbers {0} and {1})")]
    ObstructedHomotopy(i64, i64),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

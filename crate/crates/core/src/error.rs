use thiserror::Error;

/// Why a point failed a domain check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainFailure {
    /// The open domain predicate itself is violated.
    Predicate,
    /// The predicate holds, but not with the requested margin.
    Margin,
    /// The Hessian is not positive definite (minimum eigenvalue too small).
    NotPositiveDefinite,
    /// The potential could not be evaluated (a primitive left its real domain).
    Numerical,
    /// The point has the wrong number of coordinates.
    Dimension,
}

impl std::fmt::Display for DomainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DomainFailure::Predicate => "domain predicate violated",
            DomainFailure::Margin => "inside domain but within margin of its boundary",
            DomainFailure::NotPositiveDefinite => "Hessian not positive definite",
            DomainFailure::Numerical => "potential not evaluable",
            DomainFailure::Dimension => "dimension mismatch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numerical domain error: {primitive} applied to {value:e}")]
    NumericalDomain { primitive: &'static str, value: f64 },

    #[error("point {point:?} is outside the domain: {reason}")]
    OutOfDomain {
        point: Vec<f64>,
        reason: DomainFailure,
    },

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown catalog potential `{0}`")]
    UnknownPotential(String),

    #[error("parameter `{name}` = {value} out of range: {reason}")]
    Parameter {
        name: String,
        value: f64,
        reason: String,
    },

    #[error("degenerate metric: minimum Hessian eigenvalue {min_eigenvalue:e}")]
    DegenerateMetric { min_eigenvalue: f64 },

    #[error("gradient-map inversion failed after {iterations} iterations (best residual {residual:e})")]
    Inversion { residual: f64, iterations: usize },

    #[error("segment leaves the gradient image at t = {t}")]
    SegmentExitsDomain { t: f64 },

    #[error("mixed derivative c_(x,y) is singular (smallest singular value {min_singular:e})")]
    SingularMixedDerivative { min_singular: f64 },

    #[error("{0} must be nonzero")]
    ZeroVector(&'static str),

    #[error("vector-covector pair is not orthogonal: eta(xi) = {pairing:e}")]
    NotOrthogonal { pairing: f64 },

    #[error("region corner {corner:?} is outside the domain ({reason})")]
    RegionOutsideDomain {
        corner: Vec<f64>,
        reason: DomainFailure,
    },

    #[error("infeasible masses: source total {source_total}, target total {target_total}")]
    InfeasibleMasses {
        source_total: f64,
        target_total: f64,
    },

    #[error("Sinkhorn did not converge in {iterations} iterations (marginal violation {violation:e})")]
    SinkhornNonConvergence { violation: f64, iterations: usize },

    #[error("cost undefined for pair ({i}, {j}): {reason}")]
    PairOutOfDomain { i: usize, j: usize, reason: String },

    #[error("plan is not optimal: complementary slackness fails")]
    NotOptimal,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (domain, inversion, convergence)
    /// as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalDomain { .. }
                | Error::OutOfDomain { .. }
                | Error::DegenerateMetric { .. }
                | Error::Inversion { .. }
                | Error::SegmentExitsDomain { .. }
                | Error::SingularMixedDerivative { .. }
                | Error::RegionOutsideDomain { .. }
                | Error::SinkhornNonConvergence { .. }
                | Error::PairOutOfDomain { .. }
                | Error::NotOptimal
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("points coincide (|x - y| = {distance:e} below cutoff {cutoff:e})")]
    CoincidentPoints { distance: f64, cutoff: f64 },
    #[error("point ({0}, {1}) lies outside the domain")]
    PointOutsideDomain(f64, f64),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("boundary integral solve failed: {0}")]
    SolverDiverged(String),
    #[error("profile ODE integration failed: {0}")]
    OdeIntegrationFailed(String),
    #[error("far-field slope not converged: r w'(r) varies by {variation:e} over the last decade")]
    SlopeNotConverged { variation: f64 },
    #[error("quadrature did not reach tolerance (estimated error {error:e})")]
    QuadratureNotConverged { error: f64 },
    #[error("spike points too close or too near the boundary: {0}")]
    PointsTooClose(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("degenerate critical point (smallest |Hessian eigenvalue| = {min_abs_eigenvalue:e})")]
    DegenerateCriticalPoint { min_abs_eigenvalue: f64 },
    #[error("invalid exponent p = {0} (need p > 1)")]
    InvalidExponent(f64),
    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),
    #[error("Newton iteration diverged at p = {p}: {reason} (try a smaller p step)")]
    NewtonDiverged { p: f64, reason: String },
    #[error("discrete solution is negative at an interior node (min = {min:e})")]
    NegativeSolution { min: f64 },
    #[error("eigensolver failed: {0}")]
    EigenSolverFailed(String),
    #[error("weight p*u^(p-1) underflows on the whole mesh")]
    WeightDegenerate,
    #[error("ball of radius {radius} around ({cx}, {cy}) is not inside the domain")]
    BallOutsideDomain { cx: f64, cy: f64, radius: f64 },
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

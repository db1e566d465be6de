use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("malformed mesh: {0}")]
    Mesh(String),

    #[error("mesh file parse error at line {line}: {reason}")]
    MeshFormat { line: usize, reason: String },

    #[error("malformed reaction: {0}")]
    Reaction(String),

    #[error("expression error in `{expr}`: {reason}")]
    Expression { expr: String, reason: String },

    #[error("linear solve failed: {0}")]
    Linear(String),

    #[error("eigen solver captured a sign-changing mode (interior node {node} has value {value:e})")]
    ModeCapture { node: usize, value: f64 },

    #[error("no verified sub-solution: {0}")]
    Subsolution(String),

    #[error("growth bound violated at s = {s}, ubar = {ubar}, eps = {eps}: g_eps = {value} > bound {bound}")]
    GrowthViolation { s: f64, ubar: f64, eps: f64, value: f64, bound: f64 },

    #[error("line search stagnated at eps = {eps} after {iterations} iterations (residual {residual:e})")]
    Stagnation { eps: f64, iterations: usize, residual: f64, energy_trace: Vec<f64> },

    #[error("energy increased across an accepted step at eps = {eps}: {before} -> {after}")]
    EnergyIncrease { eps: f64, before: f64, after: f64 },

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "p", reason: format!("expected p > 1, got {p}") })
    }
}

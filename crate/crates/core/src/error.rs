use thiserror::Error;

pub type Result<T, E = FlowError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FlowError {
    /// The curvature vector left the cone. `index` is the first `H_j` that is not positive.
    #[error("curvature vector outside the admissible cone (H_{index} <= 0)")]
    OutsideCone { index: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid curvature vector: {0}")]
    InvalidVector(String),

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps")]
    EigenNonConvergence { sweeps: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("admissibility lost at node {node} (t = {t}): kappa = {kappa:?}")]
    Admissibility { node: usize, t: f64, kappa: Vec<f64> },

    #[error("numerical fault at node {node} (t = {t}): {what}")]
    NumericalFault { node: usize, t: f64, what: String },

    #[error("time step {dt:e} below dt_min {dt_min:e} at t = {t} (near extinction)")]
    Stiffness { t: f64, dt: f64, dt_min: f64 },

    #[error("structure condition violated: {0}")]
    ConditionViolation(String),

    #[error("cylinder already extinct: t = {t} > T = {extinction}")]
    Extinct { t: f64, extinction: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl FlowError {
    pub fn is_config(&self) -> bool {
        matches!(self, FlowError::Config(_) | FlowError::IndexOutOfRange { .. })
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FlowError::Admissibility { .. }
                | FlowError::NumericalFault { .. }
                | FlowError::Stiffness { .. }
                | FlowError::EigenNonConvergence { .. }
        )
    }
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

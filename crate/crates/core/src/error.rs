use thiserror::Error;

/// Which constraint family rejected a reflection candidate or subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    Ordering,
    Qos,
    Mse,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ConstraintFamily::Ordering => "decoding-order",
            ConstraintFamily::Qos => "NOMA QoS",
            ConstraintFamily::Mse => "aggregation MSE",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("NOMA user {user} cannot meet its minimum rate")]
    QosInfeasible { user: usize },
    #[error("aggregation MSE bound cannot be met: {0}")]
    MseInfeasible(String),
    #[error("{0} constraints are infeasible")]
    ConstraintInfeasible(ConstraintFamily),
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    #[error("enumeration needs {required} candidates, cap is {cap}")]
    EnumerationCap { required: u128, cap: u128 },
    #[error("scenario infeasible: {0}")]
    ScenarioInfeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("plot error: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a structural precondition.
    #[error("validation: {0}")]
    Validation(String),

    /// A coupon id not present in the catalog was referenced.
    #[error("unknown coupon id {0}")]
    UnknownCoupon(usize),

    /// A treatment arm required by an operation has no rows.
    #[error("arm {0} has no rows in the dataset")]
    EmptyArm(usize),

    /// A problem instance has no feasible solution.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The LP solver failed to terminate or certify its answer.
    #[error("solver: {0}")]
    Solver(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

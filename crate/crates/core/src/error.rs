use std::path::PathBuf;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a damped Newton solve gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveFailure {
    InfeasibleInitialization,
    Stalled,
    MaxIterations,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveFailure::InfeasibleInitialization => "infeasible initialization",
            SolveFailure::Stalled => "stalled",
            SolveFailure::MaxIterations => "max iterations exceeded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no points")]
    NoPoints,
    #[error("bad density: {0}")]
    BadDensity(String),
    #[error("degenerate discretization: every sampled density value is zero")]
    DegenerateDiscretization,
    #[error("coincident sites {0} and {1}")]
    CoincidentSites(usize, usize),
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("duality violation: facet {facet} gradient lies {distance:.3e} outside the target domain")]
    DualityViolation { facet: usize, distance: f64 },
    #[error("insufficient replication: cell {0} reaches the replicated box boundary")]
    InsufficientReplication(usize),
    #[error("singular jacobian: {0}")]
    SingularJacobian(String),
    #[error("solver {kind} after {} iterations (residual {:.3e})", report.iterations, report.final_residual_inf)]
    Solve {
        kind: SolveFailure,
        report: Box<SolveReport>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn solve(kind: SolveFailure, report: SolveReport) -> Self {
        Error::Solve {
            kind,
            report: Box::new(report),
        }
    }
}

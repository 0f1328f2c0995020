use std::io;

use crate::linsolve::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Field evaluated at (or within epsilon of) a multipole center.
    #[error("singular evaluation: point lies {distance:e} Å from a site center")]
    Singular { distance: f64 },

    #[error("sites {0} and {1} share the same center")]
    CoincidentSites(usize, usize),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config: {0}")]
    Config(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error(
        "linear solver stopped after {} iterations with relative residual {:.3e}",
        .0.iterations,
        .0.residual
    )]
    NotConverged(SolveReport),

    #[error("induced dipoles did not converge after {iterations} iterations (last rms change {last_rms:.3e})")]
    ScfNotConverged {
        iterations: usize,
        last_rms: f64,
        history: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Convergence,
    Geometry,
}

impl Error {
    pub fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotConverged(_) | Error::ScfNotConverged { .. } => ErrorKind::Convergence,
            Error::Geometry(_) | Error::Grid(_) | Error::Singular { .. } => ErrorKind::Geometry,
            Error::CoincidentSites(..)
            | Error::Parse { .. }
            | Error::Invalid(_)
            | Error::Config(_)
            | Error::Io(_) => ErrorKind::Input,
        }
    }
}

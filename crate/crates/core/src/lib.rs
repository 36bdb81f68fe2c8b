//! Adaptive multiresolution finite-volume solver for 1-D strongly
//! degenerate parabolic equations `u_t + b(u)_x = A(u)_xx`.
//!
//! The crate combines three ingredients:
//!
//! * a finite-volume scheme with the Engquist-Osher flux and MUSCL
//!   θ-limited reconstruction ([`fv`]),
//! * explicit TVD-RK3 time stepping with an embedded RK3(2) pair for
//!   adaptive step-size control ([`rk`]),
//! * a fully adaptive multiresolution representation of the solution in a
//!   graded tree with analytically scaled thresholds ([`tree`]),
//!
//! orchestrated by [`driver`] and benchmarked by [`harness`]. Two worked
//! problems ship with the crate ([`model`]): batch sedimentation of a
//! flocculated suspension in a closed column, and kinematic traffic flow
//! with driver anticipation on a circular road with a traffic light.
//!
//! The `mrfv` binary exposes the solver and the experiment matrix on the
//! command line; the `book/` directory of the repository walks through the
//! concepts with runnable snippets (mirrored here as doctests in [`guide`]).

pub mod config;
pub mod cputime;
pub mod driver;
pub mod fv;
pub mod guide;
pub mod harness;
pub mod model;
pub mod quad;
pub mod rk;
pub mod tree;

#[doc(hidden)]
pub mod xrng;

use std::fmt;
use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A fixed-step run requested a step violating the CFL bound.
    CflViolation { cfl: f64, limit: f64 },
    /// The state picked up a NaN or infinity.
    NonFinite { context: String, t: f64 },
    /// A leaf is missing a stencil cousin.
    GradingViolation { level: u32, index: u64 },
    /// Two fields on different grids were combined.
    LevelMismatch { left: u32, right: u32 },
    /// Configuration file or CLI problem.
    Config(String),
    /// I/O failure with path context.
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::CflViolation { cfl, limit } => {
                write!(f, "CFL number {cfl:.4} exceeds the stability limit {limit}")
            }
            Error::NonFinite { context, t } => {
                write!(f, "non-finite state in {context} at t = {t}")
            }
            Error::GradingViolation { level, index } => {
                write!(f, "missing stencil node ({level}, {index}): tree not graded")
            }
            Error::LevelMismatch { left, right } => {
                write!(f, "fields live on different levels ({left} vs {right})")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

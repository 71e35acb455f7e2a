//! Dirichlet-to-Neumann operators of surfaces with one boundary circle.

pub mod boundary;
pub mod characterization;
pub mod error;
pub mod forward;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod recon;
pub mod svg;
pub mod topology;

pub use boundary::{BoundaryFunction, GridSpec};
pub use error::{Error, Result};
pub use linalg::{RankInfo, TolPolicy};
pub use num_complex::Complex64 as C64;
pub use operator::{BoundaryOperator, KernelBasis, Orientation};

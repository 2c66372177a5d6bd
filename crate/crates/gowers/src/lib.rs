//! Desk-scale computations with Gowers-type norms over `F_p^{n_1} x ... x F_p^{n_k}`.
//!
//! Every fast routine has a naive counterpart in the test suite, and every
//! search is exhaustive under an explicit tuple-count [`Budget`].

pub mod cubical;
pub mod error;
pub mod forms;
pub mod fourier;
pub mod group;
pub mod inverse;
pub mod io;
pub mod norms;
pub mod poly;
pub mod spectrum;
pub mod symmetry;
pub mod table;

pub use error::{Budget, Error, Result};
pub use group::{GroupSpec, Point, Subspace};
pub use poly::Polynomial;
pub use table::{CubicalFamily, FunctionTable};

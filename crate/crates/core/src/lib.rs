//! Log-determinant divergence based preconditioners for sparse SPD systems.
//!
//! An incomplete Cholesky factor `Q` is corrected by a low-rank term
//! `P = Q (I + W) Q^T`, with `W` chosen from the spectrum of the scaled error
//! `Q^-1 S Q^-T - I` either exactly, by Krylov methods, or by sketching.

pub mod bregman;
pub mod dense;
pub mod eigsolve;
pub mod error;
pub mod harness;
pub mod ichol;
pub mod matio;
pub mod pcg;
pub mod precond;
pub mod rng;
pub mod sketch;
pub mod sparse;

pub use error::{Error, Result};
pub use sparse::{CholFactor, CsrMatrix};
pub use precond::{Preconditioner, PrecondChoice};
pub use pcg::{pcg_solve, PcgOptions, SolveReport};

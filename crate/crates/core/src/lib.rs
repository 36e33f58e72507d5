//! Compressed-sensing recovery of sparse signals with a learned support prior.
//!
//! The crate is organised around the two stages of the scheme:
//!
//! * **training** – learn a sparsifying model ([`transforms`], [`dictlearn`]),
//!   estimate coefficient and representation-error statistics, and fit a
//!   restricted Boltzmann machine over support patterns ([`rbm`]);
//! * **recovery** – acquire `y = Φx + n` ([`sensing`]) and estimate `x` with the
//!   greedy MAP pursuit in [`recovery`].
//!
//! [`eval`] holds the reconstruction and QRS-detection metrics and [`io`]
//! covers WFDB ingestion, model persistence and the experiment runner.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictlearn;
pub mod error;
pub mod eval;
pub mod io;
mod linalg;
pub mod rbm;
pub mod recovery;
pub mod rng;
pub mod sensing;
pub mod transforms;

pub use error::{Error, Result};

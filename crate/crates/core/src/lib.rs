//! Bit-sampling locality sensitive hashing for the (r, (1+ε)r)-near-neighbor
//! problem on binary vectors under the Hamming metric.
//!
//! The pieces:
//!
//! - [`bitvec`]: packed points of `{0,1}^d` with popcount Hamming distance.
//! - [`projection`]: coordinate-sampling projection sequences and their
//!   samplers.
//! - [`index`]: the bank of hash tables, queries with early termination and
//!   the restart-on-budget high-probability query.
//! - [`oracle`]: brute-force ground truth.
//! - [`stats`]: Monte Carlo estimators checking collision probabilities.
//! - [`io`]: dataset formats and instance generators.

pub mod bitvec;
pub mod error;
pub mod index;
pub mod io;
pub mod oracle;
pub mod projection;
pub mod rng;
pub mod stats;

pub use bitvec::BitVector;
pub use error::{Error, Result};
pub use index::{derive_params, query_hp, Answer, IndexParams, LshIndex, QueryOutcome};
pub use io::Dataset;
pub use projection::ProjectionSeq;
pub use stats::EstimateReport;

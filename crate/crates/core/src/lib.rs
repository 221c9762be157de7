//! Policy-parameterized T-count optimization of Clifford+T phase polynomials.
//!
//! The crate is layered bottom-up:
//!
//! - [`gf2`]: packed vectors, matrices and elimination over GF(2)
//! - [`parity`]: parity matrices, `odd()` simplification and the signature tensor
//! - [`engine`]: admissible `(z, y)` rewrites and their nullspaces
//! - [`policy`]: schedules, features, scores and softmax selection
//! - [`search`]: the optimization loop, beam variant and trajectories
//! - [`tuner`]: latent-to-policy mapping, fitness, PSO and the path store
//! - [`bench`]: GF(2^n) multiplier and random benchmark instances, verification

pub mod bench;
pub mod engine;
pub mod error;
pub mod gf2;
pub mod parity;
pub mod policy;
pub mod search;
pub mod tuner;

pub use error::{Error, Result};
pub use gf2::{BitMatrix, BitVector};
pub use parity::{ParityMatrix, SignatureTensor};

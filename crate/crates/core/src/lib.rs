//! Stabilizability certificates and switching-signal synthesis for
//! discrete-time switched linear systems whose subsystems are all unstable.
//!
//! The pipeline: find a Schur-stable product `A_i^p A_j^q`
//! ([`search`]), evaluate the scalar certificate ([`certificate`]), build
//! switching signals as walks on the switch graph ([`graph`]), simulate them
//! ([`simulate`]) and cross-check everything by brute force ([`oracle`]).

pub mod certificate;
pub mod error;
pub mod graph;
pub mod instance;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod search;
pub mod simulate;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use search::{MatrixFamily, StableCombination};

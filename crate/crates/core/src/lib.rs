//! Mode-connecting paths between independently trained classifiers, found by
//! minimizing the discrete Jensen-Shannon energy of a chain of models.
//!
//! The pipeline is: train two endpoint networks ([`trainer`]), align the
//! second to the first under hidden-unit permutations ([`align`]), lay a
//! linear chain of models between them and bend it toward the geodesic in
//! distribution space ([`geodesic`]), then measure the result ([`metrics`]).

pub mod align;
pub mod cli;
pub mod data;
pub mod error;
pub mod geodesic;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use nn::{MlpConfig, ModelParams};

//! Point-cloud completion: predict the missing region of a partial scan.
//!
//! The crate is layered bottom-up:
//!
//! - [`numerics`] — dense tensors and a tape-based autodiff graph
//! - [`geom`] — point-set algorithms: sampling, neighbors, set distances
//! - [`data`] — synthetic shape corpus, benchmark generation, file formats
//! - [`model`] — the proxy-transformer completion network
//! - [`harness`] — optimizer, training loop, evaluation, checkpoint glue
//!
//! Clouds are `[n × 3]` row-major tensors throughout.

pub mod data;
pub mod geom;
pub mod harness;
pub mod model;
pub mod numerics;

//! Non-learned geometric primitives: sampling, neighborhoods, set distances,
//! evaluation metrics, and viewpoint cropping.
//!
//! Everything here is a pure function over immutable inputs and safe to call
//! concurrently. Metrics are computed in f64 regardless of the cloud's f32
//! storage so they can double as oracles for the f32 training path.

mod cloud;
mod crop;
mod metrics;
mod sample;

pub use cloud::{denormalize, eval_viewpoints, normalize_unit, PointCloud, Viewpoint};
pub use crop::crop_by_viewpoint;
pub use metrics::{chamfer, chamfer_graph, fidelity, fscore, fscore_threshold};
pub use sample::{downsample_random, fps, knn, lexicographic_start, IndexMatrix};

/// Errors from geometric operations.
#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("{op}: requested {requested} from a cloud of {available} points")]
    Size {
        op: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("expected an n×3 point tensor, got shape {shape:?}")]
    BadCloud { shape: Vec<usize> },
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("cannot normalize a degenerate cloud (all points coincide)")]
    Degenerate,
    #[error("viewpoint direction must be a nonzero finite vector")]
    BadDirection,
    #[error("distance threshold must be positive, got {tau}")]
    BadThreshold { tau: f64 },
}

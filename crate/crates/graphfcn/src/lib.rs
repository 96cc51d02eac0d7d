//! Graph-FCN at desk scale: a small FCN segmentation backbone whose feature
//! grid is extended into a Gaussian-weighted nearest-neighbor graph, with a
//! 2-layer graph-convolutional auxiliary head trained alongside the pixel
//! head under a dual cross-entropy loss. A spectral reference path (Jacobi
//! eigendecomposition, exact graph filtering) verifies the fast propagation
//! operator.

pub mod autodiff;
pub mod backbone;
pub mod data;
pub mod error;
pub mod gcn;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod params;
pub mod sparse;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use sparse::SparseMatrix;
pub use tensor::Tensor;

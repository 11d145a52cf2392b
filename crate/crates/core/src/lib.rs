//! Spatiotemporal multi-person pose estimation: 3-D convolutional feature
//! extraction with bilinear fusion, part-affinity-field decoding, Gaussian
//! process hyperparameter tuning, framed sensor ingest, and keypoint
//! average-precision evaluation.

pub mod bayes;
pub mod c3d;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod pose;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

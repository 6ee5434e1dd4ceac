//! Camera localization in sparse LiDAR point-cloud maps.
//!
//! The crate covers the full pipeline at desk scale: synthetic garage scene
//! generation, pinhole depth projection of point clouds, a classical
//! entropy-based registration baseline, a small reverse-mode autodiff engine
//! with the layers needed for a 7-layer convolutional backbone, the
//! pose-regression network with its state-value branch, dataset
//! augmentation, training, and iterative pose refinement.

pub mod cloud;
pub mod config;
pub mod dataset;
pub mod error;
pub mod filters;
pub mod gradcheck;
pub mod img;
pub mod localize;
pub mod model;
pub mod model_input;
pub mod nn;
pub mod pgm;
pub mod pipeline;
pub mod projector;
pub mod se3;
pub mod similarity;
pub mod train;

pub use error::{CoreError, Result};
pub use img::{DepthImage, Image, IntensityImage};
pub use model::{EnforceModel, Mode};
pub use se3::{DeltaPose, PerturbBounds, Pose};

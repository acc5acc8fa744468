//! Pose-to-pose translation of pixel-art character sprites with a
//! conditional GAN: a U-Net generator trained against a patch discriminator.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod losses;
pub mod model;
pub mod training;

pub use error::{Error, ErrorKind, Result};

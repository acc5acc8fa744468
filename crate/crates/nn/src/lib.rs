//! CPU building blocks for small convolutional GANs: tensors, layers with
//! explicit backward passes, Adam, and a tensor archive format.
//!
//! Everything runs single-sample (`C x H x W`) and is bit-deterministic for a
//! fixed sequence of calls.

pub mod archive;
pub mod error;
pub mod layers;
pub mod linalg;
pub mod optim;
pub mod param;
pub mod tensor;

pub use error::{NnError, Result};
pub use layers::{Activation, Backprop, Conv2d, ConvTranspose2d, Dropout, InstanceNorm2d};
pub use optim::{Adam, AdamConfig};
pub use param::{Param, Parameters};
pub use tensor::{Shape, Tensor};

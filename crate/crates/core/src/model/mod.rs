//! Network construction, execution, and weight persistence.

mod block;
mod discriminator;
mod generator;
mod receptive;
mod spec;

use std::path::Path;

use sprite_nn::archive::{read_archive, write_archive};
use sprite_nn::Parameters;

pub use block::{Block, Mode};
pub use discriminator::{shipped_stack, Discriminator, DiscriminatorConfig, DiscriminatorTape, SHIPPED_PATCH_SIZES};
pub use generator::{Generator, GeneratorConfig, GeneratorTape};
pub use receptive::{receptive_field, window_start, ReceptiveField};
pub use spec::{ActivationKind, BlockKind, BlockShapes, BlockSpec, Initializer, NetworkSpec, SkipConnection};

use crate::error::{Error, Result};

/// Writes every parameter of `net` to a tensor archive.
pub fn save_params(net: &impl Parameters, path: &Path) -> Result<()> {
    let params = net.params();
    write_archive(
        path,
        params.iter().map(|p| (p.name.as_str(), p.shape.as_slice(), p.value.as_slice())),
    )
    .map_err(Into::into)
}

/// Loads parameters saved by [`save_params`], requiring identical names and shapes.
pub fn load_params(net: &mut impl Parameters, path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let stored = read_archive(path)?;
    let mut params = net.params_mut();
    if stored.len() != params.len() {
        return Err(Error::Invalid(format!(
            "{}: archive holds {} tensors, network expects {}",
            path.display(),
            stored.len(),
            params.len()
        )));
    }
    for (p, t) in params.iter_mut().zip(stored) {
        if p.name != t.name || p.shape != t.shape {
            return Err(Error::Invalid(format!(
                "{}: tensor {} {:?} does not match parameter {} {:?}",
                path.display(),
                t.name,
                t.shape,
                p.name,
                p.shape
            )));
        }
        p.value = t.data;
    }
    Ok(())
}

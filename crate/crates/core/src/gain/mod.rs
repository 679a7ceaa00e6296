//! GAIN: a generator that fills missing cells and a discriminator that tries
//! to tell which cells were observed.

mod losses;
mod model;

pub use losses::{
    discriminator_loss_node, generator_loss_node, loss_discriminator,
    loss_discriminator_missing_only, loss_generator, loss_reconstruction, reconstruction_loss_node,
    M_HAT_MIN,
};
pub use model::{
    discriminator_forward, generator_forward, impute_gain, train_gain, EpochLosses, GainModel,
};

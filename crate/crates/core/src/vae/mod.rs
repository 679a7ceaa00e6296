//! Variational autoencoder trained on masked reconstruction, with plain,
//! iterative and input-backpropagation imputation.

mod impute;
mod model;

pub use impute::{
    impute_vae, impute_vae_backprop, impute_vae_iterative, IterativeConfig, IterativeImputation,
};
pub use model::{
    encode_latent, kl_gaussian, train_vae, VaeEpoch, VaeModel, LOGVAR_MAX, LOGVAR_MIN,
};

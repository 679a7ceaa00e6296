use crate::diffcore::ParamStore;
use crate::error::Result;
use crate::gain::{impute_gain, train_gain, GainModel};
use crate::hyper::{HyperParams, Method, VaeProcedure};
use crate::rng;
use crate::tabular::{AmputedDataset, DatasetSchema, EncodedMatrix};
use crate::vae::{
    impute_vae, impute_vae_backprop, impute_vae_iterative, train_vae, IterativeConfig, VaeModel,
};

/// A trained GAIN or VAE.
#[derive(Debug)]
pub enum TrainedModel {
    Gain(GainModel),
    Vae(VaeModel),
}

/// Imputed matrix plus the pass count of iterative procedures.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub matrix: EncodedMatrix,
    pub iterations_used: Option<usize>,
}

impl TrainedModel {
    pub fn train(
        train: &AmputedDataset,
        schema: &DatasetSchema,
        hyper: &HyperParams,
    ) -> Result<Self> {
        if hyper.method.is_gain() {
            train_gain(train, schema, hyper).map(TrainedModel::Gain)
        } else {
            train_vae(train, schema, hyper).map(TrainedModel::Vae)
        }
    }

    /// Untrained model with the architecture `hyper` describes.
    pub fn initial(schema: &DatasetSchema, hyper: &HyperParams) -> Result<Self> {
        if hyper.method.is_gain() {
            GainModel::new(schema, hyper).map(TrainedModel::Gain)
        } else {
            VaeModel::new(schema, hyper).map(TrainedModel::Vae)
        }
    }

    pub fn schema(&self) -> &DatasetSchema {
        match self {
            TrainedModel::Gain(m) => m.schema(),
            TrainedModel::Vae(m) => m.schema(),
        }
    }

    pub fn hyper(&self) -> &HyperParams {
        match self {
            TrainedModel::Gain(m) => m.hyper(),
            TrainedModel::Vae(m) => m.hyper(),
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            TrainedModel::Gain(m) => m.params(),
            TrainedModel::Vae(m) => m.params(),
        }
    }

    pub fn set_params(&mut self, params: &ParamStore) -> Result<()> {
        match self {
            TrainedModel::Gain(m) => m.set_params(params),
            TrainedModel::Vae(m) => m.set_params(params),
        }
    }

    /// Imputes with the procedure of `method`, which must belong to this
    /// model's family (a VAE serves `vae`, `vae+it` and `vae+bp`).
    pub fn impute(
        &mut self,
        data: &AmputedDataset,
        method: Method,
        rng: &mut rng::Rng,
    ) -> Result<Imputation> {
        let plain = |matrix| Imputation {
            matrix,
            iterations_used: None,
        };
        match (self, method.vae_procedure()) {
            (TrainedModel::Gain(m), None) => impute_gain(m, data, rng).map(plain),
            (TrainedModel::Vae(m), Some(procedure)) => {
                let cfg = IterativeConfig::from_hyper(m.hyper());
                let run = match procedure {
                    VaeProcedure::Plain => return impute_vae(m, data, rng).map(plain),
                    VaeProcedure::Iterative => impute_vae_iterative(m, data, &cfg, rng)?,
                    VaeProcedure::Backprop => impute_vae_backprop(m, data, &cfg, rng)?,
                };
                Ok(Imputation {
                    matrix: run.matrix,
                    iterations_used: Some(run.iterations_used),
                })
            }
            (model, _) => Err(crate::Error::Invalid(format!(
                "a {} model cannot impute with {method}",
                model.hyper().method
            ))),
        }
    }
}

mod common;

use genimpute::harness::TrainedModel;
use genimpute::hyper::{HyperParams, Method};
use genimpute::metrics::rmse_missing;
use genimpute::rng::{self, purpose};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Leaving the N(0, 1) noise in place is the floor every trained imputer must clear.
#[test]
fn trained_models_beat_noise_imputation() {
    for method in Method::ALL {
        let mut trained = Vec::new();
        let mut noise = Vec::new();
        for seed in 0..3 {
            let prep = common::prepared(600, 0.3, seed);
            let hyper = HyperParams {
                epochs: 30,
                i_max: 20,
                seed,
                ..HyperParams::for_method(method)
            };
            let mut model = TrainedModel::train(&prep.train, &prep.schema, &hyper).unwrap();
            let out = model
                .impute(&prep.test, method, &mut rng::stream(seed, purpose::IMPUTE))
                .unwrap();
            trained.push(rmse_missing(&prep.test_truth, &out.matrix, &prep.test.mask).unwrap());
            noise.push(rmse_missing(&prep.test_truth, &prep.test.data, &prep.test.mask).unwrap());
        }
        let (t, n) = (median(trained), median(noise));
        assert!(t < 0.7 * n, "{method}: trained {t} vs noise {n}");
    }
}

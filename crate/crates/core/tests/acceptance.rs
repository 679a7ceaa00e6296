//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout, so the lines show up without `--nocapture`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use genimpute::diffcore::{grad_check, Bindings, Graph, NodeId, Noise, Tensor};
use genimpute::gain::{
    discriminator_loss_node, generator_loss_node, loss_discriminator, loss_reconstruction,
    reconstruction_loss_node, GainModel,
};
use genimpute::harness::{
    prepare, run_family, run_plan, Dataset, ExperimentPlan, Grid, ScalingScope, TrainedModel,
};
use genimpute::hyper::{HiddenLayout, HyperParams, Method};
use genimpute::metrics::{aggregate_seeds, rmse_missing, RunResult};
use genimpute::netblocks::gumbel_softmax_node;
use genimpute::rng::{self, purpose};
use genimpute::tabular::synth::{mixed, MixedSpec};
use genimpute::tabular::{
    ampute, encode, fit_scaling, DatasetSchema, EncodedMatrix, MaskMatrix, VariableSpec,
};
use genimpute::vae::{kl_gaussian, VaeModel};
use genimpute::Error;

fn report(n: usize, pass: bool, detail: &str) {
    let line = format!(
        "criterion {n}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn mean_rmse(results: &[RunResult], method: Method, p: f64) -> (f64, f64) {
    let group: Vec<RunResult> = results
        .iter()
        .filter(|r| r.method == method && r.missing_p == p)
        .cloned()
        .collect();
    let agg = aggregate_seeds(&group).unwrap();
    assert_eq!(agg.n_seeds, 3, "{method} p={p}");
    (agg.mean_rmse, agg.std_rmse)
}

fn plan(
    data: &str,
    methods: Vec<Method>,
    missing_p: Vec<f64>,
    master_seed: u64,
) -> (ExperimentPlan, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = ExperimentPlan::new(data_path(data), dir.path().join("run"));
    plan.methods = methods;
    plan.missing_p = missing_p;
    plan.seeds = 3;
    plan.master_seed = master_seed;
    plan.jobs = 0;
    plan.save_checkpoints = false;
    (plan, dir)
}

fn run_ok(plan: &ExperimentPlan) -> Vec<RunResult> {
    let summary = run_plan(plan).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    summary.results
}

/// Every method on Breast Cancer at p = 0.2, 0.5 and 0.8 with default
/// hyperparameters, 3 seeds from master seed 0.
fn breast_cancer_sweep() -> &'static [RunResult] {
    static SWEEP: OnceLock<Vec<RunResult>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let (p, _dir) = plan(
            "breast_cancer.csv",
            Method::ALL.to_vec(),
            vec![0.2, 0.5, 0.8],
            0,
        );
        run_ok(&p)
    })
}

// ---------------------------------------------------------------------------
// 1. gradients

const INSTANCES: u64 = 100;

fn uniform(r: &mut rng::Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| r.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Uniform draws kept at least `gap` away from each point of `kinks`.
fn away_from(
    r: &mut rng::Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    kinks: &[f64],
    gap: f64,
) -> Tensor {
    let mut t = uniform(r, rows, cols, lo, hi);
    for v in t.data_mut() {
        while kinks.iter().any(|k| (*v - k).abs() < gap) {
            *v = r.random_range(lo..hi);
        }
    }
    t
}

/// `sum(f(params) ⊙ w)` with a random weight input `w`, so every output entry
/// gets a distinct upstream gradient.
fn weighted(
    g: &mut Graph,
    y: NodeId,
    rows: usize,
    cols: usize,
    r: &mut rng::Rng,
    b: &mut Bindings,
) -> NodeId {
    let w = g.input("w");
    b.insert("w".to_string(), uniform(r, rows, cols, -1.0, 1.0));
    let prod = g.mul(y, w);
    g.sum(prod)
}

type Case = fn(&mut rng::Rng) -> (Graph, NodeId, Bindings);

fn unary(
    r: &mut rng::Rng,
    x: Tensor,
    f: impl Fn(&mut Graph, NodeId) -> NodeId,
) -> (Graph, NodeId, Bindings) {
    let (rows, cols) = (x.rows(), x.cols());
    let mut g = Graph::new();
    let mut b = Bindings::new();
    let p = g.param("x", x).unwrap();
    let y = f(&mut g, p);
    let loss = weighted(&mut g, y, rows, cols, r, &mut b);
    (g, loss, b)
}

fn op_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("matmul", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let a = g.param("a", uniform(r, 4, 3, -1.0, 1.0)).unwrap();
            let c = g.param("c", uniform(r, 3, 5, -1.0, 1.0)).unwrap();
            let y = g.matmul(a, c);
            let loss = weighted(&mut g, y, 4, 5, r, &mut b);
            (g, loss, b)
        }),
        ("add_row", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 4, 3, -1.0, 1.0)).unwrap();
            let bias = g.param("bias", uniform(r, 1, 3, -1.0, 1.0)).unwrap();
            let y = g.add_row(x, bias);
            let loss = weighted(&mut g, y, 4, 3, r, &mut b);
            (g, loss, b)
        }),
        ("mul_row", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 4, 3, -1.0, 1.0)).unwrap();
            let row = g.param("row", uniform(r, 1, 3, -1.0, 1.0)).unwrap();
            let y = g.mul_row(x, row);
            let loss = weighted(&mut g, y, 4, 3, r, &mut b);
            (g, loss, b)
        }),
        ("add", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let z = g.param("z", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let y = g.add(x, z);
            let loss = weighted(&mut g, y, 3, 4, r, &mut b);
            (g, loss, b)
        }),
        ("sub", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let z = g.param("z", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let y = g.sub(x, z);
            let loss = weighted(&mut g, y, 3, 4, r, &mut b);
            (g, loss, b)
        }),
        ("mul", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let z = g.param("z", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let y = g.mul(x, z);
            let loss = weighted(&mut g, y, 3, 4, r, &mut b);
            (g, loss, b)
        }),
        ("affine", |r| {
            let x = uniform(r, 3, 4, -1.0, 1.0);
            let (s, t) = (r.random_range(-2.0..2.0), r.random_range(-1.0..1.0));
            unary(r, x, move |g, p| g.affine(p, s, t))
        }),
        ("relu", |r| {
            let x = away_from(r, 3, 4, -1.0, 1.0, &[0.0], 1e-3);
            unary(r, x, |g, p| g.relu(p))
        }),
        ("sigmoid", |r| {
            let x = uniform(r, 3, 4, -4.0, 4.0);
            unary(r, x, |g, p| g.sigmoid(p))
        }),
        ("exp", |r| {
            let x = uniform(r, 3, 4, -2.0, 2.0);
            unary(r, x, |g, p| g.exp(p))
        }),
        ("log", |r| {
            let x = uniform(r, 3, 4, 0.05, 0.95);
            unary(r, x, |g, p| g.log(p))
        }),
        ("square", |r| {
            let x = uniform(r, 3, 4, -2.0, 2.0);
            unary(r, x, |g, p| g.square(p))
        }),
        ("clamp", |r| {
            let x = away_from(r, 3, 4, -2.0, 2.0, &[-1.0, 1.0], 1e-3);
            unary(r, x, |g, p| g.clamp(p, -1.0, 1.0))
        }),
        ("softmax_blocks", |r| {
            let x = uniform(r, 3, 6, -2.0, 2.0);
            unary(r, x, |g, p| {
                g.softmax_blocks(p, vec![(0, 1), (1, 4), (4, 6)])
            })
        }),
        ("sum", |r| {
            let mut g = Graph::new();
            let x = g.param("x", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let sq = g.square(x);
            let loss = g.sum(sq);
            (g, loss, Bindings::new())
        }),
        ("mean", |r| {
            let mut g = Graph::new();
            let x = g.param("x", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let sq = g.square(x);
            let loss = g.mean(sq);
            (g, loss, Bindings::new())
        }),
        ("batch_mean", |r| {
            let mut g = Graph::new();
            let x = g.param("x", uniform(r, 3, 4, -1.0, 1.0)).unwrap();
            let sq = g.square(x);
            let loss = g.batch_mean(sq);
            (g, loss, Bindings::new())
        }),
        ("concat", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 3, 2, -1.0, 1.0)).unwrap();
            let z = g.param("z", uniform(r, 3, 3, -1.0, 1.0)).unwrap();
            let y = g.concat(vec![x, z, x]);
            let loss = weighted(&mut g, y, 3, 7, r, &mut b);
            (g, loss, b)
        }),
        ("slice", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 3, 6, -1.0, 1.0)).unwrap();
            let y = g.slice(x, 1, 4);
            let loss = weighted(&mut g, y, 3, 3, r, &mut b);
            (g, loss, b)
        }),
        ("gaussian_sample", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let mu = g.param("mu", uniform(r, 4, 3, -1.0, 1.0)).unwrap();
            let lv = g.param("logvar", uniform(r, 4, 3, -1.0, 1.0)).unwrap();
            let eps = g.sample("eps", Noise::Gaussian, mu, 3);
            let half = g.affine(lv, 0.5, 0.0);
            let std = g.exp(half);
            let spread = g.mul(std, eps);
            let z = g.add(mu, spread);
            let loss = weighted(&mut g, z, 4, 3, r, &mut b);
            (g, loss, b)
        }),
    ]
}

fn mask_tensor(r: &mut rng::Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| if r.random_bool(0.6) { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap()
}

fn mixed_schema() -> DatasetSchema {
    DatasetSchema::new(vec![
        VariableSpec::numerical("a"),
        VariableSpec::categorical("b", ["x", "y", "z"]),
        VariableSpec::numerical("c"),
        VariableSpec::categorical("d", ["u", "v"]),
    ])
    .unwrap()
}

fn loss_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("discriminator_loss", |r| {
            let mut g = Graph::new();
            let logits = g.param("logits", uniform(r, 5, 4, -3.0, 3.0)).unwrap();
            let m_hat = g.sigmoid(logits);
            let m = g.input("m");
            let loss = discriminator_loss_node(&mut g, m, m_hat, false);
            let b: Bindings = [("m".to_string(), mask_tensor(r, 5, 4))].into();
            (g, loss, b)
        }),
        ("discriminator_loss_missing_only", |r| {
            let mut g = Graph::new();
            let logits = g.param("logits", uniform(r, 5, 4, -3.0, 3.0)).unwrap();
            let m_hat = g.sigmoid(logits);
            let m = g.input("m");
            let loss = discriminator_loss_node(&mut g, m, m_hat, true);
            let b: Bindings = [("m".to_string(), mask_tensor(r, 5, 4))].into();
            (g, loss, b)
        }),
        ("generator_loss", |r| {
            let mut g = Graph::new();
            let logits = g.param("logits", uniform(r, 5, 4, -3.0, 3.0)).unwrap();
            let m_hat = g.sigmoid(logits);
            let m = g.input("m");
            let loss = generator_loss_node(&mut g, m, m_hat);
            let b: Bindings = [("m".to_string(), mask_tensor(r, 5, 4))].into();
            (g, loss, b)
        }),
        ("reconstruction_loss", |r| {
            let schema = mixed_schema();
            let s = schema.total_features();
            let mut g = Graph::new();
            let logits = g.param("logits", uniform(r, 5, s, -3.0, 3.0)).unwrap();
            let x_hat = g.sigmoid(logits);
            let x = g.input("x");
            let m = g.input("m");
            let loss = reconstruction_loss_node(&mut g, &schema, x, x_hat, m);
            let b: Bindings = [
                ("x".to_string(), uniform(r, 5, s, 0.0, 1.0)),
                ("m".to_string(), mask_tensor(r, 5, s)),
            ]
            .into();
            (g, loss, b)
        }),
        ("gumbel_softmax", |r| {
            let mut g = Graph::new();
            let mut b = Bindings::new();
            let x = g.param("x", uniform(r, 4, 3, -1.0, 1.0)).unwrap();
            let w = g.param("w", uniform(r, 3, 5, -1.0, 1.0)).unwrap();
            let logits = g.matmul(x, w);
            let tau = r.random_range(0.5..2.0);
            let y = gumbel_softmax_node(&mut g, logits, 5, tau, "gumbel").unwrap();
            let loss = weighted(&mut g, y, 4, 5, r, &mut b);
            (g, loss, b)
        }),
    ]
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut worst_plain: f64 = 0.0;
    let mut worst_loss: f64 = 0.0;
    let check = |cases: Vec<(&'static str, Case)>,
                 tol: f64,
                 worst: &mut f64,
                 failures: &mut Vec<String>| {
        for (name, build) in cases {
            let mut case_worst: f64 = 0.0;
            for i in 0..INSTANCES {
                let mut r = rng::stream(i, 0xC1);
                let (mut g, loss, b) = build(&mut r);
                let err = grad_check(&mut g, loss, &b, &rng::stream(i, 0xC2), 1e-6).unwrap();
                case_worst = case_worst.max(err);
            }
            *worst = worst.max(case_worst);
            if case_worst > tol {
                failures.push(format!("{name}: {case_worst:.2e}"));
            }
        }
    };
    check(op_cases(), 1e-4, &mut worst_plain, &mut failures);
    check(loss_cases(), 1e-3, &mut worst_loss, &mut failures);

    // full training objectives, every sample leaf frozen
    let schema = fit_scaling(&mixed_schema(), &mixed_rows()).unwrap();
    let data = encode(&schema, &mixed_rows()).unwrap();
    let mut model_worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let amputed = ampute(&data, &schema, 0.4, i).unwrap();
        let method = [Method::Vae, Method::VaeVs, Method::Gain, Method::GainVs][i as usize % 4];
        let h = HyperParams {
            seed: i,
            hidden: Some(HiddenLayout(vec![0.5])),
            tau: 0.5 + (i % 3) as f64,
            ..HyperParams::for_method(method)
        };
        let noise = rng::stream(i, 0xC3);
        let err = if method.is_gain() {
            GainModel::new(&schema, &h)
                .unwrap()
                .grad_check_losses(&amputed, &noise, 1e-6)
                .unwrap()
        } else {
            VaeModel::new(&schema, &h)
                .unwrap()
                .grad_check_loss(&amputed, &noise, 1e-6)
                .unwrap()
        };
        model_worst = model_worst.max(err);
    }
    if model_worst > 1e-3 {
        failures.push(format!("model objectives: {model_worst:.2e}"));
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 60.0 {
        failures.push(format!("runtime {secs:.1}s"));
    }
    report(
        1,
        failures.is_empty(),
        &format!(
            "worst relative error: ops {worst_plain:.1e} (tol 1e-4), losses {worst_loss:.1e} and model objectives {model_worst:.1e} (tol 1e-3), {INSTANCES} instances each, {secs:.1}s {failures:?}"
        ),
    );
}

fn mixed_rows() -> Vec<Vec<genimpute::tabular::RawValue>> {
    use genimpute::tabular::RawValue::{Category, Number};
    let cats = ["x", "y", "z"];
    (0..6)
        .map(|i| {
            vec![
                Number(i as f64 * 0.7 - 1.0),
                Category(cats[i % 3].into()),
                Number((i * i) as f64 * 0.3),
                Category(if i % 2 == 0 { "u" } else { "v" }.into()),
            ]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 2. loss goldens

#[test]
fn criterion_2_loss_goldens() {
    let ln2 = std::f64::consts::LN_2;
    let ld = loss_discriminator(&Tensor::row(&[1.0]), &Tensor::row(&[0.5])).unwrap();

    let cat = DatasetSchema::new(vec![VariableSpec::categorical("c", ["a", "b"])]).unwrap();
    let rec_cat = loss_reconstruction(
        &Tensor::row(&[1.0, 0.0]),
        &Tensor::row(&[0.5, 0.5]),
        &Tensor::row(&[1.0, 1.0]),
        &cat,
    )
    .unwrap();
    let num = DatasetSchema::new(vec![VariableSpec::numerical("n")]).unwrap();
    let rec_num = loss_reconstruction(
        &Tensor::row(&[0.4]),
        &Tensor::row(&[0.6]),
        &Tensor::row(&[1.0]),
        &num,
    )
    .unwrap();
    let kl = kl_gaussian(&[1.0], &[0.0]).unwrap();

    // same values through the graph
    let mut g = Graph::new();
    let x = g.input("x");
    let xh = g.input("xh");
    let m = g.input("m");
    let rec = reconstruction_loss_node(&mut g, &cat, x, xh, m);
    let b: Bindings = [
        ("x".to_string(), Tensor::row(&[1.0, 0.0])),
        ("xh".to_string(), Tensor::row(&[0.5, 0.5])),
        ("m".to_string(), Tensor::row(&[1.0, 1.0])),
    ]
    .into();
    let rec_cat_graph = g.forward(rec, &b, &mut rng::stream(0, 0)).unwrap().item();

    let pass = (ld - ln2).abs() <= 1e-9
        && (rec_cat - ln2).abs() <= 1e-9
        && (rec_cat_graph - ln2).abs() <= 1e-9
        && (rec_num - 0.04).abs() <= 1e-12
        && (kl - 0.5).abs() <= 1e-9;
    report(
        2,
        pass,
        &format!("L_D {ld:.12}, categorical {rec_cat:.12} (graph {rec_cat_graph:.12}), numerical {rec_num:.15}, KL {kl:.12}"),
    );
}

// ---------------------------------------------------------------------------
// 3. protocol invariants

#[test]
fn criterion_3_protocol_invariants() {
    let mut problems = Vec::new();

    // amputation rate on 10000 x 10 numerical data
    let schema = DatasetSchema::new(
        (0..10)
            .map(|j| VariableSpec::numerical(format!("v{j}")))
            .collect(),
    )
    .unwrap();
    let mut r = rng::stream(3, 0);
    let data = EncodedMatrix::new(
        10_000,
        10,
        (0..100_000).map(|_| r.random::<f64>()).collect(),
    )
    .unwrap();
    let mut rates = Vec::new();
    for p in [0.2, 0.5, 0.8] {
        let a = ampute(&data, &schema, p, 11).unwrap();
        let n = 100_000.0;
        let rate = a.mask.missing_count() as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        if (rate - p).abs() > 3.0 * sigma {
            problems.push(format!("rate {rate} for p={p}"));
        }
        rates.push(rate);
    }

    // block constancy and passthrough on mixed data for every imputer
    let (mschema, rows) = mixed(&MixedSpec {
        rows: 300,
        numerical: 3,
        categorical: 3,
        seed: 1,
        ..MixedSpec::default()
    })
    .unwrap();
    let dataset = Dataset {
        name: "mixed".into(),
        schema: mschema,
        rows,
    };
    for p in [0.2, 0.5, 0.8] {
        let prep = prepare(&dataset, p, 5, ScalingScope::All).unwrap();
        if !prep.train.mask.is_block_constant(&prep.schema)
            || !prep.test.mask.is_block_constant(&prep.schema)
        {
            problems.push(format!("mask not block constant at p={p}"));
        }
    }
    let prep = prepare(&dataset, 0.5, 5, ScalingScope::All).unwrap();
    for family in [Method::Gain, Method::GainVs, Method::Vae, Method::VaeVs] {
        let h = HyperParams {
            epochs: 5,
            i_max: 10,
            ..HyperParams::for_method(family)
        };
        let mut model = TrainedModel::train(&prep.train, &prep.schema, &h).unwrap();
        for method in Method::ALL
            .into_iter()
            .filter(|m| genimpute::harness::family_method(*m) == family)
        {
            let out = model
                .impute(&prep.test, method, &mut rng::stream(0, purpose::IMPUTE))
                .unwrap();
            let kept = out
                .matrix
                .values()
                .iter()
                .zip(prep.test.data.values())
                .zip(prep.test.mask.bits())
                .all(|((a, b), &m)| m == 0 || a.to_bits() == b.to_bits());
            if !kept {
                problems.push(format!("{method} changed observed cells"));
            }
        }
    }

    // no missing positions
    let full = MaskMatrix::all_observed(data.rows(), data.cols());
    let undefined = matches!(
        rmse_missing(&data, &data, &full),
        Err(Error::UndefinedMetric(_))
    );
    if !undefined {
        problems.push("zero-missing RMSE did not raise UndefinedMetric".into());
    }

    report(
        3,
        problems.is_empty(),
        &format!("missing rates {rates:?}, passthrough checked for all 8 methods {problems:?}"),
    );
}

// ---------------------------------------------------------------------------
// 4. monotonicity

#[test]
fn criterion_4_rmse_grows_with_missingness() {
    let started = Instant::now();
    let results = breast_cancer_sweep();
    let secs = started.elapsed().as_secs_f64();
    let mut lines = Vec::new();
    let mut pass = secs < 30.0 * 60.0;
    for method in Method::ALL {
        let means: Vec<f64> = [0.2, 0.5, 0.8]
            .iter()
            .map(|&p| mean_rmse(results, method, p).0)
            .collect();
        let ok = means.windows(2).all(|w| w[0] <= w[1]);
        pass &= ok;
        lines.push(format!(
            "{} {:.4}/{:.4}/{:.4}{}",
            method,
            means[0],
            means[1],
            means[2],
            if ok { "" } else { " (not monotone)" }
        ));
    }
    report(
        4,
        pass,
        &format!(
            "breast cancer p=0.2/0.5/0.8: {}; {secs:.0}s",
            lines.join(", ")
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. reproduction bands

fn selected(data: &str, method: Method, grid: Grid) -> (f64, f64) {
    let (mut p, _dir) = plan(data, vec![method], vec![0.2], 0);
    p.grid = grid;
    let results = run_ok(&p);
    mean_rmse(&results, method, 0.2)
}

#[test]
fn criterion_5_reproduction_bands() {
    let full = Grid::full();
    let bc_gain = selected("breast_cancer.csv", Method::Gain, full.clone());
    let bc_vae = selected("breast_cancer.csv", Method::Vae, full.clone());
    // layouts and latent sizes only
    let spam_grid = Grid {
        batch_size: vec![64],
        lr: vec![1e-3],
        ..full
    };
    let spam_vae = selected("spambase.csv", Method::Vae, spam_grid);
    let checks = [
        ("breast cancer GAIN", bc_gain, 0.03, 0.10),
        ("breast cancer VAE", bc_vae, 0.04, 0.11),
        ("spambase VAE", spam_vae, 0.015, 0.05),
    ];
    let pass = checks.iter().all(|(_, (m, _), lo, hi)| m >= lo && m <= hi);
    let detail: Vec<String> = checks
        .iter()
        .map(|(name, (m, s), lo, hi)| format!("{name} {m:.3} ± {s:.3} in [{lo}, {hi}]"))
        .collect();
    report(
        5,
        pass,
        &format!("p=0.2 masked-cell RMSE: {}", detail.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// 6. stability across seeds

const VAE_FAMILY: [Method; 6] = [
    Method::Vae,
    Method::VaeIt,
    Method::VaeBp,
    Method::VaeVs,
    Method::VaeVsIt,
    Method::VaeVsBp,
];

#[test]
fn criterion_6_vae_family_is_more_stable_than_gain() {
    let mut wins = 0;
    let mut lines = Vec::new();
    for trial in 0..3u64 {
        let owned;
        let results: &[RunResult] = if trial == 0 {
            breast_cancer_sweep()
        } else {
            let mut methods = vec![Method::Gain];
            methods.extend(VAE_FAMILY);
            let (p, _dir) = plan("breast_cancer.csv", methods, vec![0.2], trial);
            owned = run_ok(&p);
            &owned
        };
        let gain_std = mean_rmse(results, Method::Gain, 0.2).1;
        let vae_std = VAE_FAMILY
            .iter()
            .map(|&m| mean_rmse(results, m, 0.2).1)
            .fold(0.0, f64::max);
        if vae_std <= gain_std {
            wins += 1;
        }
        lines.push(format!(
            "trial {trial}: VAE family max std {vae_std:.4} vs GAIN {gain_std:.4}"
        ));
    }
    report(
        6,
        wins >= 2,
        &format!("{wins}/3 trials; {}", lines.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// 7. variable splitting on mixed data

#[test]
fn criterion_7_variable_splitting_helps_on_mixed_data() {
    let (schema, rows) = mixed(&MixedSpec::default()).unwrap();
    let dataset = Dataset {
        name: "synthetic".into(),
        schema,
        rows,
    };
    let mut scores: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for k in 0..3 {
        let seed = rng::run_seed(0, k);
        let prep = prepare(&dataset, 0.5, seed, ScalingScope::All).unwrap();
        for method in [Method::Vae, Method::VaeVs] {
            let h = HyperParams {
                seed,
                ..HyperParams::for_method(method)
            };
            let out = run_family("synthetic", &prep, &[method], &[h], 0.5, seed, false).unwrap();
            scores.entry(method).or_default().push(out.results[0].rmse);
        }
    }
    let mean = |m: Method| scores[&m].iter().sum::<f64>() / 3.0;
    let (vs, plain) = (mean(Method::VaeVs), mean(Method::Vae));
    report(
        7,
        vs <= plain,
        &format!("5000x(4 numerical + 4 categorical), p=0.5: VAE+vs {vs:.4} vs VAE {plain:.4}"),
    );
}

// ---------------------------------------------------------------------------
// 8. iterative variants

#[test]
fn criterion_8_iterative_variants_match_plain_vae() {
    let results = breast_cancer_sweep();
    let mut pass = true;
    let mut lines = Vec::new();
    for p in [0.2, 0.5] {
        for (plain, variants) in [
            (Method::Vae, [Method::VaeIt, Method::VaeBp]),
            (Method::VaeVs, [Method::VaeVsIt, Method::VaeVsBp]),
        ] {
            let base = mean_rmse(results, plain, p).0;
            for v in variants {
                let d = mean_rmse(results, v, p).0 - base;
                pass &= d.abs() <= 0.02;
                lines.push(format!("{v} {d:+.4} at p={p}"));
            }
        }
    }
    report(
        8,
        pass,
        &format!("difference to plain imputation: {}", lines.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// 9. determinism

#[test]
fn criterion_9_identical_plans_write_identical_stores() {
    let mut stores = Vec::new();
    for jobs in [1, 0] {
        let (mut p, _dir) = plan(
            "breast_cancer.csv",
            Method::ALL.to_vec(),
            vec![0.2, 0.8],
            42,
        );
        p.seeds = 2;
        p.jobs = jobs;
        p.save_checkpoints = true;
        p.grid = Grid {
            lr: vec![1e-3, 1e-5],
            ..Grid::default()
        };
        p.base.epochs = 50;
        run_ok(&p);
        stores.push(std::fs::read(p.out_dir.join("results.jsonl")).unwrap());
    }
    let same = stores[0] == stores[1] && !stores[0].is_empty();
    report(
        9,
        same,
        &format!(
            "two executions, {} bytes each, byte-identical: {same}",
            stores[0].len()
        ),
    );
}

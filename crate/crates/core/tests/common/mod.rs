#![allow(dead_code)]

use hgsum::numeric::{grad_check, Matrix, NumericError, ParamStore, Tape, Var};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Values in ±[0.1, 1] so piecewise primitives stay away from their kinks.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

type Build = for<'t> fn(&'t Tape, &ParamStore) -> Result<Var<'t>, NumericError>;

fn p<'t>(tape: &'t Tape, store: &ParamStore, name: &str) -> Var<'t> {
    tape.param(store, name).unwrap()
}

/// One case per differentiable primitive: the output it produces from the
/// parameters `x`, `y`, `s`, `row` and `m`.
pub fn primitive_cases() -> Vec<(&'static str, Build)> {
    vec![
        ("matmul", |t, s| p(t, s, "x").matmul(&p(t, s, "m"))),
        ("add", |t, s| p(t, s, "x").add(&p(t, s, "y"))),
        ("add_row", |t, s| p(t, s, "x").add_row(&p(t, s, "row"))),
        ("sub", |t, s| p(t, s, "x").sub(&p(t, s, "y"))),
        ("mul", |t, s| p(t, s, "x").mul(&p(t, s, "y"))),
        ("scale", |t, s| Ok(p(t, s, "x").scale(-1.7))),
        ("scale_rows", |t, s| p(t, s, "x").scale_rows(&p(t, s, "s"))),
        ("transpose", |t, s| Ok(p(t, s, "x").transpose())),
        ("slice_cols", |t, s| p(t, s, "x").slice_cols(1, 3)),
        ("gather_rows", |t, s| p(t, s, "x").gather_rows(&[2, 0, 2, 1])),
        ("embedding", |t, s| p(t, s, "x").embedding(&[1, 1, 0])),
        ("scatter_add_rows", |t, s| p(t, s, "x").scatter_add_rows(&[0, 3, 0], 4)),
        ("concat_rows", |t, s| Var::concat(&[p(t, s, "x"), p(t, s, "y")], 0)),
        ("concat_cols", |t, s| Var::concat(&[p(t, s, "x"), p(t, s, "s")], 1)),
        ("softmax_rows", |t, s| Ok(p(t, s, "x").softmax_rows())),
        ("segment_softmax", |t, s| p(t, s, "s").segment_softmax(&[0, 1, 0])),
        ("leaky_relu", |t, s| Ok(p(t, s, "x").leaky_relu(0.2))),
        ("elu", |t, s| Ok(p(t, s, "x").elu())),
        ("gelu", |t, s| Ok(p(t, s, "x").gelu())),
        ("mean_rows", |t, s| p(t, s, "x").mean(0)),
        ("mean_cols", |t, s| p(t, s, "x").mean(1)),
        ("sum_all", |t, s| Ok(p(t, s, "x").sum_all())),
        ("cosine", |t, s| p(t, s, "row").cosine(&p(t, s, "x").slice_cols(0, 4)?.gather_rows(&[1])?)),
        ("masked_fill", |t, s| {
            let mask = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) % 3 == 0);
            p(t, s, "x").masked_fill(&mask, -2.0)
        }),
        ("layer_norm", |t, s| p(t, s, "x").layer_norm(&p(t, s, "row"), &p(t, s, "row").scale(0.5), 1e-5)),
        ("dropout", |t, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            Ok(p(t, s, "x").dropout(0.4, &mut rng))
        }),
        ("cross_entropy", |t, s| p(t, s, "x").cross_entropy_smoothed(&[Some(1), None, Some(3)], 0.1)),
    ]
}

pub fn primitive_params() -> ParamStore {
    let mut store = ParamStore::new();
    store.insert("x", random_matrix(3, 4, 1), true).unwrap();
    store.insert("y", random_matrix(3, 4, 2), true).unwrap();
    store.insert("m", random_matrix(4, 2, 3), true).unwrap();
    store.insert("s", random_matrix(3, 1, 4), true).unwrap();
    store.insert("row", random_matrix(1, 4, 5), true).unwrap();
    store
}

/// Largest relative error between analytic and central-difference gradients
/// of `sum(out ⊙ R)` for a fixed random `R`, over every parameter.
pub fn check_primitive(build: Build) -> f64 {
    let params = primitive_params();
    let loss = loss_fn(move |tape, store| {
        let out = build(tape, store)?;
        let (r, c) = out.shape();
        let weights = tape.constant(random_matrix(r, c, 99));
        Ok(out.mul(&weights)?.sum_all())
    });
    let names = ["x", "y", "m", "s", "row"];
    grad_check(loss, &params, &names, 1e-5, 64, 0).unwrap().max_rel_error
}

/// Pins a closure to the higher-ranked signature the gradient checker wants.
pub fn loss_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> hgsum::Result<Var<'t>>,
{
    f
}

use hgsum::config::RunConfig;
use hgsum::corpus::{load_clusters, DocumentCluster};

pub fn toy_clusters() -> Vec<DocumentCluster> {
    load_clusters(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/toy.jsonl"), None).unwrap()
}

/// Tiny configuration used for the overfitting runs.
pub fn toy_config() -> RunConfig {
    RunConfig {
        embedding_dim: 16,
        min_freq: 1,
        max_input_len: 256,
        d_model: 32,
        enc_layers: 1,
        dec_layers: 1,
        heads: 2,
        ffn_dim: 64,
        window: 4,
        max_out_len: 16,
        dropout: 0.0,
        mgat_layers: 1,
        mgat_heads: 2,
        mgat_d_head: 8,
        label_smoothing: 0.0,
        lr: 3e-3,
        epochs: 250,
        seed: 7,
        beam_width: 1,
        ..RunConfig::default()
    }
}

use hgsum::model::{ModelConfig, Prepared, Resources};
use hgsum::training::TrainConfig;

/// Two documents of two short sentences each, with a tiny model.
pub struct Micro {
    pub res: Resources,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub items: Vec<Prepared>,
    pub params: ParamStore,
}

pub fn micro() -> Micro {
    let cluster = DocumentCluster::from_texts(
        "micro",
        &["Floods hit the valley. Roads were closed.", "Rescue crews arrived. Families left home."],
        Some("Floods closed valley roads."),
    )
    .unwrap();
    let rc = RunConfig {
        embedding_dim: 6,
        min_freq: 1,
        max_input_len: 64,
        d_model: 8,
        enc_layers: 1,
        dec_layers: 1,
        heads: 2,
        ffn_dim: 12,
        window: 2,
        max_out_len: 8,
        dropout: 0.0,
        mgat_layers: 2,
        mgat_heads: 2,
        mgat_d_head: 3,
        seed: 5,
        ..RunConfig::default()
    };
    let clusters = vec![cluster];
    let res = rc.resources(rc.vocab_for(&clusters)).unwrap();
    let model = rc.model_config(res.vocab.len()).unwrap();
    let train = rc.train_config().unwrap();
    let items = hgsum::study::prepare_all(&clusters, &res, &model).unwrap();
    let params = hgsum::numeric::init_params(&model.plan(), 5).unwrap();
    Micro { res, model, train, items, params }
}

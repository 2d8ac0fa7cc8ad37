use archaudit::learner::{
    evaluate, load_model, model_to_bytes, save_model, train, LabeledDataset, LossMode, Optimizer, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two Gaussian-ish blobs on either side of the hyperplane sum(x) = 0.
fn separable(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n).map(|i| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..8).map(|_| sign * 1.0 + rng.gen_range(-0.4..0.4)).collect();
        (x, if sign > 0.0 { "pos" } else { "neg" }.to_string())
    });
    LabeledDataset::single(rows).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        hidden: vec![32, 16, 8],
        batch_train: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_set_is_learned() {
    let ds = separable(200, 1);
    let (model, report) = train(&ds, &small_config()).unwrap();
    assert_eq!(report.epoch_losses.len(), 50);
    assert!(evaluate(&model, &ds).unwrap().scores.accuracy >= 0.99);
}

#[test]
fn joint_supcon_also_learns() {
    let ds = separable(120, 2);
    let cfg = TrainConfig {
        loss_mode: LossMode::JointSupcon,
        ..small_config()
    };
    let (model, _) = train(&ds, &cfg).unwrap();
    assert_eq!(model.embed_dim(), Some(8));
    assert!(evaluate(&model, &ds).unwrap().scores.accuracy >= 0.99);
}

#[test]
fn same_seed_gives_identical_weights() {
    let ds = separable(64, 3);
    let (a, ra) = train(&ds, &small_config()).unwrap();
    let (b, rb) = train(&ds, &small_config()).unwrap();
    assert_eq!(model_to_bytes(&a), model_to_bytes(&b));
    assert_eq!(ra, rb);
    let other = TrainConfig {
        seed: 4,
        ..small_config()
    };
    assert_ne!(model_to_bytes(&train(&ds, &other).unwrap().0), model_to_bytes(&a));
}

#[test]
fn sgd_runs_and_lowers_the_loss() {
    let ds = separable(64, 5);
    let cfg = TrainConfig {
        optimizer: Optimizer::Sgd,
        lr: 0.05,
        ..small_config()
    };
    let (_, report) = train(&ds, &cfg).unwrap();
    assert!(report.epoch_losses.last().unwrap() < report.epoch_losses.first().unwrap());
}

#[test]
fn saved_model_predicts_identically() {
    let ds = separable(40, 6);
    let (model, _) = train(&ds, &small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mlp");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    for (x, _) in ds.rows() {
        assert_eq!(back.predict(x).unwrap(), model.predict(x).unwrap());
    }
}

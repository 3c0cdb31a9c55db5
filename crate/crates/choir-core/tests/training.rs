//! Siamese training: pair-loss oracles and gauge invariance, checkpoint
//! selection, history output, determinism, and failure reporting.

use choir_core::diagnostics::tiny_config;
use choir_core::pointcloud::synthetic::generate_synthetic_corpus;
use choir_core::pointcloud::synthetic::CorpusSpec;
use choir_core::rng;
use choir_core::so3::{angle_between, mat, sample_uniform};
use choir_core::training::{
    pair_loss_on_tape, pair_loss_value, sample_pair, select_checkpoint, train,
    write_history_csv, HistoryRow,
};
use choir_core::{CharacteristicOrientationPredictor, Dataset, Error, PairMode, Rotation};

type Predictor64 = CharacteristicOrientationPredictor<f64>;

fn to_mat3(v: &[f64]) -> mat::Mat3<f64> {
    [
        [v[0], v[1], v[2]],
        [v[3], v[4], v[5]],
        [v[6], v[7], v[8]],
    ]
}

fn two_class_corpus(seed: u64) -> Dataset<f64> {
    let spec = CorpusSpec {
        classes: 2,
        instances_per_class: 8,
        points: 64,
        seed,
        verify_symmetry: false,
    };
    Dataset::new(generate_synthetic_corpus::<f64>(&spec).unwrap())
}

fn tiny_train_config() -> choir_core::TrainConfig {
    choir_core::TrainConfig {
        epochs: 2,
        steps_per_epoch: 1,
        batch_pairs: 2,
        val_every: 1,
        val_fraction: 0.25,
        val_rotations: 2,
        val_stability_instances: 1,
        val_consistency_instances: 2,
        train_points: 48,
        patch_removal: false,
        seed: 3,
        ..choir_core::TrainConfig::default()
    }
}

#[test]
fn pair_loss_vanishes_when_frames_equal_the_applied_rotations() {
    let mut rng = rng::stream("loss-zero", &[1]);
    for _ in 0..20 {
        let r1: Rotation<f64> = sample_uniform(&mut rng);
        let r2: Rotation<f64> = sample_uniform(&mut rng);
        assert_eq!(pair_loss_value(&r1, &r2, &r1, &r2), 0.0);
    }
}

#[test]
fn pair_loss_matches_the_twist_oracle() {
    // Inserting a twist q into one frame gives || q - I ||_F^2
    // = 4 (1 - cos theta), independent of the surrounding rotations.
    let mut rng = rng::stream("loss-twist", &[2]);
    for &deg in &[60.0f64, 90.0, 180.0] {
        let theta = deg.to_radians();
        let expected = 4.0 * (1.0 - theta.cos());
        let q = Rotation::about_z(theta);
        let r1: Rotation<f64> = sample_uniform(&mut rng);
        let r2: Rotation<f64> = sample_uniform(&mut rng);
        let f2 = q.compose(&r2);
        let loss = pair_loss_value(&r1, &f2, &r1, &r2);
        assert!(
            (loss - expected).abs() < 1e-9,
            "theta {deg}: loss {loss} vs {expected}"
        );
    }
}

#[test]
fn pair_loss_is_invariant_under_right_gauge() {
    let mut rng = rng::stream("loss-gauge", &[3]);
    for _ in 0..50 {
        let f1: Rotation<f64> = sample_uniform(&mut rng);
        let f2 = sample_uniform(&mut rng);
        let r1 = sample_uniform(&mut rng);
        let r2 = sample_uniform(&mut rng);
        let q = sample_uniform(&mut rng);
        let base = pair_loss_value(&f1, &f2, &r1, &r2);
        let gauged = pair_loss_value(
            &f1.compose(&q),
            &f2.compose(&q),
            &r1.compose(&q),
            &r2.compose(&q),
        );
        assert!(
            (base - gauged).abs() < 1e-12,
            "gauge shifted loss by {}",
            (base - gauged).abs()
        );
    }
}

#[test]
fn pair_loss_is_invariant_under_left_gauge_of_the_frames() {
    let mut rng = rng::stream("loss-left-gauge", &[4]);
    for _ in 0..50 {
        let f1: Rotation<f64> = sample_uniform(&mut rng);
        let f2 = sample_uniform(&mut rng);
        let r1 = sample_uniform(&mut rng);
        let r2 = sample_uniform(&mut rng);
        let q = sample_uniform(&mut rng);
        let base = pair_loss_value(&f1, &f2, &r1, &r2);
        let gauged = pair_loss_value(&q.compose(&f1), &q.compose(&f2), &r1, &r2);
        assert!((base - gauged).abs() < 1e-12);
    }
}

#[test]
fn tape_loss_matches_the_eager_loss() {
    let model = Predictor64::new(tiny_config(), 5).unwrap();
    let data = two_class_corpus(17);
    let mut rng = rng::stream("tape-eager", &[6]);
    let cfg = tiny_train_config();
    let classes = data.classes();
    for _ in 0..5 {
        let pair = sample_pair(&data, &classes, &cfg, &mut rng).unwrap();
        let mut tape = choir_core::Tape::new();
        let vars = model.params.leaf_all(&mut tape);
        let f1 = model
            .forward_on_tape(&mut tape, &vars, &pair.view1, None)
            .unwrap();
        let f2 = model
            .forward_on_tape(&mut tape, &vars, &pair.view2, None)
            .unwrap();
        let loss = pair_loss_on_tape(&mut tape, f1.rows, f2.rows, &pair.r1, &pair.r2).unwrap();
        let tape_value = tape.scalar_value(loss);
        // Recompute || F1^T F2 - R1^T R2 ||_F^2 eagerly from the tape's
        // own row values; the formula holds for arbitrary matrices, so
        // this isolates the loss algebra from frame extraction.
        let m1 = to_mat3(tape.value(f1.rows));
        let m2 = to_mat3(tape.value(f2.rows));
        let pred = mat::matmul3(&mat::transpose3(&m1), &m2);
        let target = mat::matmul3(&mat::transpose3(pair.r1.matrix()), pair.r2.matrix());
        let eager = mat::frobenius_sq(&mat::sub_mat3(&pred, &target));
        assert!(
            (tape_value - eager).abs() < 1e-12,
            "tape {tape_value} vs eager {eager}"
        );
    }
}

#[test]
fn sampled_pairs_respect_the_mode() {
    let data = two_class_corpus(23);
    let classes = data.classes();
    let mut cfg = tiny_train_config();
    let mut rng = rng::stream("pair-mode", &[7]);

    cfg.pair_mode = PairMode::CrossInstance;
    for _ in 0..10 {
        let p = sample_pair(&data, &classes, &cfg, &mut rng).unwrap();
        assert_eq!(p.view1.class_id, p.view2.class_id);
        assert_ne!(p.view1.instance_id, p.view2.instance_id);
        assert_eq!(p.view1.len(), 48); // resampled to train_points
        assert!(angle_between(&p.r1, &p.r2) > 1e-6);
    }

    cfg.pair_mode = PairMode::SameInstance;
    for _ in 0..10 {
        let p = sample_pair(&data, &classes, &cfg, &mut rng).unwrap();
        assert_eq!(p.view1.instance_id, p.view2.instance_id);
    }
}

#[test]
fn pair_mode_names_round_trip() {
    for mode in [
        PairMode::CrossInstance,
        PairMode::SameInstance,
        PairMode::Mixed,
    ] {
        assert_eq!(mode.name().parse::<PairMode>().unwrap(), mode);
    }
    assert_eq!(
        "cross-instance".parse::<PairMode>().unwrap(),
        PairMode::CrossInstance
    );
    assert_eq!(
        "same-instance".parse::<PairMode>().unwrap(),
        PairMode::SameInstance
    );
    assert!("bogus".parse::<PairMode>().is_err());
}

#[test]
fn select_checkpoint_prefers_lowest_score_earliest_on_ties() {
    let row = |epoch, val: Option<(f64, f64)>| HistoryRow {
        epoch,
        loss: 1.0,
        val_stability_deg: val.map(|v| v.0),
        val_consistency_deg: val.map(|v| v.1),
        selected: false,
    };

    // A single validated row wins by default.
    let h = vec![row(0, None), row(1, Some((5.0, 10.0))), row(2, None)];
    assert_eq!(select_checkpoint(&h), Some(1));

    // Decreasing scores: the last validated row wins.
    let h = vec![
        row(0, Some((9.0, 9.0))),
        row(1, Some((5.0, 5.0))),
        row(2, Some((2.0, 2.0))),
    ];
    assert_eq!(select_checkpoint(&h), Some(2));

    // Exact tie: the earliest of the tied rows wins.
    let h = vec![
        row(9, None),
        row(10, Some((3.0, 4.0))),
        row(15, Some((8.0, 8.0))),
        row(20, Some((4.0, 3.0))),
    ];
    assert_eq!(select_checkpoint(&h), Some(1));

    // No validated rows at all.
    assert_eq!(select_checkpoint(&[row(0, None)]), None);
    assert_eq!(select_checkpoint(&[]), None);
}

#[test]
fn history_csv_matches_the_golden_layout() {
    let rows = vec![
        HistoryRow {
            epoch: 0,
            loss: 1.25,
            val_stability_deg: None,
            val_consistency_deg: None,
            selected: false,
        },
        HistoryRow {
            epoch: 1,
            loss: 0.5,
            val_stability_deg: Some(12.0),
            val_consistency_deg: Some(30.0),
            selected: true,
        },
    ];
    let path = std::env::temp_dir().join(format!("choir-history-{}.csv", std::process::id()));
    write_history_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(
        text,
        "epoch,loss,val_stability_deg,val_consistency_deg,selected_flag\n\
         0,1.25000000,,,0\n\
         1,0.50000000,12.000000,30.000000,1\n"
    );
}

#[test]
fn training_is_deterministic_for_a_fixed_seed() {
    let data = two_class_corpus(29);
    let cfg = tiny_train_config();
    let base = Predictor64::new(tiny_config(), 31).unwrap();

    let mut m1 = base.clone();
    let res1 = train(&mut m1, &data, &cfg).unwrap();
    let mut m2 = base.clone();
    let res2 = train(&mut m2, &data, &cfg).unwrap();

    assert_eq!(res1.history.len(), res2.history.len());
    for (a, b) in res1.history.iter().zip(&res2.history) {
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.val_stability_deg, b.val_stability_deg);
        assert_eq!(a.val_consistency_deg, b.val_consistency_deg);
        assert_eq!(a.selected, b.selected);
    }
    assert_eq!(res1.selected_epoch, res2.selected_epoch);
    for ((_, ta), (_, tb)) in m1.params.iter().zip(m2.params.iter()) {
        assert_eq!(ta.data, tb.data);
    }
}

#[test]
fn training_restores_the_selected_snapshot() {
    let data = two_class_corpus(37);
    let cfg = tiny_train_config();
    let mut model = Predictor64::new(tiny_config(), 41).unwrap();
    let res = train(&mut model, &data, &cfg).unwrap();
    // Every epoch validates (val_every = 1), so something was selected,
    // and the selected row is flagged in the history.
    let idx = res.selected_epoch.expect("a snapshot must be selected");
    let flagged: Vec<usize> = res
        .history
        .iter()
        .filter(|r| r.selected)
        .map(|r| r.epoch)
        .collect();
    assert_eq!(flagged, vec![idx]);
    let row = res.history.iter().find(|r| r.epoch == idx).unwrap();
    assert_eq!(row.val_stability_deg, Some(res.selected_val_stability_deg));
    assert_eq!(
        row.val_consistency_deg,
        Some(res.selected_val_consistency_deg)
    );
}

#[test]
fn train_config_validation_catches_bad_values() {
    let check = |mutate: fn(&mut choir_core::TrainConfig)| {
        let mut cfg = tiny_train_config();
        mutate(&mut cfg);
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    };
    check(|c| c.epochs = 0);
    check(|c| c.batch_pairs = 0);
    check(|c| c.lr = -1.0);
    check(|c| c.lr = f64::NAN);
    check(|c| c.val_every = 0);
    check(|c| c.val_fraction = 1.0);
    check(|c| c.val_rotations = 1);
    check(|c| c.train_points = 0);
}

#[test]
fn cross_instance_training_needs_two_instances_per_class() {
    // One class, two instances, 40% held out: one training instance left.
    let spec = CorpusSpec {
        classes: 2,
        instances_per_class: 8,
        points: 64,
        seed: 43,
        verify_symmetry: false,
    };
    let clouds = generate_synthetic_corpus::<f64>(&spec).unwrap();
    let first_class = clouds[0].class_id.clone();
    let data = Dataset::new(
        clouds
            .into_iter()
            .filter(|c| c.class_id == first_class)
            .take(2)
            .collect(),
    );
    let mut cfg = tiny_train_config();
    cfg.val_fraction = 0.4;
    let mut model = Predictor64::new(tiny_config(), 1).unwrap();
    match train(&mut model, &data, &cfg) {
        Err(Error::Config { message }) => {
            assert!(message.contains("fewer than 2"), "message: {message}")
        }
        other => panic!("expected Config error, got {other:?}"),
    }
}

#[test]
fn non_finite_parameters_surface_as_a_replayable_error() {
    let data = two_class_corpus(47);
    let cfg = tiny_train_config();
    let mut model = Predictor64::new(tiny_config(), 2).unwrap();
    // Poison the residual head: the hypothesizer (and therefore the
    // canonicalized cloud and its graphs) stays finite, and the NaN flows
    // straight through orthonormalization into the loss value.
    let head = model.params.get_mut("residual.head.weight").unwrap();
    for v in head.data.iter_mut() {
        *v = f64::NAN;
    }
    match train(&mut model, &data, &cfg) {
        Err(Error::NonFiniteLoss { epoch, .. }) => assert_eq!(epoch, 0),
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

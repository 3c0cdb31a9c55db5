//! The composed orientation model: configuration validation, parameter
//! budget, prediction structure, canonicalization, and precision casts.

use choir_core::hypothesizer::rows_from_head_value;
use choir_core::pointcloud::knn::knn;
use choir_core::pointcloud::synthetic::random_ball_cloud;
use choir_core::residual::Graphs;
use choir_core::so3::{angle_between, mat};
use choir_core::{
    CharacteristicOrientationPredictor, Error, HypothesizerConfig, KnnMode, Precision,
    PredictorConfig, ResidualConfig,
};

type Predictor64 = CharacteristicOrientationPredictor<f64>;

fn small_config() -> PredictorConfig {
    PredictorConfig {
        hypothesizer: HypothesizerConfig {
            widths: vec![4, 6],
            k: 4,
            ..HypothesizerConfig::default()
        },
        residual: ResidualConfig {
            hidden: 8,
            blocks: 1,
            k_att: 4,
            pos_hidden: 4,
        },
        knn_mode: KnnMode::Adaptive,
        use_residual: true,
    }
}

#[test]
fn default_config_fits_the_parameter_budget() {
    let model = Predictor64::new(PredictorConfig::default(), 0).unwrap();
    let count = model.params.scalar_count();
    assert!(count <= 314_000, "parameter count {count} over budget");
    assert!(count > 10_000, "parameter count {count} suspiciously small");
}

#[test]
fn config_round_trips_through_the_model() {
    let mut config = small_config();
    config.knn_mode = KnnMode::Frozen;
    config.use_residual = false;
    let model = Predictor64::new(config.clone(), 3).unwrap();
    assert_eq!(model.config(), config);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut config = small_config();
    config.hypothesizer.widths = vec![];
    assert!(matches!(
        Predictor64::new(config, 0),
        Err(Error::Config { .. })
    ));

    let mut config = small_config();
    config.hypothesizer.widths = vec![4, 0];
    assert!(matches!(
        Predictor64::new(config, 0),
        Err(Error::Config { .. })
    ));

    let mut config = small_config();
    config.hypothesizer.k = 0;
    assert!(matches!(
        Predictor64::new(config, 0),
        Err(Error::Config { .. })
    ));

    let mut config = small_config();
    config.residual.hidden = 0;
    assert!(matches!(
        Predictor64::new(config, 0),
        Err(Error::Config { .. })
    ));
}

#[test]
fn initialization_is_deterministic_in_the_seed() {
    let a = Predictor64::new(small_config(), 7).unwrap();
    let b = Predictor64::new(small_config(), 7).unwrap();
    for ((name_a, ta), (name_b, tb)) in a.params.iter().zip(b.params.iter()) {
        assert_eq!(name_a, name_b);
        assert_eq!(ta.data, tb.data);
    }
    let c = Predictor64::new(small_config(), 8).unwrap();
    let differs = a
        .params
        .iter()
        .zip(c.params.iter())
        .any(|((_, ta), (_, tc))| ta.data != tc.data);
    assert!(differs, "different seeds produced identical parameters");
}

#[test]
fn forward_rejects_too_few_points() {
    // Default layout needs max(k, k_att) + 1 = 21 points.
    let model = Predictor64::new(PredictorConfig::default(), 0).unwrap();
    let cloud = random_ball_cloud::<f64>(20, 1);
    match model.predict(&cloud, None) {
        Err(Error::TooFewPoints { n, required, .. }) => {
            assert_eq!(n, 20);
            assert_eq!(required, 21);
        }
        other => panic!("expected TooFewPoints, got {other:?}"),
    }
    assert!(model.predict(&random_ball_cloud::<f64>(21, 1), None).is_ok());
}

#[test]
fn prediction_composes_residual_with_hypothesis() {
    let model = Predictor64::new(small_config(), 2).unwrap();
    let cloud = random_ball_cloud::<f64>(32, 5);
    let pred = model.predict(&cloud, None).unwrap();
    let expected = pred.residual.compose(&pred.hypothesis);
    assert!(angle_between(&pred.orientation, &expected) < 1e-12);
    // All three outputs are proper rotations.
    for r in [&pred.orientation, &pred.hypothesis, &pred.residual] {
        assert!((mat::det3(r.matrix()) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn no_residual_model_outputs_its_hypothesis() {
    let mut config = small_config();
    config.use_residual = false;
    let model = Predictor64::new(config, 2).unwrap();
    let cloud = random_ball_cloud::<f64>(32, 5);
    let pred = model.predict(&cloud, None).unwrap();
    assert_eq!(pred.orientation.matrix(), pred.hypothesis.matrix());
    assert_eq!(pred.residual.matrix(), &mat::identity::<f64>());
}

#[test]
fn canonicalize_round_trips() {
    let model = Predictor64::new(small_config(), 4).unwrap();
    let cloud = random_ball_cloud::<f64>(40, 9);
    let (canon, r) = model.canonicalize(&cloud, None).unwrap();
    let pred = model.predict(&cloud, None).unwrap();
    assert!(angle_between(&r, &pred.orientation) < 1e-12);
    // Rotating the canonical cloud back by r recovers the input.
    let back = canon.apply_rotation(&r);
    for (a, b) in back.points.iter().zip(&cloud.points) {
        for d in 0..3 {
            assert!((a[d] - b[d]).abs() < 1e-12);
        }
    }
}

#[test]
fn hypothetical_canonicalization_uses_the_hypothesis() {
    let model = Predictor64::new(small_config(), 4).unwrap();
    let cloud = random_ball_cloud::<f64>(40, 9);
    let (canon, rh) = model.canonicalize_hypothetically(&cloud, None).unwrap();
    let pred = model.predict(&cloud, None).unwrap();
    assert!(angle_between(&rh, &pred.hypothesis) < 1e-12);
    let expected = cloud.apply_rotation(&pred.hypothesis.transpose());
    assert_eq!(canon.points, expected.points);
}

#[test]
fn frozen_graphs_agree_with_adaptive_on_the_same_cloud() {
    let model = Predictor64::new(small_config(), 6).unwrap();
    let cloud = random_ball_cloud::<f64>(36, 11);
    let graphs = model.compute_graphs(&cloud).unwrap();
    let frozen = model.predict(&cloud, Some(&graphs)).unwrap();
    let adaptive = model.predict(&cloud, None).unwrap();
    assert_eq!(frozen.orientation.matrix(), adaptive.orientation.matrix());
}

#[test]
fn frozen_graphs_without_attention_are_rejected() {
    let model = Predictor64::new(small_config(), 6).unwrap();
    let cloud = random_ball_cloud::<f64>(36, 11);
    let encoder = knn(&cloud, 4, Precision::Double).unwrap();
    let graphs = Graphs {
        encoder,
        attention: None,
    };
    match model.predict(&cloud, Some(&graphs)) {
        Err(Error::Config { message }) => {
            assert!(message.contains("attention"), "message: {message}")
        }
        other => panic!("expected Config error, got {other:?}"),
    }
}

#[test]
fn strict_extraction_rejects_degenerate_heads() {
    // Parallel head vectors cannot span a frame.
    let uv = [1.0f64, 0.0, 0.0, 2.0, 0.0, 0.0];
    assert!(matches!(
        rows_from_head_value(&uv),
        Err(Error::DegenerateFrame { .. })
    ));
    let zero = [0.0f64; 6];
    assert!(matches!(
        rows_from_head_value(&zero),
        Err(Error::DegenerateFrame { .. })
    ));
}

#[test]
fn cast_preserves_structure_and_approximates_predictions() {
    let model = Predictor64::new(small_config(), 12).unwrap();
    let model32 = model.cast::<f32>();
    assert_eq!(model32.config(), model.config());
    assert_eq!(model32.params.scalar_count(), model.params.scalar_count());
    let cloud = random_ball_cloud::<f64>(48, 13);
    let p64 = model.predict(&cloud, None).unwrap();
    let p32 = model32.predict(&cloud.cast::<f32>(), None).unwrap();
    let drift = angle_between(&p64.orientation.cast::<f32>(), &p32.orientation);
    assert!(drift < 1e-2, "cast prediction drift {drift} rad");
}

mod support;

use lir_core::train::{loss_and_gradient, sample_loss_and_gradient};
use rand::Rng;
use support::gradcheck::*;

#[test]
fn loss_gradients_match_finite_differences() {
    for case in 0..200u64 {
        let mut rng = rng(case);
        let n = rng.gen_range(2..=6);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels: Vec<f64> = random_labels(&mut rng, n).into_iter().map(f64::from).collect();
        let kind = random_loss(&mut rng);
        let (_, analytic) = loss_and_gradient(kind, &scores, &labels).unwrap();
        let numeric = central_diff(|s| loss_and_gradient(kind, s, &labels).unwrap().0, &scores, FD_STEP);
        let err = rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "case {case} {kind:?}: rel err {err}");
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let families = [Family::Single, Family::Multi, Family::Sparse, Family::Cross];
    let mut worst = 0f64;
    for (case, (family, config, params, sample, loss)) in smooth_instances(1000, 200, &families).into_iter().enumerate() {
        let (_, grad) = sample_loss_and_gradient(&config, &params, &sample, loss).unwrap();
        let numeric = numeric_param_grad(&config, &params, &sample, loss);
        let err = rel_err(&grad.values(), &numeric);
        worst = worst.max(err);
        assert!(err < 1e-3, "case {case} {family:?} {loss:?}: rel err {err}");
    }
    eprintln!("worst relative error: {worst:e}");
}

#[test]
fn two_token_dim_four_instance() {
    use lir_core::encode::{BiEncoderConfig, ModelConfig, PoolingStrategy, ProjectionParams, Similarity};
    use lir_core::train::{LossKind, Params64};
    use lir_core::{DocRecord, QueryRecord, TrainSample};

    let config = BiEncoderConfig::single_vector(4, PoolingStrategy::Mean, Similarity::Cosine).with_backbone_dim(4).with_seed(17);
    let params = Params64::from_params(&ProjectionParams::for_bi(&config));
    let config = ModelConfig::BiEncoder(config);
    let sample = TrainSample::new(
        QueryRecord::new("q", "quick fox").unwrap(),
        vec![DocRecord::new("a", "quick fox").unwrap(), DocRecord::new("b", "lazy dog").unwrap()],
        vec![1.0, 0.0],
    )
    .unwrap();
    for loss in [LossKind::infonce(), LossKind::Ranknet, LossKind::ListwiseCe] {
        let (_, grad) = sample_loss_and_gradient(&config, &params, &sample, loss).unwrap();
        let numeric = numeric_param_grad(&config, &params, &sample, loss);
        assert!(rel_err(&grad.values(), &numeric) < 1e-3);
    }
}

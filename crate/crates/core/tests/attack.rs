mod common;

use common::frozen_model;
use tetradat::attack::{perturb, rgb_to_hsv, tetradat_detailed, AttackError};
use tetradat::dataset::synthetic_desk_dataset;
use tetradat::model::InProcess;
use tetradat::{AttackConfig, BlackBox, BuiltinClassifier, Classifier, Differentiable, Image, ModelError, Prediction};

/// Always the same answer, flat gradient.
struct Constant;

impl Classifier for Constant {
    fn num_classes(&self) -> usize {
        2
    }
    fn predict(&self, _: &Image) -> Result<Prediction, ModelError> {
        Prediction::from_probs(vec![0.9, 0.1])
    }
}

impl Differentiable for Constant {
    fn input_gradient(&self, image: &Image, _: usize) -> Result<Vec<f64>, ModelError> {
        Ok(vec![0.0; image.data().len()])
    }
}

/// Switches to class 1 once some channel moved more than `threshold` away from
/// the reference; the class-0 probability falls with the largest move.
struct FlipsOnLargeMove {
    reference: Image,
    threshold: f64,
}

impl Classifier for FlipsOnLargeMove {
    fn num_classes(&self) -> usize {
        2
    }
    fn predict(&self, image: &Image) -> Result<Prediction, ModelError> {
        let moved = image
            .data()
            .iter()
            .zip(self.reference.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let p1 = if moved > self.threshold { 0.9 } else { 0.4 * moved };
        Prediction::from_probs(vec![1.0 - p1, p1])
    }
}

impl Differentiable for FlipsOnLargeMove {
    fn input_gradient(&self, image: &Image, _: usize) -> Result<Vec<f64>, ModelError> {
        Ok(vec![0.0; image.data().len()])
    }
}

fn red_image() -> Image {
    Image::filled(4, 4, [1.0, 0.0, 0.0]).unwrap()
}

fn small_config(d_hat: usize, budget: usize) -> AttackConfig {
    AttackConfig {
        d_hat,
        budget,
        ..AttackConfig::for_image(4, 4)
    }
}

#[test]
fn constant_classifier_spends_the_budget_and_fails() {
    let ep = InProcess::new(Constant);
    let img = red_image();
    let out = tetradat_detailed(&ep, &Constant, &img, &small_config(4, 1000), false).unwrap();
    assert!(!out.result.success);
    assert_eq!(out.result.queries, 1000);
    assert_eq!(out.result.original_class, 0);
    assert_eq!(out.result.adversarial_class, 0);
    assert_eq!(out.runs.len(), 1);
    assert_eq!(ep.query_count(), 1001);
}

#[test]
fn budget_that_is_not_a_multiple_of_the_batch_is_rounded_down() {
    let ep = InProcess::new(Constant);
    let out = tetradat_detailed(&ep, &Constant, &red_image(), &small_config(4, 250), false).unwrap();
    assert_eq!(out.result.queries, 200);
}

#[test]
fn returns_the_last_successful_amplitude() {
    let img = red_image();
    let model = FlipsOnLargeMove {
        reference: img.clone(),
        threshold: 0.4,
    };
    let ep = InProcess::new(&model);
    let out = tetradat_detailed(&ep, &model, &img, &small_config(4, 10_000), true).unwrap();
    // desaturating pure red by eps moves G and B by eps: 1 and 0.5 flip, 0.25 does not
    let eps: Vec<f64> = out.runs.iter().map(|r| r.epsilon).collect();
    assert_eq!(eps, vec![1.0, 0.5, 0.25]);
    assert_eq!(out.runs.iter().map(|r| r.succeeded).collect::<Vec<_>>(), vec![true, true, false]);
    let r = &out.result;
    assert!(r.success);
    assert_eq!(r.final_epsilon, 0.5);
    assert_eq!(r.adversarial_class, 1);
    assert_eq!(model.predict(&r.adversarial).unwrap().top_class, 1);
    assert_eq!(r.queries, 10_000);
    let moves = out.moves.as_ref().unwrap();
    assert_eq!(perturb(&img, moves, &out.selection, r.final_epsilon).unwrap(), r.adversarial);
}

#[test]
fn every_run_starts_from_where_the_previous_one_ended() {
    let img = red_image();
    let model = FlipsOnLargeMove {
        reference: img.clone(),
        threshold: 0.1,
    };
    let out = tetradat_detailed(&InProcess::new(&model), &model, &img, &small_config(6, 3000), true).unwrap();
    assert!(out.runs.len() >= 3, "{} runs", out.runs.len());
    assert!(out.runs[0].entry.is_none());
    for (i, pair) in out.runs.windows(2).enumerate() {
        assert_eq!(pair[1].entry, pair[0].exit, "boundary after run {i}");
        assert_eq!(pair[1].epsilon, pair[0].epsilon / 2.0);
    }
    let total: usize = out.runs.iter().map(|r| r.queries).sum();
    assert_eq!(total, out.result.queries);
    assert!(total <= 3000);
}

#[test]
fn desk_attack_is_local_and_bounded() {
    let m = frozen_model();
    let sample = &synthetic_desk_dataset(2024, 1)[0];
    let ep = InProcess::new(m.clone());
    let config = AttackConfig {
        budget: 2000,
        ..AttackConfig::for_image(32, 32)
    };
    let out = tetradat_detailed(&ep, &m, &sample.image, &config, false).unwrap();
    let r = &out.result;
    assert!(ep.query_count() as usize <= config.budget + 1);
    assert_eq!(ep.query_count() as usize, r.queries + 1);
    assert_eq!(out.selection.d_hat(), 102);

    let eps = r.final_epsilon;
    for row in 0..32 {
        for col in 0..32 {
            let (a, b) = (sample.image.pixel(row, col), r.adversarial.pixel(row, col));
            if !out.selection.contains(row, col) {
                assert_eq!(a, b, "unselected pixel ({row}, {col}) changed");
                continue;
            }
            let ([h0, s0, v0], [h1, s1, v1]) = (rgb_to_hsv(a), rgb_to_hsv(b));
            assert!(s1 <= s0 + 1e-9 && s0 - s1 <= eps + 1e-9, "({row}, {col})");
            assert!(v1 >= v0 - 1e-9 && v1 - v0 <= eps + 1e-9, "({row}, {col})");
            if s1 > 1e-9 && (a != b) {
                let dh = (h0 - h1).abs();
                assert!(dh.min(360.0 - dh) < 1e-6, "hue moved at ({row}, {col})");
            }
        }
    }
    assert!(r.linf <= 255.0 * eps + 1e-9);
}

#[test]
fn disagreeing_auxiliary_model_is_an_error() {
    let m = frozen_model();
    let sample = &synthetic_desk_dataset(2024, 1)[0];
    let class = m.predict(&sample.image).unwrap().top_class;
    let other = (0..40)
        .map(|seed| BuiltinClassifier::random(32, 32, 4, 10, seed))
        .find(|a| a.predict(&sample.image).unwrap().top_class != class)
        .unwrap();
    let err = tetradat_detailed(&InProcess::new(&m), &other, &sample.image, &AttackConfig::for_image(32, 32), false)
        .unwrap_err();
    assert!(matches!(err, AttackError::AuxiliaryDisagrees { attacked, .. } if attacked == class));
}

#[test]
fn invalid_configuration_is_rejected_before_any_query() {
    let ep = InProcess::new(Constant);
    let bad = AttackConfig {
        epsilon0: 0.0,
        ..small_config(4, 1000)
    };
    assert!(matches!(
        tetradat_detailed(&ep, &Constant, &red_image(), &bad, false),
        Err(AttackError::Config(_))
    ));
    assert_eq!(ep.query_count(), 0);
}

//! Adam traces and step-size properties, in f64.

use mangocnn::layers::Param;
use mangocnn::{adam_step, AdamConfig, AdamState, Rng, Tensor};
use proptest::prelude::*;

/// Run Adam on one scalar parameter over a gradient sequence, returning the
/// parameter after each step.
fn trace(p0: f64, grads: &[f64], cfg: &AdamConfig) -> Vec<f64> {
    let mut p = Param::new("p".into(), Tensor::scalar(p0));
    let mut state = AdamState::new();
    grads
        .iter()
        .map(|&g| {
            p.grad = Tensor::scalar(g);
            adam_step(&mut [&mut p], &mut state, cfg).unwrap();
            p.value.data()[0]
        })
        .collect()
}

#[test]
fn two_steps_unrolled_by_hand() {
    let (lr, b1, b2, eps): (f64, f64, f64, f64) = (0.001, 0.9, 0.999, 1e-7);
    let (g1, g2): (f64, f64) = (0.5, -0.2);
    let p0: f64 = 1.0;

    let m1 = (1.0 - b1) * g1;
    let v1 = (1.0 - b2) * g1 * g1;
    let p1 = p0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
    let m2 = b1 * m1 + (1.0 - b1) * g2;
    let v2 = b2 * v1 + (1.0 - b2) * g2 * g2;
    let p2 = p1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);

    let got = trace(p0, &[g1, g2], &AdamConfig::default());
    assert!((got[0] - p1).abs() < 1e-9, "{} vs {p1}", got[0]);
    assert!((got[1] - p2).abs() < 1e-9, "{} vs {p2}", got[1]);
}

#[test]
fn constant_gradient_step_tends_to_lr() {
    let cfg = AdamConfig::default();
    for g in [0.5, -3.0, 1e-2] {
        let t = trace(0.0, &vec![g; 1000], &cfg);
        let step = (t[999] - t[998]).abs();
        assert!((step - cfg.lr).abs() <= 0.01 * cfg.lr, "g={g}: step {step}");
    }
}

#[test]
fn zero_learning_rate_freezes() {
    let t = trace(0.25, &[1.0, -2.0, 3.0], &AdamConfig::with_lr(0.0));
    assert!(t.iter().all(|&p| p == 0.25));
}

#[test]
fn iid_gradients_step_within_three_lr() {
    let cfg = AdamConfig::default();
    for seed in 0..20 {
        let mut rng = Rng::new(seed);
        let scale = 10f64.powf(rng.uniform_range(-3.0, 2.0));
        let grads: Vec<f64> = (0..500)
            .map(|_| scale * rng.uniform_range(-1.0, 1.0))
            .collect();
        let t = trace(0.0, &grads, &cfg);
        let mut prev = 0.0;
        for p in t {
            assert!((p - prev).abs() <= 3.0 * cfg.lr, "seed {seed}");
            prev = p;
        }
    }
}

/// After a long run of zero gradients a single spike moves the parameter by
/// lr·(1−β₁)/√(1−β₂) ≈ 3.16·lr, so 3·lr is not a universal bound.
#[test]
fn spike_after_silence_exceeds_three_lr() {
    let cfg = AdamConfig::default();
    let mut grads = vec![0.0; 20_000];
    grads.push(1.0);
    let t = trace(0.0, &grads, &cfg);
    let step = (t[20_000] - t[19_999]).abs();
    let predicted = cfg.lr * (1.0 - cfg.beta1) / (1.0 - cfg.beta2).sqrt();
    assert!(
        (step - predicted).abs() < 1e-3 * predicted,
        "{step} vs {predicted}"
    );
    assert!(step > 3.0 * cfg.lr);
}

/// Cauchy–Schwarz bound on `|m̂| / √v̂` after `t` steps.
fn step_bound(cfg: &AdamConfig, t: i32) -> f64 {
    let r = cfg.beta1 * cfg.beta1 / cfg.beta2;
    let geom: f64 = (0..t).map(|k| r.powi(k)).sum();
    let corr1 = 1.0 - cfg.beta1.powi(t);
    let corr2 = 1.0 - cfg.beta2.powi(t);
    cfg.lr * (1.0 - cfg.beta1) / (1.0 - cfg.beta2).sqrt() * geom.sqrt() * corr2.sqrt() / corr1
}

proptest! {
    #[test]
    fn every_step_within_cauchy_schwarz_bound(
        grads in prop::collection::vec(prop_oneof![Just(0.0), -1e3f64..1e3], 1..200)
    ) {
        let cfg = AdamConfig::default();
        let t = trace(0.0, &grads, &cfg);
        let mut prev = 0.0;
        for (i, &p) in t.iter().enumerate() {
            prop_assert!((p - prev).abs() <= step_bound(&cfg, i as i32 + 1) * (1.0 + 1e-9));
            prev = p;
        }
    }
}

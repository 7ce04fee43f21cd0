//! Finite-difference agreement of every analytic gradient, in f64.

use mangocnn::gradcheck::{
    check_conv2d, check_dense, check_maxpool, check_relu, check_softmax_ce, relative_error,
    GradCheck,
};
use mangocnn::objective::{sparse_ce_grad_logits, sparse_ce_loss};
use mangocnn::{parse_config, Rng, Sequential, Tensor};

const INSTANCES: usize = 25;
const TOL: f64 = 1e-4;

fn assert_ok(name: &str, r: GradCheck) {
    assert_eq!(r.instances, INSTANCES);
    assert!(r.max_rel_error < TOL, "{name}: {r:?}");
}

#[test]
fn conv2d() {
    assert_ok("conv2d", check_conv2d(INSTANCES, 11).unwrap());
}

#[test]
fn dense() {
    assert_ok("dense", check_dense(INSTANCES, 12).unwrap());
}

#[test]
fn relu() {
    assert_ok("relu", check_relu(INSTANCES, 13).unwrap());
}

#[test]
fn maxpool() {
    assert_ok("maxpool", check_maxpool(INSTANCES, 14).unwrap());
}

#[test]
fn softmax_cross_entropy() {
    assert_ok("softmax+ce", check_softmax_ce(INSTANCES, 15).unwrap());
}

/// Whole network: every parameter of a small model against central differences.
#[test]
fn end_to_end_model() {
    let cfg = parse_config(
        "input 6 6 2\nconv 3 3 3 same relu\nmaxpool 2 2\nconv 2 2 2 valid relu\nflatten\ndense 5 relu\ndense 4 softmax\n",
    )
    .unwrap();
    let mut model = Sequential::<f64>::new(&cfg, &mut Rng::new(7)).unwrap();
    let mut rng = Rng::new(8);
    let x = Tensor::<f64>::from_vec(
        &[3, 6, 6, 2],
        (0..216).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let labels = [0, 3, 1];

    let logits = model.forward(x.clone(), true).unwrap();
    model
        .backward(sparse_ce_grad_logits(&logits, &labels).unwrap())
        .unwrap();
    let analytic: Vec<f64> = model
        .params()
        .iter()
        .flat_map(|p| p.grad.data().to_vec())
        .collect();

    let tensors = model.named_tensors();
    let mut numeric = Vec::new();
    let h = 1e-6;
    for t in 0..tensors.len() {
        for i in 0..tensors[t].1.len() {
            let mut eval = |delta: f64| {
                let mut probe = tensors.clone();
                probe[t].1.data_mut()[i] += delta;
                model.set_tensors(&probe).unwrap();
                let p = model.predict_proba(x.clone()).unwrap();
                sparse_ce_loss(&p, &labels).unwrap()
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    let err = relative_error(&analytic, &numeric);
    assert!(err < TOL, "model gradient relative error {err}");
}

//! Analytic gradients against central finite differences, plus a
//! memorisation smoke test.

use flowres::dataset::Label;
use flowres::model::{init_model, BackboneConfig, BranchModel, StageSpec};
use flowres::residual::{EncodedInput, InputKind};
use flowres::training::{adam_step, AdamState, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-4;

fn minimal(seed: u64) -> BackboneConfig {
    BackboneConfig {
        input_size: 16,
        stages: vec![StageSpec {
            channels: 4,
            blocks: 1,
            stride: 2,
        }],
        head_hidden: 4,
        seed,
    }
}

fn random_batch(seed: u64, n: usize, size: usize) -> Vec<(EncodedInput, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = (0..3 * size * size).map(|_| rng.random()).collect();
            let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
            (EncodedInput::new(size, InputKind::FlowResidual, t), label)
        })
        .collect()
}

/// Central differences of the mean loss with respect to every scalar
/// parameter, perturbing one scalar at a time.
fn numeric_grads(model: &BranchModel, batch: &[(&EncodedInput, Label)]) -> Vec<f64> {
    let mut probe = model.clone();
    let n = model.params().num_scalars();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = probe.params().values().nth(i).unwrap();
        *probe.params_mut().values_mut().nth(i).unwrap() = orig + FD_STEP;
        let up = probe.loss(batch).unwrap();
        *probe.params_mut().values_mut().nth(i).unwrap() = orig - FD_STEP;
        let down = probe.loss(batch).unwrap();
        *probe.params_mut().values_mut().nth(i).unwrap() = orig;
        out.push((up - down) / (2.0 * FD_STEP));
    }
    out
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in [1u64, 2] {
        let model = init_model(&minimal(seed), InputKind::FlowResidual).unwrap();
        let owned = random_batch(seed + 100, 4, 16);
        let batch: Vec<_> = owned.iter().map(|(x, y)| (x, *y)).collect();
        let (_, grads) = model.loss_and_grad(&batch).unwrap();
        let analytic: Vec<f64> = grads.values().collect();
        let numeric = numeric_grads(&model, &batch);
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| rel_err(*a, *n))
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "seed {seed}: worst relative error {worst}");
    }
}

#[test]
fn loss_and_grad_is_bit_reproducible() {
    let model = init_model(&minimal(9), InputKind::FlowResidual).unwrap();
    let owned = random_batch(9, 6, 16);
    let batch: Vec<_> = owned.iter().map(|(x, y)| (x, *y)).collect();
    let (l1, g1) = model.loss_and_grad(&batch).unwrap();
    let (l2, g2) = model.loss_and_grad(&batch).unwrap();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(g1.checksum(), g2.checksum());
}

#[test]
fn memorises_two_samples() {
    let mut model = init_model(&minimal(5), InputKind::FlowResidual).unwrap();
    let owned = random_batch(5, 2, 16);
    let batch: Vec<_> = owned.iter().map(|(x, y)| (x, *y)).collect();
    let cfg = TrainConfig {
        lr_init: 1e-3,
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(model.params());
    let mut loss = f64::INFINITY;
    for _ in 0..500 {
        let (l, g) = model.loss_and_grad(&batch).unwrap();
        loss = l;
        adam_step(model.params_mut(), &g, &mut adam, cfg.lr_init, &cfg).unwrap();
    }
    let final_loss = model.loss(&batch).unwrap();
    assert!(final_loss < 0.05, "loss after 500 steps {final_loss} (last step {loss})");
}

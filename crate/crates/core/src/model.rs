//! Interface shared by the two neural classifiers, used by the trainer.

use crate::error::Result;
use crate::numerics::{ParamSet, Scalar};
use crate::rng::Rng;

/// Smallest probability fed to `ln` in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

pub trait Classifier<F: Scalar> {
    type Input: Sync;

    fn params(&self) -> &ParamSet<F>;
    fn params_mut(&mut self) -> &mut ParamSet<F>;
    fn num_classes(&self) -> usize;

    /// Evaluation-mode class probabilities.
    fn predict_proba(&self, input: &Self::Input) -> Result<Vec<F>>;

    /// Forward and backward for one example. Adds the gradient of
    /// `scale · weight · (−ln p_label)` to the parameter gradients and returns
    /// the unscaled, unweighted `−ln p_label` with the training-mode
    /// probabilities.
    fn accumulate(
        &mut self,
        input: &Self::Input,
        label: usize,
        weight: F,
        scale: F,
        train: bool,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<F>)>;
}

/// Gradient of `scale · weight · (−ln p_label)` with respect to the logits
/// of a softmax head.
pub fn logit_grad<F: Scalar>(probs: &[F], label: usize, weight: F, scale: F) -> Vec<F> {
    probs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let y = if k == label { F::one() } else { F::zero() };
            scale * weight * (*p - y)
        })
        .collect()
}

pub fn neg_log_prob<F: Scalar>(probs: &[F], label: usize) -> f64 {
    -probs[label].f64().max(PROB_FLOOR).ln()
}

/// Runs a full-model finite-difference check in double precision over the
/// trainable parameters. The loss is the weighted mean over `examples`;
/// dropout masks are replayed from `seed`. Panics if the forward pass fails.
pub fn model_grad_check<M: Classifier<f64>>(
    model: &mut M,
    examples: &[(M::Input, usize, f64)],
    train: bool,
    seed: u64,
) -> f64 {
    use crate::numerics::{grad_check, ParamId};
    let ids: Vec<ParamId> = (0..model.params().len())
        .map(ParamId)
        .filter(|id| model.params().is_trainable(*id))
        .collect();
    let init: Vec<Vec<f64>> = ids.iter().map(|id| model.params().value(*id).data().to_vec()).collect();
    let scale = 1.0 / examples.len() as f64;
    let cell = std::cell::RefCell::new(model);
    grad_check(
        &init,
        |p: &[Vec<f64>]| {
            let mut m = cell.borrow_mut();
            for (id, v) in ids.iter().zip(p) {
                m.params_mut().value_mut(*id).data_mut().copy_from_slice(v);
            }
            m.params_mut().zero_grads();
            let mut rng = crate::rng::seeded(seed);
            let mut loss = 0.0;
            for (x, y, w) in examples {
                let (l, _) = m.accumulate(x, *y, *w, scale, train, &mut rng).expect("forward");
                loss += scale * w * l;
            }
            let grads = ids.iter().map(|id| m.params().grad(*id).data().to_vec()).collect();
            (loss, grads)
        },
        1e-4,
    )
}

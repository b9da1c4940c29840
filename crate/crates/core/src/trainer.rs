//! Weighted log loss, SGD with cyclical learning rate and momentum, the
//! learning-rate range test and early stopping.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Classifier, PROB_FLOOR};
use crate::numerics::{Scalar, Tensor};

pub const MOMENTUM_MAX: f64 = 0.95;
pub const MOMENTUM_MIN: f64 = 0.85;

/// `−(1/N)·Σ_i Σ_k w_k·y_ik·ln p_ik`, with `p` clamped at [`PROB_FLOOR`].
pub fn weighted_logloss(probs: &[Vec<f64>], onehot: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    if probs.len() != onehot.len() {
        return Err(Error::Shape(format!("{} prediction rows vs {} label rows", probs.len(), onehot.len())));
    }
    if probs.is_empty() {
        return Err(Error::InsufficientData("log loss of an empty set".into()));
    }
    let mut total = 0.0;
    for (p, y) in probs.iter().zip(onehot) {
        if p.len() != weights.len() || y.len() != weights.len() {
            return Err(Error::Shape(format!("rows must have K = {} entries", weights.len())));
        }
        for k in 0..weights.len() {
            if y[k] != 0.0 {
                total -= weights[k] * y[k] * p[k].max(PROB_FLOOR).ln();
            }
        }
    }
    Ok(total / probs.len() as f64)
}

/// Triangular learning rate with momentum in the opposite phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClrSchedule {
    pub lr_min: f64,
    pub lr_max: f64,
    /// Optimizer steps from a trough to the next peak.
    pub half_cycle: usize,
    pub momentum_max: f64,
    pub momentum_min: f64,
}

impl ClrSchedule {
    pub fn new(lr_min: f64, lr_max: f64, half_cycle: usize) -> Result<Self> {
        if !(lr_min > 0.0 && lr_min < lr_max && lr_max.is_finite()) || half_cycle == 0 {
            return Err(Error::InvalidConfig(format!(
                "cyclical schedule needs 0 < lr_min < lr_max and half_cycle > 0 (got {lr_min}, {lr_max}, {half_cycle})"
            )));
        }
        Ok(Self { lr_min, lr_max, half_cycle, momentum_max: MOMENTUM_MAX, momentum_min: MOMENTUM_MIN })
    }
}

/// `(learning rate, momentum)` at an optimizer step.
pub fn clr_at(step: usize, s: &ClrSchedule) -> (f64, f64) {
    let pos = step % (2 * s.half_cycle);
    // Integer fold keeps vertices exact.
    let up = if pos <= s.half_cycle { pos } else { 2 * s.half_cycle - pos };
    let frac = up as f64 / s.half_cycle as f64;
    let lr = if up == s.half_cycle { s.lr_max } else { s.lr_min + (s.lr_max - s.lr_min) * frac };
    let mom = if up == s.half_cycle { s.momentum_min } else { s.momentum_max - (s.momentum_max - s.momentum_min) * frac };
    (lr, mom)
}

/// Which held-out split drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopOn {
    Validation,
    /// Compatibility mode: monitor the test split.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub half_cycle_epochs: usize,
    /// Weight the loss by class weights.
    pub weighted_loss: bool,
    pub stop_on: StopOn,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 24,
            patience: 4,
            lr_min: 2.62e-2 / 6.0,
            lr_max: 2.62e-2,
            half_cycle_epochs: 6,
            weighted_loss: true,
            stop_on: StopOn::Validation,
        }
    }
}

impl TrainConfig {
    pub fn for_model(kind: &str) -> Self {
        let lr_max = if kind == "han" { 6.29e-2 } else { 2.62e-2 };
        Self { lr_max, lr_min: lr_max / 6.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.half_cycle_epochs == 0 {
            return Err(Error::InvalidConfig("batch_size, max_epochs and half_cycle_epochs must be positive".into()));
        }
        ClrSchedule::new(self.lr_min, self.lr_max, 1).map(|_| ())
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size)
    }

    pub fn schedule(&self, n_train: usize) -> Result<ClrSchedule> {
        ClrSchedule::new(self.lr_min, self.lr_max, self.half_cycle_epochs * self.steps_per_epoch(n_train))
    }
}

/// Labeled inputs for one split.
pub struct Labeled<'a, I> {
    pub inputs: &'a [I],
    pub labels: &'a [usize],
}

impl<I> Labeled<'_, I> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl<'a, I> Clone for Labeled<'a, I> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<'a, I> Copy for Labeled<'a, I> {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,macro_F1,lr\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.macro_f1, e.lr));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Held-out weighted loss and macro-F1 in evaluation mode.
pub fn evaluate<F: Scalar, M>(model: &M, data: Labeled<'_, M::Input>, weights: &[f64]) -> Result<(f64, crate::evaluation::Metrics)>
where
    M: Classifier<F> + Sync,
{
    let probs: Vec<Vec<f64>> = crate::parallel::par_map(data.inputs, |x| model.predict_proba(x))
        .into_iter()
        .map(|p| p.map(|p| p.iter().map(|v| v.f64()).collect()))
        .collect::<Result<_>>()?;
    let k = model.num_classes();
    let onehot: Vec<Vec<f64>> = data.labels.iter().map(|l| (0..k).map(|c| if c == *l { 1.0 } else { 0.0 }).collect()).collect();
    let loss = weighted_logloss(&probs, &onehot, weights)?;
    let pred: Vec<usize> = probs.iter().map(|p| crate::cnn::argmax(p)).collect();
    let metrics = crate::evaluation::ConfusionMatrix::from_pairs(k, data.labels, &pred)?.prf1();
    Ok((loss, metrics))
}

/// Momentum SGD over the trainable parameters.
struct Sgd<F> {
    velocity: Vec<Tensor<F>>,
}

impl<F: Scalar> Sgd<F> {
    fn new<M: Classifier<F>>(model: &M) -> Self {
        Self { velocity: model.params().values().iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    /// `v ← μ·v − lr·g`, `θ ← θ + v`.
    fn step<M: Classifier<F>>(&mut self, model: &mut M, lr: f64, momentum: f64) {
        let (lr, mu) = (F::of(lr), F::of(momentum));
        let (values, grads, trainable) = model.params_mut().split_values_mut();
        for (i, value) in values.iter_mut().enumerate() {
            if !trainable[i] {
                continue;
            }
            let v = self.velocity[i].data_mut();
            for ((x, g), vi) in value.data_mut().iter_mut().zip(grads[i].data()).zip(v.iter_mut()) {
                *vi = mu * *vi - lr * *g;
                *x += *vi;
            }
        }
    }
}

/// One mini-batch: accumulates `(1/B)·Σ w_y·(−ln p_y)` gradients and applies
/// the update. Returns the weighted batch loss summed over examples.
#[allow(clippy::too_many_arguments)]
fn batch_step<F: Scalar, M: Classifier<F>>(
    model: &mut M,
    opt: &mut Sgd<F>,
    data: Labeled<'_, M::Input>,
    batch: &[usize],
    weights: &[f64],
    lr: f64,
    momentum: f64,
    dropout_rng: &mut crate::rng::Rng,
) -> Result<f64> {
    model.params_mut().zero_grads();
    let scale = F::of(1.0 / batch.len() as f64);
    let mut loss = 0.0;
    for &i in batch {
        let y = data.labels[i];
        let (l, _) = model.accumulate(&data.inputs[i], y, F::of(weights[y]), scale, true, dropout_rng)?;
        loss += weights[y] * l;
    }
    opt.step(model, lr, momentum);
    Ok(loss)
}

fn diverged_if_non_finite(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { epoch, step },
        e => e,
    }
}

pub struct TrainOutcome {
    pub history: TrainHistory,
}

/// Mini-batch training with early stopping. On return the model holds the
/// parameters of the epoch with the lowest held-out loss.
pub fn train<F: Scalar, M>(
    model: &mut M,
    train_set: Labeled<'_, M::Input>,
    held_out: Labeled<'_, M::Input>,
    class_weights: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome>
where
    M: Classifier<F> + Sync,
{
    cfg.validate()?;
    if train_set.is_empty() || held_out.is_empty() {
        return Err(Error::InsufficientData("training and held-out splits must be non-empty".into()));
    }
    let k = model.num_classes();
    if class_weights.len() != k {
        return Err(Error::Shape(format!("{} class weights for K = {k}", class_weights.len())));
    }
    let weights: Vec<f64> = if cfg.weighted_loss { class_weights.to_vec() } else { vec![1.0; k] };
    let schedule = cfg.schedule(train_set.len())?;
    let mut shuffle_rng = crate::rng::component_rng(seed, "trainer.shuffle");
    let mut dropout_rng = crate::rng::component_rng(seed, "trainer.dropout");
    let mut opt = Sgd::new(model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0 };
    let mut best: Option<(f64, Vec<Tensor<F>>)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (rate, mom) = clr_at(step, &schedule);
            lr = rate;
            let loss = batch_step(model, &mut opt, train_set, batch, &weights, rate, mom, &mut dropout_rng)
                .map_err(|e| diverged_if_non_finite(e, epoch, step))?;
            if !loss.is_finite() || !model.params().values().iter().all(Tensor::is_finite) {
                return Err(Error::Diverged { epoch, step });
            }
            total += loss;
            step += 1;
        }
        let train_loss = total / train_set.len() as f64;
        let (val_loss, metrics) =
            evaluate(&*model, held_out, &weights).map_err(|e| diverged_if_non_finite(e, epoch, step))?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, step });
        }
        log::info!("epoch {epoch}: train {train_loss:.4} held-out {val_loss:.4} macro-F1 {:.4} lr {lr:.3e}", metrics.macro_f1);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            per_class_f1: metrics.per_class.iter().map(|c| c.f1).collect(),
            macro_f1: metrics.macro_f1,
            lr,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params().snapshot()));
            history.best_epoch = epoch;
        }
        if epoch - history.best_epoch > cfg.patience {
            break;
        }
    }
    let (_, snapshot) = best.expect("at least one epoch");
    model.params_mut().restore(snapshot);
    Ok(TrainOutcome { history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeTestConfig {
    pub lr_lo: f64,
    pub lr_hi: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fixed momentum during the sweep.
    pub momentum: f64,
    /// Moving-average window as a share of the recorded points.
    pub smoothing: f64,
}

impl Default for RangeTestConfig {
    fn default() -> Self {
        Self { lr_lo: 1e-6, lr_hi: 7e-2, epochs: 6, batch_size: 64, momentum: 0.9, smoothing: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePoint {
    pub step: usize,
    pub lr: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSuggestion {
    pub lr_max: f64,
    pub lr_min: f64,
    /// Index of the last point before the smoothed loss stops improving.
    pub index: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTestResult {
    pub points: Vec<RangePoint>,
    pub suggestion: RangeSuggestion,
    /// True when the sweep hit a non-finite loss and stopped early.
    pub diverged: bool,
}

impl RangeTestResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,lr,val_loss,val_macro_F1\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{}\n", p.step, p.lr, p.val_loss, p.val_macro_f1));
        }
        s
    }
}

/// Moving average over a centred window of `2·half + 1` points (truncated at the ends).
fn smooth(values: &[f64], half: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Picks `lr_max` at the last point before the smoothed loss stops
/// decreasing and sets `lr_min = lr_max / 6`.
pub fn suggest_bounds(lrs: &[f64], losses: &[f64], smoothing: f64) -> Result<RangeSuggestion> {
    if lrs.is_empty() || lrs.len() != losses.len() {
        return Err(Error::InsufficientData("range test produced no usable points".into()));
    }
    let window = ((smoothing * lrs.len() as f64).round() as usize).max(1);
    let s = smooth(losses, window / 2);
    let mut index = s.len() - 1;
    for i in 0..s.len() - 1 {
        if !(s[i + 1] < s[i]) {
            index = i;
            break;
        }
    }
    let warning = (index == 0).then(|| "loss never improved; lr_max set to the lowest rate tried".to_string());
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let lr_max = lrs[index];
    Ok(RangeSuggestion { lr_max, lr_min: lr_max / 6.0, index, warning })
}

/// The sweep itself, independent of any model: `step(lr)` performs one
/// update, `eval()` returns (held-out loss, macro-F1). A non-finite loss ends
/// the sweep.
pub fn range_sweep(
    n_steps: usize,
    lr_lo: f64,
    lr_hi: f64,
    mut step: impl FnMut(f64) -> Result<()>,
    mut eval: impl FnMut() -> Result<(f64, f64)>,
) -> Result<(Vec<RangePoint>, bool)> {
    let mut points = Vec::with_capacity(n_steps);
    for s in 0..n_steps {
        let lr = if n_steps == 1 { lr_lo } else { lr_lo + (lr_hi - lr_lo) * s as f64 / (n_steps - 1) as f64 };
        step(lr)?;
        let (val_loss, f1) = eval()?;
        if !val_loss.is_finite() {
            return Ok((points, true));
        }
        points.push(RangePoint { step: s, lr, val_loss, val_macro_f1: f1 });
    }
    Ok((points, false))
}

/// Linearly increasing learning rate over `epochs` epochs, recording the
/// held-out loss after every batch.
pub fn lr_range_test<F: Scalar, M>(
    model: &mut M,
    train_set: Labeled<'_, M::Input>,
    held_out: Labeled<'_, M::Input>,
    class_weights: &[f64],
    cfg: &RangeTestConfig,
    seed: u64,
) -> Result<RangeTestResult>
where
    M: Classifier<F> + Sync,
{
    if !(cfg.lr_lo > 0.0 && cfg.lr_lo < cfg.lr_hi) || cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("range test needs 0 < lr_lo < lr_hi and positive epochs/batch".into()));
    }
    if train_set.is_empty() || held_out.is_empty() {
        return Err(Error::InsufficientData("range test needs training and held-out data".into()));
    }
    let mut shuffle_rng = crate::rng::component_rng(seed, "range.shuffle");
    let mut dropout_rng = crate::rng::component_rng(seed, "range.dropout");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batches: Vec<Vec<usize>> = Vec::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        batches.extend(order.chunks(cfg.batch_size).map(<[usize]>::to_vec));
    }
    let mut opt = Sgd::new(model);
    let model = std::cell::RefCell::new(model);
    let mut next = 0;
    let (points, diverged) = range_sweep(
        batches.len(),
        cfg.lr_lo,
        cfg.lr_hi,
        |lr| {
            let mut m = model.borrow_mut();
            batch_step(&mut **m, &mut opt, train_set, &batches[next], class_weights, lr, cfg.momentum, &mut dropout_rng)?;
            next += 1;
            Ok(())
        },
        || {
            let m = model.borrow();
            let (loss, metrics) = evaluate(&**m, held_out, class_weights)?;
            Ok((loss, metrics.macro_f1))
        },
    )?;
    if points.is_empty() {
        return Err(Error::InsufficientData("range test diverged before recording any point".into()));
    }
    let lrs: Vec<f64> = points.iter().map(|p| p.lr).collect();
    let losses: Vec<f64> = points.iter().map(|p| p.val_loss).collect();
    let suggestion = suggest_bounds(&lrs, &losses, cfg.smoothing)?;
    Ok(RangeTestResult { points, suggestion, diverged })
}

//! Multi-branch convolutional classifier with 1-max pooling, and its
//! region-embedding and saliency read-outs.

use serde::{Deserialize, Serialize};

use crate::embeddings::{copy_into, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::model::{logit_grad, neg_log_prob, Classifier};
use crate::numerics::{
    conv1d_valid, conv1d_valid_backward, dense, dense_backward, dropout, dropout_backward,
    glorot_bound, max_pool_columns, max_pool_columns_backward, relu_backward, softmax,
    uniform_tensor, ParamId, ParamSet, Scalar, Tensor,
};
use crate::rng::Rng;
use crate::textprep::{EncodedCnnInput, PAD_ID};

/// Bound of the uniform embedding initialization when no pre-trained vectors are used.
pub const EMBEDDING_INIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    pub s: usize,
    pub dim: usize,
    pub widths: Vec<usize>,
    pub n_filters: usize,
    pub dropout: f64,
    pub num_classes: usize,
    pub vocab_size: usize,
    pub fine_tune_embeddings: bool,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            s: 200,
            dim: 64,
            widths: vec![2, 3, 4],
            n_filters: 100,
            dropout: 0.5,
            num_classes: 2,
            vocab_size: 2,
            fine_tune_embeddings: true,
        }
    }
}

impl CnnConfig {
    /// 300 filters per branch for `incident_type`, 100 otherwise.
    pub fn filters_for_outcome(outcome: &str) -> usize {
        if outcome == "incident_type" {
            300
        } else {
            100
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_filters == 0 || self.dim == 0 || self.widths.is_empty() {
            return bad("cnn needs n_filters, dim and at least one width".into());
        }
        if let Some(h) = self.widths.iter().find(|h| **h == 0 || **h > self.s) {
            return bad(format!("filter width {h} must be in 1..={}", self.s));
        }
        if self.num_classes < 2 || self.vocab_size < 2 {
            return bad("cnn needs K >= 2 and a vocabulary".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn concat_width(&self) -> usize {
        self.widths.len() * self.n_filters
    }

    /// `V·dim·[fine_tune] + Σ_h (h·dim·n_f + n_f) + |widths|·n_f·K + K`.
    pub fn trainable_parameter_count(&self) -> usize {
        let emb = if self.fine_tune_embeddings { self.vocab_size * self.dim } else { 0 };
        let conv: usize = self.widths.iter().map(|h| h * self.dim * self.n_filters + self.n_filters).sum();
        emb + conv + self.concat_width() * self.num_classes + self.num_classes
    }
}

#[derive(Debug, Clone)]
pub struct CnnModel<F: Scalar = f32> {
    pub config: CnnConfig,
    params: ParamSet<F>,
    embedding: ParamId,
    conv: Vec<(ParamId, ParamId)>,
    dense_w: ParamId,
    dense_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct CnnForwardTrace<F> {
    pub probabilities: Vec<F>,
    pub logits: Vec<F>,
    /// Post-ReLU `(s−h+1) × n_f` map per branch.
    pub feature_maps: Vec<Vec<F>>,
    /// Pooled row index per filter, per branch.
    pub argmax: Vec<Vec<usize>>,
}

struct Cache<F> {
    input: Vec<F>,
    trace: CnnForwardTrace<F>,
    drop_mask: Vec<F>,
    hidden: Vec<F>,
}

/// One receptive field of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub width: usize,
    pub start: usize,
    pub norm: f64,
    pub embedding: Vec<f64>,
    /// Some position in the window is padding.
    pub touches_padding: bool,
    /// Every position in the window is padding.
    pub all_padding: bool,
}

pub(crate) fn param_names(widths: &[usize]) -> Vec<String> {
    let mut names = vec!["embedding".to_string()];
    for h in widths {
        names.push(format!("conv{h}.w"));
        names.push(format!("conv{h}.b"));
    }
    names.push("dense.w".into());
    names.push("dense.b".into());
    names
}

impl<F: Scalar> CnnModel<F> {
    /// Random initialization: conv and dense weights uniform in
    /// `±√(6/(fan_in+fan_out))`, biases zero, embeddings uniform in ±0.05
    /// with the padding row zero.
    pub fn new(config: CnnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (v, d, nf, k) = (config.vocab_size, config.dim, config.n_filters, config.num_classes);
        let mut params = ParamSet::new();
        let mut emb = uniform_tensor::<F, _>(&[v, d], EMBEDDING_INIT, rng);
        emb.row_mut(0).iter_mut().for_each(|x| *x = F::zero());
        let names = param_names(&config.widths);
        let embedding = params.register(&names[0], emb, config.fine_tune_embeddings);
        let mut conv = Vec::new();
        for (i, h) in config.widths.iter().enumerate() {
            let w = uniform_tensor(&[h * d, nf], glorot_bound(h * d, nf), rng);
            let wid = params.register(&names[1 + 2 * i], w, true);
            let bid = params.register(&names[2 + 2 * i], Tensor::zeros(&[nf]), true);
            conv.push((wid, bid));
        }
        let cw = config.concat_width();
        let dense_w = params.register("dense.w", uniform_tensor(&[k, cw], glorot_bound(cw, k), rng), true);
        let dense_b = params.register("dense.b", Tensor::zeros(&[k]), true);
        Ok(Self { config, params, embedding, conv, dense_w, dense_b })
    }

    /// Rebuilds a model around stored parameters, checking names and shapes.
    pub fn from_params(config: CnnConfig, params: ParamSet<F>) -> Result<Self> {
        config.validate()?;
        let names = param_names(&config.widths);
        if params.names() != names.as_slice() {
            return Err(Error::Checkpoint(format!("cnn parameter names {:?}", params.names())));
        }
        let (v, d, nf, k) = (config.vocab_size, config.dim, config.n_filters, config.num_classes);
        let mut shapes = vec![vec![v, d]];
        for h in &config.widths {
            shapes.push(vec![h * d, nf]);
            shapes.push(vec![nf]);
        }
        shapes.push(vec![k, config.concat_width()]);
        shapes.push(vec![k]);
        for (i, want) in shapes.iter().enumerate() {
            if params.value(ParamId(i)).shape() != want.as_slice() {
                return Err(Error::Checkpoint(format!("`{}` has the wrong shape", names[i])));
            }
        }
        let conv = (0..config.widths.len()).map(|i| (ParamId(1 + 2 * i), ParamId(2 + 2 * i))).collect();
        let n = names.len();
        let mut m = Self {
            config,
            params,
            embedding: ParamId(0),
            conv,
            dense_w: ParamId(n - 2),
            dense_b: ParamId(n - 1),
        };
        let ft = m.config.fine_tune_embeddings;
        m.params.set_trainable(m.embedding, ft);
        Ok(m)
    }

    pub fn into_params(self) -> ParamSet<F> {
        self.params
    }

    pub fn cast<G: Scalar>(&self) -> CnnModel<G> {
        CnnModel {
            config: self.config.clone(),
            params: self.params.cast(),
            embedding: self.embedding,
            conv: self.conv.clone(),
            dense_w: self.dense_w,
            dense_b: self.dense_b,
        }
    }

    pub fn set_embeddings(&mut self, m: &EmbeddingMatrix) -> Result<()> {
        let d = self.config.dim;
        let mut buf: Vec<f32> = self.params.value(self.embedding).data().iter().map(|x| x.f64() as f32).collect();
        copy_into(m, &mut buf, d)?;
        for (dst, src) in self.params.value_mut(self.embedding).data_mut().iter_mut().zip(buf) {
            *dst = F::of(src as f64);
        }
        Ok(())
    }

    fn embed(&self, ids: &[u32]) -> Result<Vec<F>> {
        let (s, d) = (self.config.s, self.config.dim);
        if ids.len() != s {
            return Err(Error::Shape(format!("cnn input has length {}, expected {s}", ids.len())));
        }
        let emb = self.params.value(self.embedding);
        let mut input = vec![F::zero(); s * d];
        for (i, id) in ids.iter().enumerate() {
            if *id == PAD_ID {
                continue;
            }
            if *id as usize >= self.config.vocab_size {
                return Err(Error::Shape(format!("token id {id} outside vocabulary")));
            }
            input[i * d..(i + 1) * d].copy_from_slice(emb.row(*id as usize));
        }
        Ok(input)
    }

    fn pad_windows(ids: &[u32], h: usize) -> Vec<bool> {
        (0..ids.len() + 1 - h).map(|r| ids[r..r + h].iter().all(|i| *i == PAD_ID)).collect()
    }

    fn forward_cache(&self, ids: &[u32], train: bool, rng: &mut Rng) -> Result<Cache<F>> {
        let (s, d, nf) = (self.config.s, self.config.dim, self.config.n_filters);
        let input = self.embed(ids)?;
        let mut feature_maps = Vec::with_capacity(self.conv.len());
        let mut argmax = Vec::with_capacity(self.conv.len());
        let mut pooled = Vec::with_capacity(self.config.concat_width());
        for (h, (w, b)) in self.config.widths.iter().zip(&self.conv) {
            let skip = Self::pad_windows(ids, *h);
            let mut map = conv1d_valid(
                &input,
                s,
                d,
                self.params.value(*w).data(),
                *h,
                self.params.value(*b).data(),
                Some(&skip),
            )?;
            map.iter_mut().for_each(|x| *x = x.max(F::zero()));
            let (vals, idx) = max_pool_columns(&map, s - h + 1, nf);
            pooled.extend(vals);
            feature_maps.push(map);
            argmax.push(idx);
        }
        let (hidden, drop_mask) = dropout(&pooled, self.config.dropout, train, rng);
        let logits = dense(&hidden, self.params.value(self.dense_w).data(), self.params.value(self.dense_b).data());
        let probabilities = softmax(&logits);
        if probabilities.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("cnn forward".into()));
        }
        Ok(Cache {
            input,
            trace: CnnForwardTrace { probabilities, logits, feature_maps, argmax },
            drop_mask,
            hidden,
        })
    }

    pub fn forward(&self, input: &EncodedCnnInput, train: bool, rng: &mut Rng) -> Result<CnnForwardTrace<F>> {
        Ok(self.forward_cache(&input.ids, train, rng)?.trace)
    }

    /// Backpropagates `d_logits` using parameter `values`; adds parameter
    /// gradients when `grads` is given and returns `∂/∂input` (`s × d`).
    fn backward(
        &self,
        values: &[Tensor<F>],
        cache: &Cache<F>,
        d_logits: &[F],
        mut grads: Option<&mut [Tensor<F>]>,
    ) -> Vec<F> {
        let (s, d, nf) = (self.config.s, self.config.dim, self.config.n_filters);
        let cw = self.config.concat_width();
        let (mut dw_scratch, mut db_scratch) = (Vec::new(), Vec::new());
        let d_hidden = match grads.as_deref_mut() {
            Some(g) => {
                let (dw, db) = pair_mut(g, self.dense_w.0, self.dense_b.0);
                dense_backward(&cache.hidden, values[self.dense_w.0].data(), d_logits, dw.data_mut(), db.data_mut())
            }
            None => {
                dw_scratch.resize(d_logits.len() * cw, F::zero());
                db_scratch.resize(d_logits.len(), F::zero());
                dense_backward(&cache.hidden, values[self.dense_w.0].data(), d_logits, &mut dw_scratch, &mut db_scratch)
            }
        };
        let d_pooled = dropout_backward(&cache.drop_mask, &d_hidden);
        let mut d_input = vec![F::zero(); s * d];
        for (i, (h, (w, b))) in self.config.widths.iter().zip(&self.conv).enumerate() {
            let rows = s - h + 1;
            let d_map = max_pool_columns_backward(&cache.trace.argmax[i], rows, &d_pooled[i * nf..(i + 1) * nf]);
            let d_pre = relu_backward(&cache.trace.feature_maps[i], &d_map);
            let filters = values[w.0].data();
            match grads.as_deref_mut() {
                Some(g) => {
                    let (gw, gb) = pair_mut(g, w.0, b.0);
                    conv1d_valid_backward(&cache.input, s, d, filters, *h, &d_pre, &mut d_input, gw.data_mut(), gb.data_mut());
                }
                None => {
                    let mut gw = vec![F::zero(); filters.len()];
                    let mut gb = vec![F::zero(); nf];
                    conv1d_valid_backward(&cache.input, s, d, filters, *h, &d_pre, &mut d_input, &mut gw, &mut gb);
                }
            }
        }
        d_input
    }

    /// Every receptive field of every branch with its pre-pooling feature-map
    /// row and that row's L2 norm (evaluation mode).
    pub fn region_embeddings(&self, input: &EncodedCnnInput) -> Result<Vec<Region>> {
        let mut rng = crate::rng::seeded(0);
        let cache = self.forward_cache(&input.ids, false, &mut rng)?;
        let nf = self.config.n_filters;
        let mut out = Vec::new();
        for (i, h) in self.config.widths.iter().enumerate() {
            let map = &cache.trace.feature_maps[i];
            for r in 0..self.config.s - h + 1 {
                let row: Vec<f64> = map[r * nf..(r + 1) * nf].iter().map(|x| x.f64()).collect();
                let window = &input.ids[r..r + h];
                out.push(Region {
                    width: *h,
                    start: r,
                    norm: row.iter().map(|x| x * x).sum::<f64>().sqrt(),
                    embedding: row,
                    touches_padding: window.contains(&PAD_ID),
                    all_padding: window.iter().all(|x| *x == PAD_ID),
                });
            }
        }
        Ok(out)
    }

    /// L2 norm of `∂ logit_pred / ∂ embedding row` per input position
    /// (length `s`); padding positions are reported as 0.
    pub fn saliency(&self, input: &EncodedCnnInput) -> Result<Vec<f64>> {
        let mut rng = crate::rng::seeded(0);
        let cache = self.forward_cache(&input.ids, false, &mut rng)?;
        let pred = argmax(&cache.trace.probabilities);
        let mut d_logits = vec![F::zero(); self.config.num_classes];
        d_logits[pred] = F::one();
        let d_input = self.backward(self.params.values(), &cache, &d_logits, None);
        let d = self.config.dim;
        Ok(input
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                if *id == PAD_ID {
                    0.0
                } else {
                    d_input[i * d..(i + 1) * d].iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt()
                }
            })
            .collect())
    }
}

pub(crate) fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

pub fn argmax<F: Scalar>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl<F: Scalar> Classifier<F> for CnnModel<F> {
    type Input = EncodedCnnInput;

    fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn predict_proba(&self, input: &EncodedCnnInput) -> Result<Vec<F>> {
        let mut rng = crate::rng::seeded(0);
        Ok(self.forward_cache(&input.ids, false, &mut rng)?.trace.probabilities)
    }

    fn accumulate(
        &mut self,
        input: &EncodedCnnInput,
        label: usize,
        weight: F,
        scale: F,
        train: bool,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<F>)> {
        let cache = self.forward_cache(&input.ids, train, rng)?;
        let probs = cache.trace.probabilities.clone();
        let d_logits = logit_grad(&probs, label, weight, scale);
        let fine_tune = self.params.is_trainable(self.embedding);
        let d = self.config.dim;
        let emb = self.embedding.0;
        let mut params = std::mem::take(&mut self.params);
        let (values, grads) = params.split();
        let d_input = self.backward(values, &cache, &d_logits, Some(grads));
        if fine_tune {
            let g = params.grad_mut(ParamId(emb)).data_mut();
            for (i, id) in input.ids.iter().enumerate() {
                if *id != PAD_ID {
                    let row = *id as usize * d;
                    for k in 0..d {
                        g[row + k] += d_input[i * d + k];
                    }
                }
            }
        }
        self.params = params;
        Ok((neg_log_prob(&probs, label), probs))
    }
}

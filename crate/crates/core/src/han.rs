//! Hierarchical attention network: word-level bi-GRU with attention inside
//! each sentence, sentence-level bi-GRU with attention over the document.

use serde::{Deserialize, Serialize};

use crate::cnn::EMBEDDING_INIT;
use crate::embeddings::{copy_into, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::model::{logit_grad, neg_log_prob, Classifier};
use crate::numerics::{
    bi_gru, bi_gru_backward, dense, dense_backward, dropout, dropout_backward, glorot_bound,
    self_attention, self_attention_backward, softmax, uniform_tensor, AttentionCache,
    AttentionGrads, AttentionParams, BiGruCache, GruGrads, GruParams, ParamId, ParamSet, Scalar,
    Tensor,
};
use crate::rng::Rng;
use crate::textprep::{EncodedHanInput, PAD_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HanConfig {
    pub dim: usize,
    pub word_hidden: usize,
    pub sent_hidden: usize,
    pub word_att: usize,
    pub sent_att: usize,
    pub max_words: usize,
    pub max_sents: usize,
    pub dropout: f64,
    pub embedding_dropout: f64,
    pub num_classes: usize,
    pub vocab_size: usize,
    pub fine_tune_embeddings: bool,
}

impl Default for HanConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            word_hidden: 50,
            sent_hidden: 50,
            word_att: 100,
            sent_att: 100,
            max_words: 50,
            max_sents: 14,
            dropout: 0.5,
            embedding_dropout: 0.0,
            num_classes: 2,
            vocab_size: 2,
            fine_tune_embeddings: true,
        }
    }
}

impl HanConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.dim, self.word_hidden, self.sent_hidden, self.word_att, self.sent_att, self.max_words, self.max_sents];
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("han dimensions must be positive".into()));
        }
        if self.num_classes < 2 || self.vocab_size < 2 {
            return Err(Error::InvalidConfig("han needs K >= 2 and a vocabulary".into()));
        }
        for r in [self.dropout, self.embedding_dropout] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("dropout {r} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Names and shapes of every parameter, in registration order.
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (d, dw, ds) = (self.dim, self.word_hidden, self.sent_hidden);
        let mut out = vec![("embedding".to_string(), vec![self.vocab_size, d])];
        let gru = |prefix: &str, d_in: usize, d_h: usize| {
            vec![
                (format!("{prefix}.w"), vec![3 * d_h, d_in]),
                (format!("{prefix}.u"), vec![3 * d_h, d_h]),
                (format!("{prefix}.b"), vec![3 * d_h]),
            ]
        };
        let att = |prefix: &str, d_a: usize, d_h: usize| {
            vec![
                (format!("{prefix}.w"), vec![d_a, d_h]),
                (format!("{prefix}.b"), vec![d_a]),
                (format!("{prefix}.ctx"), vec![d_a]),
            ]
        };
        out.extend(gru("word_fw", d, dw));
        out.extend(gru("word_bw", d, dw));
        out.extend(att("word_att", self.word_att, 2 * dw));
        out.extend(gru("sent_fw", 2 * dw, ds));
        out.extend(gru("sent_bw", 2 * dw, ds));
        out.extend(att("sent_att", self.sent_att, 2 * ds));
        out.push(("dense.w".into(), vec![self.num_classes, 2 * ds]));
        out.push(("dense.b".into(), vec![self.num_classes]));
        out
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.layout()
            .iter()
            .filter(|(n, _)| self.fine_tune_embeddings || n != "embedding")
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

// Parameter indices in registration order.
const EMB: usize = 0;
const WORD_FW: usize = 1;
const WORD_BW: usize = 4;
const WORD_ATT: usize = 7;
const SENT_FW: usize = 10;
const SENT_BW: usize = 13;
const SENT_ATT: usize = 16;
const DENSE_W: usize = 19;
const DENSE_B: usize = 20;

#[derive(Debug, Clone)]
pub struct HanModel<F: Scalar = f32> {
    pub config: HanConfig,
    params: ParamSet<F>,
}

#[derive(Debug, Clone)]
pub struct HanForwardTrace<F> {
    pub probabilities: Vec<F>,
    pub logits: Vec<F>,
    /// `max_sents × max_words`, zero at padding and in empty sentences.
    pub word_alpha: Vec<F>,
    /// `max_sents`, zero for empty sentences.
    pub sentence_alpha: Vec<F>,
    /// `max_sents × 2·word_hidden`.
    pub sentence_vectors: Vec<F>,
    /// Document vector (`2·sent_hidden`) before dropout and the head.
    pub document: Vec<F>,
}

struct SentenceCache<F> {
    index: usize,
    x: Vec<F>,
    emb_mask: Vec<F>,
    mask: Vec<bool>,
    ann: Vec<F>,
    gru: BiGruCache<F>,
    att: AttentionCache<F>,
}

struct Cache<F> {
    sentences: Vec<SentenceCache<F>>,
    s_ann: Vec<F>,
    s_gru: BiGruCache<F>,
    s_att: AttentionCache<F>,
    drop_mask: Vec<F>,
    hidden: Vec<F>,
    trace: HanForwardTrace<F>,
}

fn gru<F: Scalar>(v: &[Tensor<F>], at: usize, d_in: usize, d_h: usize) -> Result<GruParams<'_, F>> {
    GruParams::new(v[at].data(), v[at + 1].data(), v[at + 2].data(), d_in, d_h)
}

fn att<F: Scalar>(v: &[Tensor<F>], at: usize) -> AttentionParams<'_, F> {
    AttentionParams { w: v[at].data(), b: v[at + 1].data(), ctx: v[at + 2].data() }
}

/// Mutable gradients of a forward/backward GRU pair and the attention that follows.
fn level_grads<F: Scalar>(
    g: &mut [Tensor<F>],
    fw: usize,
) -> (GruGrads<'_, F>, GruGrads<'_, F>, AttentionGrads<'_, F>) {
    let idx: [usize; 9] = std::array::from_fn(|i| fw + i);
    let [a, b, c, d, e, f, w, x, y] = g.get_disjoint_mut(idx).expect("disjoint gradient blocks");
    (
        GruGrads { w: a.data_mut(), u: b.data_mut(), b: c.data_mut() },
        GruGrads { w: d.data_mut(), u: e.data_mut(), b: f.data_mut() },
        AttentionGrads { w: w.data_mut(), b: x.data_mut(), ctx: y.data_mut() },
    )
}

impl<F: Scalar> HanModel<F> {
    /// Weight matrices uniform in `±√(6/(fan_in+fan_out))`, biases zero,
    /// embeddings uniform in ±0.05 with the padding row zero.
    pub fn new(config: HanConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, shape) in config.layout() {
            let t = if name == "embedding" {
                let mut e = uniform_tensor::<F, _>(&shape, EMBEDDING_INIT, rng);
                e.row_mut(0).iter_mut().for_each(|x| *x = F::zero());
                e
            } else if shape.len() == 2 {
                uniform_tensor(&shape, glorot_bound(shape[1], shape[0]), rng)
            } else if name.ends_with(".ctx") {
                uniform_tensor(&shape, glorot_bound(shape[0], 1), rng)
            } else {
                Tensor::zeros(&shape)
            };
            let trainable = name != "embedding" || config.fine_tune_embeddings;
            params.register(&name, t, trainable);
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: HanConfig, mut params: ParamSet<F>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if params.len() != layout.len() {
            return Err(Error::Checkpoint(format!("han expects {} tensors", layout.len())));
        }
        for (i, (name, shape)) in layout.iter().enumerate() {
            if params.name(ParamId(i)) != name || params.value(ParamId(i)).shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!("han tensor `{name}` missing or misshapen")));
            }
        }
        params.set_trainable(ParamId(EMB), config.fine_tune_embeddings);
        Ok(Self { config, params })
    }

    pub fn into_params(self) -> ParamSet<F> {
        self.params
    }

    pub fn cast<G: Scalar>(&self) -> HanModel<G> {
        HanModel { config: self.config.clone(), params: self.params.cast() }
    }

    pub fn set_embeddings(&mut self, m: &EmbeddingMatrix) -> Result<()> {
        let d = self.config.dim;
        let mut buf: Vec<f32> = self.params.value(ParamId(EMB)).data().iter().map(|x| x.f64() as f32).collect();
        copy_into(m, &mut buf, d)?;
        for (dst, src) in self.params.value_mut(ParamId(EMB)).data_mut().iter_mut().zip(buf) {
            *dst = F::of(src as f64);
        }
        Ok(())
    }

    fn forward_cache(&self, ids: &[u32], train: bool, rng: &mut Rng) -> Result<Cache<F>> {
        let c = &self.config;
        let (mw, ms, d) = (c.max_words, c.max_sents, c.dim);
        let (dw, ds) = (c.word_hidden, c.sent_hidden);
        if ids.len() != mw * ms {
            return Err(Error::Shape(format!("han input has {} ids, expected {ms}×{mw}", ids.len())));
        }
        let v = self.params.values();
        let emb = &v[EMB];
        let (wfw, wbw, watt) = (gru(v, WORD_FW, d, dw)?, gru(v, WORD_BW, d, dw)?, att(v, WORD_ATT));
        let mut sentences = Vec::new();
        let mut s_vecs = vec![F::zero(); ms * 2 * dw];
        let mut word_alpha = vec![F::zero(); ms * mw];
        let mut s_mask = vec![false; ms];
        for i in 0..ms {
            let row = &ids[i * mw..(i + 1) * mw];
            let mask: Vec<bool> = row.iter().map(|id| *id != PAD_ID).collect();
            if !mask.contains(&true) {
                continue;
            }
            s_mask[i] = true;
            let mut x = vec![F::zero(); mw * d];
            for (j, id) in row.iter().enumerate() {
                if *id == PAD_ID {
                    continue;
                }
                if *id as usize >= c.vocab_size {
                    return Err(Error::Shape(format!("token id {id} outside vocabulary")));
                }
                x[j * d..(j + 1) * d].copy_from_slice(emb.row(*id as usize));
            }
            let (x, emb_mask) = dropout(&x, c.embedding_dropout, train, rng);
            let (ann, g) = bi_gru(&x, &mask, &wfw, &wbw)?;
            let (sv, a) = self_attention(&ann, 2 * dw, &watt, &mask)?;
            s_vecs[i * 2 * dw..(i + 1) * 2 * dw].copy_from_slice(&sv);
            word_alpha[i * mw..(i + 1) * mw].copy_from_slice(&a.alpha);
            sentences.push(SentenceCache { index: i, x, emb_mask, mask, ann, gru: g, att: a });
        }
        if sentences.is_empty() {
            return Err(Error::Shape("document has no non-empty sentence".into()));
        }
        let (sfw, sbw, satt) = (gru(v, SENT_FW, 2 * dw, ds)?, gru(v, SENT_BW, 2 * dw, ds)?, att(v, SENT_ATT));
        let (s_ann, s_gru) = bi_gru(&s_vecs, &s_mask, &sfw, &sbw)?;
        let (document, s_att) = self_attention(&s_ann, 2 * ds, &satt, &s_mask)?;
        let (hidden, drop_mask) = dropout(&document, c.dropout, train, rng);
        let logits = dense(&hidden, v[DENSE_W].data(), v[DENSE_B].data());
        let probabilities = softmax(&logits);
        if probabilities.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("han forward".into()));
        }
        let sentence_alpha = s_att.alpha.clone();
        Ok(Cache {
            sentences,
            s_ann,
            s_gru,
            s_att,
            drop_mask,
            hidden,
            trace: HanForwardTrace {
                probabilities,
                logits,
                word_alpha,
                sentence_alpha,
                sentence_vectors: s_vecs,
                document,
            },
        })
    }

    pub fn forward(&self, input: &EncodedHanInput, train: bool, rng: &mut Rng) -> Result<HanForwardTrace<F>> {
        self.check_shape(input)?;
        Ok(self.forward_cache(&input.ids, train, rng)?.trace)
    }

    fn check_shape(&self, input: &EncodedHanInput) -> Result<()> {
        if input.max_sents != self.config.max_sents || input.max_words != self.config.max_words {
            return Err(Error::Shape(format!(
                "han input is {}×{}, model expects {}×{}",
                input.max_sents, input.max_words, self.config.max_sents, self.config.max_words
            )));
        }
        Ok(())
    }

    /// Evaluation-mode document vector (length `2·sent_hidden`).
    pub fn document_embedding(&self, input: &EncodedHanInput) -> Result<Vec<F>> {
        let mut rng = crate::rng::seeded(0);
        Ok(self.forward(input, false, &mut rng)?.document)
    }

    fn backward(
        &self,
        values: &[Tensor<F>],
        grads: &mut [Tensor<F>],
        cache: &Cache<F>,
        ids: &[u32],
        d_logits: &[F],
        fine_tune: bool,
    ) -> Result<()> {
        let c = &self.config;
        let (d, dw, ds) = (c.dim, c.word_hidden, c.sent_hidden);
        let d_hidden = {
            let [gw, gb] = grads.get_disjoint_mut([DENSE_W, DENSE_B]).expect("disjoint");
            dense_backward(&cache.hidden, values[DENSE_W].data(), d_logits, gw.data_mut(), gb.data_mut())
        };
        let d_doc = dropout_backward(&cache.drop_mask, &d_hidden);
        let d_svecs = {
            let (sfw, sbw, satt) = (gru(values, SENT_FW, 2 * dw, ds)?, gru(values, SENT_BW, 2 * dw, ds)?, att(values, SENT_ATT));
            let (mut gfw, mut gbw, mut gatt) = level_grads(grads, SENT_FW);
            let d_sann = self_attention_backward(&cache.s_ann, 2 * ds, &satt, &cache.s_att, &d_doc, &mut gatt);
            let s_vecs = &cache.trace.sentence_vectors;
            bi_gru_backward(s_vecs, &cache.s_gru, &d_sann, &sfw, &sbw, &mut gfw, &mut gbw)
        };
        let (wfw, wbw, watt) = (gru(values, WORD_FW, d, dw)?, gru(values, WORD_BW, d, dw)?, att(values, WORD_ATT));
        let mut d_inputs = Vec::with_capacity(cache.sentences.len());
        {
            let (mut gfw, mut gbw, mut gatt) = level_grads(grads, WORD_FW);
            for sc in &cache.sentences {
                let i = sc.index;
                let d_sv = &d_svecs[i * 2 * dw..(i + 1) * 2 * dw];
                let d_ann = self_attention_backward(&sc.ann, 2 * dw, &watt, &sc.att, d_sv, &mut gatt);
                let d_x = bi_gru_backward(&sc.x, &sc.gru, &d_ann, &wfw, &wbw, &mut gfw, &mut gbw);
                d_inputs.push(dropout_backward(&sc.emb_mask, &d_x));
            }
        }
        if fine_tune {
            let g = grads[EMB].data_mut();
            let mw = c.max_words;
            for (sc, d_x) in cache.sentences.iter().zip(&d_inputs) {
                for (j, m) in sc.mask.iter().enumerate() {
                    if *m {
                        let row = ids[sc.index * mw + j] as usize * d;
                        for k in 0..d {
                            g[row + k] += d_x[j * d + k];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-token attention score `word_alpha[i][j] · sentence_alpha[i]`
/// (`max_sents × max_words`).
pub fn word_scores<F: Scalar>(trace: &HanForwardTrace<F>) -> Vec<f64> {
    let ms = trace.sentence_alpha.len();
    let mw = trace.word_alpha.len() / ms.max(1);
    (0..ms * mw)
        .map(|p| trace.word_alpha[p].f64() * trace.sentence_alpha[p / mw].f64())
        .collect()
}

impl<F: Scalar> Classifier<F> for HanModel<F> {
    type Input = EncodedHanInput;

    fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn predict_proba(&self, input: &EncodedHanInput) -> Result<Vec<F>> {
        let mut rng = crate::rng::seeded(0);
        Ok(self.forward(input, false, &mut rng)?.probabilities)
    }

    fn accumulate(
        &mut self,
        input: &EncodedHanInput,
        label: usize,
        weight: F,
        scale: F,
        train: bool,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<F>)> {
        self.check_shape(input)?;
        let cache = self.forward_cache(&input.ids, train, rng)?;
        let probs = cache.trace.probabilities.clone();
        let d_logits = logit_grad(&probs, label, weight, scale);
        let mut params = std::mem::take(&mut self.params);
        let (values, grads) = params.split();
        let fine_tune = self.config.fine_tune_embeddings;
        let res = self.backward(values, grads, &cache, &input.ids, &d_logits, fine_tune);
        self.params = params;
        res?;
        Ok((neg_log_prob(&probs, label), probs))
    }
}

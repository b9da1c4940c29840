//! Finite-difference checks for every differentiable op and for both full
//! models, shared by the unit tests and the acceptance suite.

use rand::Rng;

use super::*;
use crate::cnn::{CnnConfig, CnnModel};
use crate::han::{HanConfig, HanModel};
use crate::model::{model_grad_check, Classifier};
use crate::rng::{seeded, Rng as ChaCha};
use crate::textprep::{EncodedCnnInput, EncodedHanInput};

pub const TOL: f64 = 1e-4;
pub const EPS: f64 = 1e-4;

fn rv(rng: &mut ChaCha, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn lin(c: &[f64], y: &[f64]) -> f64 {
    c.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Largest relative error per op for one seed, on small dimensions
/// (d = 8, d_h = 6, s = 12).
pub fn op_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = seeded(seed);
    let mut out = Vec::new();

    let (n_in, n_out) = (5, 3);
    let params = vec![rv(&mut rng, n_in), rv(&mut rng, n_out * n_in), rv(&mut rng, n_out)];
    let c = rv(&mut rng, n_out);
    out.push((
        "dense",
        grad_check(
            &params,
            |p| {
                let y = dense(&p[0], &p[1], &p[2]);
                let mut dw = vec![0.0; p[1].len()];
                let mut db = vec![0.0; p[2].len()];
                let dx = dense_backward(&p[0], &p[1], &c, &mut dw, &mut db);
                (lin(&c, &y), vec![dx, dw, db])
            },
            EPS,
        ),
    ));

    let x = rv(&mut rng, 6);
    let c = rv(&mut rng, 6);
    out.push((
        "tanh",
        grad_check(
            &[x.clone()],
            |p| {
                let y = tanh(&p[0]);
                (lin(&c, &y), vec![tanh_backward(&y, &c)])
            },
            EPS,
        ),
    ));
    // keep ReLU inputs away from the kink
    let xr: Vec<f64> = x.iter().map(|v| if v.abs() < 0.05 { v + 0.1 } else { *v }).collect();
    out.push((
        "relu",
        grad_check(
            &[xr],
            |p| {
                let y = relu(&p[0]);
                (lin(&c, &y), vec![relu_backward(&y, &c)])
            },
            EPS,
        ),
    ));

    let x = rv(&mut rng, 4);
    let c = rv(&mut rng, 4);
    let mask = [true, false, true, true];
    out.push((
        "softmax",
        grad_check(
            &[x.clone()],
            |p| {
                let y = softmax(&p[0]);
                (lin(&c, &y), vec![softmax_backward(&y, &c)])
            },
            EPS,
        ),
    ));
    out.push((
        "masked_softmax",
        grad_check(
            &[x],
            |p| {
                let y = masked_softmax(&p[0], &mask);
                (lin(&c, &y), vec![softmax_backward(&y, &c)])
            },
            EPS,
        ),
    ));

    let x = rv(&mut rng, 8);
    let c = rv(&mut rng, 8);
    let (_, mask) = dropout(&x, 0.5, true, &mut seeded(seed + 100));
    out.push((
        "dropout",
        grad_check(
            &[x],
            |p| {
                let y: Vec<f64> = p[0].iter().zip(&mask).map(|(a, m)| a * m).collect();
                (lin(&c, &y), vec![dropout_backward(&mask, &c)])
            },
            EPS,
        ),
    ));

    let (s, d, h, n_f) = (12, 8, 3, 4);
    let rows = s - h + 1;
    let params = vec![rv(&mut rng, s * d), rv(&mut rng, h * d * n_f), rv(&mut rng, n_f)];
    let c = rv(&mut rng, n_f);
    out.push((
        "conv_relu_maxpool",
        grad_check(
            &params,
            |p| {
                let map = conv1d_valid(&p[0], s, d, &p[1], h, &p[2], None).unwrap();
                let act = relu(&map);
                let (pooled, arg) = max_pool_columns(&act, rows, n_f);
                let d_act = max_pool_columns_backward(&arg, rows, &c);
                let d_map = relu_backward(&act, &d_act);
                let mut di = vec![0.0; p[0].len()];
                let mut df = vec![0.0; p[1].len()];
                let mut db = vec![0.0; n_f];
                conv1d_valid_backward(&p[0], s, d, &p[1], h, &d_map, &mut di, &mut df, &mut db);
                (lin(&c, &pooled), vec![di, df, db])
            },
            EPS,
        ),
    ));

    let (din, dh) = (8, 6);
    let params = vec![
        rv(&mut rng, din),
        rv(&mut rng, dh),
        rv(&mut rng, 3 * dh * din),
        rv(&mut rng, 3 * dh * dh),
        rv(&mut rng, 3 * dh),
    ];
    let c = rv(&mut rng, dh);
    out.push((
        "gru_step",
        grad_check(
            &params,
            |p| {
                let gp = GruParams::new(&p[2], &p[3], &p[4], din, dh).unwrap();
                let (h, cache) = gru_step(&gp, &p[0], &p[1]).unwrap();
                let mut gw = vec![0.0; p[2].len()];
                let mut gu = vec![0.0; p[3].len()];
                let mut gb = vec![0.0; p[4].len()];
                let mut dx = vec![0.0; din];
                let dh_prev = {
                    let mut g = GruGrads { w: &mut gw, u: &mut gu, b: &mut gb };
                    gru_step_backward(&gp, &p[0], &p[1], &cache, &c, &mut g, &mut dx)
                };
                (lin(&c, &h), vec![dx, dh_prev, gw, gu, gb])
            },
            EPS,
        ),
    ));

    let t = 5;
    let mask = [true, true, false, true, false];
    let mut params = vec![rv(&mut rng, t * din)];
    for _ in 0..2 {
        params.extend([rv(&mut rng, 3 * dh * din), rv(&mut rng, 3 * dh * dh), rv(&mut rng, 3 * dh)]);
    }
    let c = rv(&mut rng, t * 2 * dh);
    out.push((
        "bi_gru",
        grad_check(
            &params,
            |p| {
                let fw = GruParams::new(&p[1], &p[2], &p[3], din, dh).unwrap();
                let bw = GruParams::new(&p[4], &p[5], &p[6], din, dh).unwrap();
                let (out, cache) = bi_gru(&p[0], &mask, &fw, &bw).unwrap();
                let mut g: Vec<Vec<f64>> = p[1..].iter().map(|v| vec![0.0; v.len()]).collect();
                let dseq = {
                    let [a, b, cc, d, e, f] = g.get_disjoint_mut([0, 1, 2, 3, 4, 5]).unwrap();
                    let mut fg = GruGrads { w: a, u: b, b: cc };
                    let mut bg = GruGrads { w: d, u: e, b: f };
                    bi_gru_backward(&p[0], &cache, &c, &fw, &bw, &mut fg, &mut bg)
                };
                let mut all = vec![dseq];
                all.extend(g);
                (lin(&c, &out), all)
            },
            EPS,
        ),
    ));

    let (da, t) = (5, 4);
    let mask = [true, true, false, true];
    let params = vec![rv(&mut rng, t * dh), rv(&mut rng, da * dh), rv(&mut rng, da), rv(&mut rng, da)];
    let c = rv(&mut rng, dh);
    out.push((
        "attention",
        grad_check(
            &params,
            |p| {
                let ap = AttentionParams { w: &p[1], b: &p[2], ctx: &p[3] };
                let (att, cache) = self_attention(&p[0], dh, &ap, &mask).unwrap();
                let mut gw = vec![0.0; p[1].len()];
                let mut gb = vec![0.0; da];
                let mut gc = vec![0.0; da];
                let dann = {
                    let mut g = AttentionGrads { w: &mut gw, b: &mut gb, ctx: &mut gc };
                    self_attention_backward(&p[0], dh, &ap, &cache, &c, &mut g)
                };
                (lin(&c, &att), vec![dann, gw, gb, gc])
            },
            EPS,
        ),
    ));
    out
}

/// Small CNN used by the model-level check: s = 12, d = 8, K = 3.
pub fn small_cnn(k: usize, v: usize) -> CnnConfig {
    CnnConfig { s: 12, dim: 8, widths: vec![2, 3, 4], n_filters: 4, dropout: 0.5, num_classes: k, vocab_size: v, fine_tune_embeddings: true }
}

/// Small HAN used by the model-level check: d = 8, d_h = 6, K = 3.
pub fn small_han(k: usize, v: usize, ms: usize, mw: usize) -> HanConfig {
    HanConfig {
        dim: 8,
        word_hidden: 6,
        sent_hidden: 6,
        word_att: 5,
        sent_att: 5,
        max_words: mw,
        max_sents: ms,
        dropout: 0.5,
        embedding_dropout: 0.0,
        num_classes: k,
        vocab_size: v,
        fine_tune_embeddings: true,
    }
}

pub fn random_cnn_input(rng: &mut ChaCha, s: usize, len: usize, v: u32) -> EncodedCnnInput {
    let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(1..v)).collect();
    ids.resize(s, 0);
    EncodedCnnInput { ids }
}

pub fn random_han_input(rng: &mut ChaCha, ms: usize, mw: usize, v: u32, min_words: usize) -> EncodedHanInput {
    let mut ids = vec![0u32; ms * mw];
    let n_s = rng.random_range(1..=ms);
    for i in 0..n_s {
        let n_w = rng.random_range(min_words..=mw);
        for j in 0..n_w {
            ids[i * mw + j] = rng.random_range(1..v);
        }
    }
    EncodedHanInput { ids, max_sents: ms, max_words: mw }
}

/// Biases to ±0.3 so all-pad windows and zero states are off the kinks.
fn randomize_biases<M: Classifier<f64>>(m: &mut M, rng: &mut ChaCha) {
    for t in m.params_mut().split_values_mut().0.iter_mut() {
        if t.shape().len() == 1 {
            t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.3..0.3));
        }
    }
}

/// True when a pooled value sits within 1e-3 of the ReLU corner or of a
/// competing row, where central differences straddle a kink.
pub fn cnn_near_kink(m: &CnnModel<f64>, x: &EncodedCnnInput) -> bool {
    let t = m.forward(x, false, &mut seeded(0)).expect("forward");
    let nf = m.config.n_filters;
    t.feature_maps.iter().any(|map| {
        (0..nf).any(|f| {
            let col: Vec<f64> = map.iter().skip(f).step_by(nf).copied().collect();
            let top = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (top > 0.0 && top < 1e-3) || col.iter().any(|v| *v < top && top - v < 1e-3)
        })
    })
}

/// Full CNN check, training mode with dropout replayed; inputs near a kink
/// are redrawn.
pub fn cnn_model_error(seed: u64) -> f64 {
    let mut rng = crate::rng::component_rng(seed, "gradsuite.cnn");
    let mut m = CnnModel::<f64>::new(small_cnn(3, 15), &mut seeded(seed)).expect("valid config");
    randomize_biases(&mut m, &mut rng);
    let examples: Vec<_> = (0..3)
        .map(|i| loop {
            let len = rng.random_range(4..=12);
            let x = random_cnn_input(&mut rng, 12, len, 15);
            if !cnn_near_kink(&m, &x) {
                break (x, i % 3, 1.0 + i as f64);
            }
        })
        .collect();
    model_grad_check(&mut m, &examples, true, seed)
}

/// Gradient magnitude below which eps = 1e-4 central differences on an O(1)
/// loss cannot reach 1e-4 relative error.
pub const FD_FLOOR: f64 = 3e-8;

/// Full HAN check; `None` when some nonzero gradient coordinate is below
/// [`FD_FLOOR`] and the draw cannot be judged.
pub fn han_model_error(seed: u64) -> Option<f64> {
    let mut rng = crate::rng::component_rng(seed, "gradsuite.han");
    let cfg = HanConfig { embedding_dropout: 0.2, ..small_han(3, 12, 3, 5) };
    let mut m = HanModel::<f64>::new(cfg, &mut seeded(seed)).expect("valid config");
    randomize_biases(&mut m, &mut rng);
    // Two or more words per sentence: in one-step sentences the reset gate
    // sees h = 0 and its gradients shrink to the noise floor.
    let examples: Vec<_> = (0..2).map(|i| (random_han_input(&mut rng, 3, 5, 12, 2), i % 3, 1.0 + i as f64)).collect();

    m.params_mut().zero_grads();
    let mut r = seeded(seed);
    for (x, y, w) in &examples {
        m.accumulate(x, *y, *w, 0.5, true, &mut r).expect("forward");
    }
    let p = m.params();
    let tiny = (0..p.len())
        .map(ParamId)
        .filter(|id| p.is_trainable(*id))
        .any(|id| p.grad(id).data().iter().any(|g| *g != 0.0 && g.abs() < FD_FLOOR));
    m.params_mut().zero_grads();
    if tiny {
        return None;
    }
    Some(model_grad_check(&mut m, &examples, true, seed))
}

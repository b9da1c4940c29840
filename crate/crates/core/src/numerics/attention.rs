//! Additive self-attention with a trainable context vector:
//! `u_t = tanh(W h_t + b)`, `α = softmax_t(u_tᵀ u_ctx)`, `att = Σ α_t h_t`.

use super::ops::{axpy, dot, masked_softmax, matvec_acc, outer_acc, softmax_backward};
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
pub struct AttentionParams<'a, F> {
    /// `d_a × d_h`
    pub w: &'a [F],
    pub b: &'a [F],
    /// context vector, `d_a`
    pub ctx: &'a [F],
}

pub struct AttentionGrads<'a, F> {
    pub w: &'a mut [F],
    pub b: &'a mut [F],
    pub ctx: &'a mut [F],
}

#[derive(Debug, Clone)]
pub struct AttentionCache<F> {
    pub alpha: Vec<F>,
    /// `T × d_a` hidden projections (zero rows where masked)
    u: Vec<F>,
}

/// Returns the attended vector (`d_h`) and the cache holding α.
pub fn self_attention<F: Scalar>(
    ann: &[F],
    d_h: usize,
    p: &AttentionParams<'_, F>,
    mask: &[bool],
) -> Result<(Vec<F>, AttentionCache<F>)> {
    let d_a = p.b.len();
    let t_len = mask.len();
    if ann.len() != t_len * d_h || p.w.len() != d_a * d_h || p.ctx.len() != d_a {
        return Err(Error::Shape(format!(
            "attention over {t_len}×{d_h} with d_a={d_a}"
        )));
    }
    let mut u = vec![F::zero(); t_len * d_a];
    let mut scores = vec![F::zero(); t_len];
    for t in 0..t_len {
        if !mask[t] {
            continue;
        }
        let ut = &mut u[t * d_a..(t + 1) * d_a];
        ut.copy_from_slice(p.b);
        matvec_acc(p.w, d_a, d_h, &ann[t * d_h..(t + 1) * d_h], ut);
        ut.iter_mut().for_each(|v| *v = v.tanh());
        scores[t] = dot(ut, p.ctx);
    }
    let alpha = masked_softmax(&scores, mask);
    let mut att = vec![F::zero(); d_h];
    for t in 0..t_len {
        if alpha[t] != F::zero() {
            axpy(alpha[t], &ann[t * d_h..(t + 1) * d_h], &mut att);
        }
    }
    Ok((att, AttentionCache { alpha, u }))
}

/// Backward of [`self_attention`] given `∂L/∂att`. Returns `∂L/∂ann`.
pub fn self_attention_backward<F: Scalar>(
    ann: &[F],
    d_h: usize,
    p: &AttentionParams<'_, F>,
    cache: &AttentionCache<F>,
    d_att: &[F],
    grads: &mut AttentionGrads<'_, F>,
) -> Vec<F> {
    let d_a = p.b.len();
    let t_len = cache.alpha.len();
    let mut d_ann = vec![F::zero(); ann.len()];
    let d_alpha: Vec<F> = (0..t_len)
        .map(|t| dot(&ann[t * d_h..(t + 1) * d_h], d_att))
        .collect();
    for t in 0..t_len {
        if cache.alpha[t] != F::zero() {
            axpy(cache.alpha[t], d_att, &mut d_ann[t * d_h..(t + 1) * d_h]);
        }
    }
    let d_score = softmax_backward(&cache.alpha, &d_alpha);
    for t in 0..t_len {
        if d_score[t] == F::zero() {
            continue;
        }
        let ut = &cache.u[t * d_a..(t + 1) * d_a];
        axpy(d_score[t], ut, grads.ctx);
        let da: Vec<F> = (0..d_a)
            .map(|k| d_score[t] * p.ctx[k] * (F::one() - ut[k] * ut[k]))
            .collect();
        let ht = &ann[t * d_h..(t + 1) * d_h];
        outer_acc(grads.w, d_a, d_h, &da, ht);
        for (b, g) in grads.b.iter_mut().zip(&da) {
            *b += *g;
        }
        let dh = &mut d_ann[t * d_h..(t + 1) * d_h];
        for (k, g) in da.iter().enumerate() {
            axpy(*g, &p.w[k * d_h..(k + 1) * d_h], dh);
        }
    }
    d_ann
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn single_element_gets_all_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (d_h, d_a) = (4, 3);
        let (w, b, c) = (rv(&mut rng, d_a * d_h), rv(&mut rng, d_a), rv(&mut rng, d_a));
        let p = AttentionParams { w: &w, b: &b, ctx: &c };
        let h = rv(&mut rng, d_h);
        let (att, cache) = self_attention(&h, d_h, &p, &[true]).unwrap();
        assert_eq!(cache.alpha, vec![1.0]);
        assert_eq!(att, h);
    }

    #[test]
    fn identical_annotations_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d_h, d_a) = (4, 3);
        let (w, b, c) = (rv(&mut rng, d_a * d_h), rv(&mut rng, d_a), rv(&mut rng, d_a));
        let p = AttentionParams { w: &w, b: &b, ctx: &c };
        let h = rv(&mut rng, d_h);
        let ann = [h.clone(), h].concat();
        let (_, cache) = self_attention(&ann, d_h, &p, &[true, true]).unwrap();
        assert_eq!(cache.alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn alpha_matches_direct_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d_h, d_a, t) = (5, 4, 7);
        for _ in 0..20 {
            let (w, b, c) = (rv(&mut rng, d_a * d_h), rv(&mut rng, d_a), rv(&mut rng, d_a));
            let p = AttentionParams { w: &w, b: &b, ctx: &c };
            let ann = rv(&mut rng, t * d_h);
            let mask = [true, false, true, true, true, false, true];
            let (att, cache) = self_attention(&ann, d_h, &p, &mask).unwrap();
            let ex: Vec<f64> = (0..t)
                .map(|i| {
                    if !mask[i] {
                        return 0.0;
                    }
                    let mut s = 0.0;
                    for k in 0..d_a {
                        let mut a = b[k];
                        for j in 0..d_h {
                            a += w[k * d_h + j] * ann[i * d_h + j];
                        }
                        s += a.tanh() * c[k];
                    }
                    s.exp()
                })
                .collect();
            let z: f64 = ex.iter().sum();
            for i in 0..t {
                assert_abs_diff_eq!(cache.alpha[i], ex[i] / z, epsilon = 1e-6);
            }
            for j in 0..d_h {
                let want: f64 = (0..t).map(|i| ex[i] / z * ann[i * d_h + j]).sum();
                assert_abs_diff_eq!(att[j], want, epsilon = 1e-6);
            }
        }
    }
}

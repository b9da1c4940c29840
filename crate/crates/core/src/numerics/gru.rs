//! Gated recurrent unit and its bidirectional wrapper.
//!
//! Gate equations, with gate blocks stacked in the order (z, r, h):
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! ĥ  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ ĥ
//! ```

use super::ops::{axpy, dot, outer_acc, sigmoid};
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// Borrowed view of one GRU's parameters.
/// `w: 3·d_h × d_in`, `u: 3·d_h × d_h`, `b: 3·d_h`.
#[derive(Clone, Copy)]
pub struct GruParams<'a, F> {
    pub w: &'a [F],
    pub u: &'a [F],
    pub b: &'a [F],
    pub d_in: usize,
    pub d_h: usize,
}

/// Gradient accumulators matching [`GruParams`].
pub struct GruGrads<'a, F> {
    pub w: &'a mut [F],
    pub u: &'a mut [F],
    pub b: &'a mut [F],
}

impl<'a, F: Scalar> GruParams<'a, F> {
    pub fn new(w: &'a [F], u: &'a [F], b: &'a [F], d_in: usize, d_h: usize) -> Result<Self> {
        if w.len() != 3 * d_h * d_in || u.len() != 3 * d_h * d_h || b.len() != 3 * d_h {
            return Err(Error::Shape(format!(
                "gru params for d_in={d_in}, d_h={d_h}: w={}, u={}, b={}",
                w.len(),
                u.len(),
                b.len()
            )));
        }
        Ok(Self { w, u, b, d_in, d_h })
    }

    fn w_row(&self, i: usize) -> &[F] {
        &self.w[i * self.d_in..(i + 1) * self.d_in]
    }

    fn u_row(&self, i: usize) -> &[F] {
        &self.u[i * self.d_h..(i + 1) * self.d_h]
    }
}

/// Intermediates of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruStepCache<F> {
    pub z: Vec<F>,
    pub r: Vec<F>,
    pub hhat: Vec<F>,
    pub rh: Vec<F>,
}

pub fn gru_step<F: Scalar>(
    p: &GruParams<'_, F>,
    x: &[F],
    h_prev: &[F],
) -> Result<(Vec<F>, GruStepCache<F>)> {
    let dh = p.d_h;
    if x.len() != p.d_in || h_prev.len() != dh {
        return Err(Error::Shape(format!(
            "gru step input {} / hidden {} vs d_in={}, d_h={}",
            x.len(),
            h_prev.len(),
            p.d_in,
            dh
        )));
    }
    let mut z = vec![F::zero(); dh];
    let mut r = vec![F::zero(); dh];
    for i in 0..dh {
        z[i] = sigmoid(dot(p.w_row(i), x) + dot(p.u_row(i), h_prev) + p.b[i]);
        r[i] = sigmoid(dot(p.w_row(dh + i), x) + dot(p.u_row(dh + i), h_prev) + p.b[dh + i]);
    }
    let rh: Vec<F> = r.iter().zip(h_prev).map(|(a, b)| *a * *b).collect();
    let mut hhat = vec![F::zero(); dh];
    let mut h = vec![F::zero(); dh];
    for i in 0..dh {
        let a = dot(p.w_row(2 * dh + i), x) + dot(p.u_row(2 * dh + i), &rh) + p.b[2 * dh + i];
        hhat[i] = a.tanh();
        h[i] = (F::one() - z[i]) * h_prev[i] + z[i] * hhat[i];
    }
    Ok((h, GruStepCache { z, r, hhat, rh }))
}

/// Backward of one step. Accumulates parameter gradients and adds the input
/// gradient into `dx`; returns `∂L/∂h_prev`.
pub fn gru_step_backward<F: Scalar>(
    p: &GruParams<'_, F>,
    x: &[F],
    h_prev: &[F],
    cache: &GruStepCache<F>,
    dh_out: &[F],
    grads: &mut GruGrads<'_, F>,
    dx: &mut [F],
) -> Vec<F> {
    let d_h = p.d_h;
    let d_in = p.d_in;
    let mut dh_prev: Vec<F> = (0..d_h)
        .map(|i| dh_out[i] * (F::one() - cache.z[i]))
        .collect();
    // candidate pre-activation
    let da_h: Vec<F> = (0..d_h)
        .map(|i| {
            let dhhat = dh_out[i] * cache.z[i];
            dhhat * (F::one() - cache.hhat[i] * cache.hhat[i])
        })
        .collect();
    // update gate pre-activation
    let da_z: Vec<F> = (0..d_h)
        .map(|i| {
            let dz = dh_out[i] * (cache.hhat[i] - h_prev[i]);
            dz * cache.z[i] * (F::one() - cache.z[i])
        })
        .collect();

    let w_h = &p.w[2 * d_h * d_in..];
    let u_h = &p.u[2 * d_h * d_h..];
    outer_acc(&mut grads.w[2 * d_h * d_in..], d_h, d_in, &da_h, x);
    outer_acc(&mut grads.u[2 * d_h * d_h..], d_h, d_h, &da_h, &cache.rh);
    let mut d_rh = vec![F::zero(); d_h];
    for i in 0..d_h {
        grads.b[2 * d_h + i] += da_h[i];
        if da_h[i] != F::zero() {
            axpy(da_h[i], &w_h[i * d_in..(i + 1) * d_in], dx);
            axpy(da_h[i], &u_h[i * d_h..(i + 1) * d_h], &mut d_rh);
        }
    }
    let da_r: Vec<F> = (0..d_h)
        .map(|i| {
            dh_prev[i] += d_rh[i] * cache.r[i];
            let dr = d_rh[i] * h_prev[i];
            dr * cache.r[i] * (F::one() - cache.r[i])
        })
        .collect();

    outer_acc(&mut grads.w[..d_h * d_in], d_h, d_in, &da_z, x);
    outer_acc(&mut grads.w[d_h * d_in..2 * d_h * d_in], d_h, d_in, &da_r, x);
    outer_acc(&mut grads.u[..d_h * d_h], d_h, d_h, &da_z, h_prev);
    outer_acc(&mut grads.u[d_h * d_h..2 * d_h * d_h], d_h, d_h, &da_r, h_prev);
    for i in 0..d_h {
        grads.b[i] += da_z[i];
        grads.b[d_h + i] += da_r[i];
        if da_z[i] != F::zero() {
            axpy(da_z[i], p.w_row(i), dx);
            axpy(da_z[i], p.u_row(i), &mut dh_prev);
        }
        if da_r[i] != F::zero() {
            axpy(da_r[i], p.w_row(d_h + i), dx);
            axpy(da_r[i], p.u_row(d_h + i), &mut dh_prev);
        }
    }
    dh_prev
}

/// Cache of a unidirectional pass: the hidden state entering each processed
/// step and that step's gate values, in processing order.
#[derive(Debug, Clone)]
struct DirCache<F> {
    steps: Vec<usize>,
    h_in: Vec<Vec<F>>,
    cache: Vec<GruStepCache<F>>,
}

#[derive(Debug, Clone)]
pub struct BiGruCache<F> {
    fw: DirCache<F>,
    bw: DirCache<F>,
}

fn run_direction<F: Scalar>(
    p: &GruParams<'_, F>,
    seq: &[F],
    steps: Vec<usize>,
    out: &mut [F],
    offset: usize,
) -> Result<DirCache<F>> {
    let d_in = p.d_in;
    let d_h = p.d_h;
    let width = 2 * d_h;
    let mut h = vec![F::zero(); d_h];
    let mut h_in = Vec::with_capacity(steps.len());
    let mut caches = Vec::with_capacity(steps.len());
    for &t in &steps {
        let (h_new, c) = gru_step(p, &seq[t * d_in..(t + 1) * d_in], &h)?;
        out[t * width + offset..t * width + offset + d_h].copy_from_slice(&h_new);
        h_in.push(std::mem::replace(&mut h, h_new));
        caches.push(c);
    }
    Ok(DirCache {
        steps,
        h_in,
        cache: caches,
    })
}

/// Bidirectional GRU over a `T × d_in` sequence. Steps with `mask[t] == false`
/// are skipped by both directions and their annotations are zero. Output is
/// `T × 2·d_h`, forward half first.
pub fn bi_gru<F: Scalar>(
    seq: &[F],
    mask: &[bool],
    fw: &GruParams<'_, F>,
    bw: &GruParams<'_, F>,
) -> Result<(Vec<F>, BiGruCache<F>)> {
    let t_len = mask.len();
    if fw.d_in != bw.d_in || fw.d_h != bw.d_h {
        return Err(Error::Shape("forward/backward GRU dims differ".into()));
    }
    if seq.len() != t_len * fw.d_in {
        return Err(Error::Shape(format!(
            "sequence of {} values is not {t_len} × {}",
            seq.len(),
            fw.d_in
        )));
    }
    let d_h = fw.d_h;
    let mut out = vec![F::zero(); t_len * 2 * d_h];
    let live: Vec<usize> = (0..t_len).filter(|t| mask[*t]).collect();
    let rev: Vec<usize> = live.iter().rev().copied().collect();
    let fw_cache = run_direction(fw, seq, live, &mut out, 0)?;
    let bw_cache = run_direction(bw, seq, rev, &mut out, d_h)?;
    Ok((
        out,
        BiGruCache {
            fw: fw_cache,
            bw: bw_cache,
        },
    ))
}

fn backprop_direction<F: Scalar>(
    p: &GruParams<'_, F>,
    seq: &[F],
    cache: &DirCache<F>,
    d_out: &[F],
    offset: usize,
    grads: &mut GruGrads<'_, F>,
    d_seq: &mut [F],
) {
    let d_in = p.d_in;
    let d_h = p.d_h;
    let width = 2 * d_h;
    let mut dh_next = vec![F::zero(); d_h];
    for k in (0..cache.steps.len()).rev() {
        let t = cache.steps[k];
        let mut dh = d_out[t * width + offset..t * width + offset + d_h].to_vec();
        for (a, b) in dh.iter_mut().zip(&dh_next) {
            *a += *b;
        }
        dh_next = gru_step_backward(
            p,
            &seq[t * d_in..(t + 1) * d_in],
            &cache.h_in[k],
            &cache.cache[k],
            &dh,
            grads,
            &mut d_seq[t * d_in..(t + 1) * d_in],
        );
    }
}

/// Backward of [`bi_gru`]. Returns `∂L/∂seq`.
pub fn bi_gru_backward<F: Scalar>(
    seq: &[F],
    cache: &BiGruCache<F>,
    d_out: &[F],
    fw: &GruParams<'_, F>,
    bw: &GruParams<'_, F>,
    fw_grads: &mut GruGrads<'_, F>,
    bw_grads: &mut GruGrads<'_, F>,
) -> Vec<F> {
    let mut d_seq = vec![F::zero(); seq.len()];
    backprop_direction(fw, seq, &cache.fw, d_out, 0, fw_grads, &mut d_seq);
    backprop_direction(bw, seq, &cache.bw, d_out, fw.d_h, bw_grads, &mut d_seq);
    d_seq
}

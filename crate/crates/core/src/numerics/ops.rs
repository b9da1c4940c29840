//! Layer primitives with hand-written backward passes.
//!
//! Matrices are row-major slices. A weight matrix `w` of shape `rows × cols`
//! maps a `cols`-vector to a `rows`-vector.

use rand::Rng;

use super::tensor::Scalar;
use crate::error::{Error, Result};

/// Dot product with eight independent partial sums so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = F::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `out = W x`
pub fn matvec<F: Scalar>(w: &[F], rows: usize, cols: usize, x: &[F], out: &mut [F]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        *o = dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// `out += W x`
pub fn matvec_acc<F: Scalar>(w: &[F], rows: usize, cols: usize, x: &[F], out: &mut [F]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        *o += dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// `out += Wᵀ g`
pub fn matvec_t_acc<F: Scalar>(w: &[F], rows: usize, cols: usize, g: &[F], out: &mut [F]) {
    for (i, gi) in g.iter().enumerate().take(rows) {
        if *gi != F::zero() {
            axpy(*gi, &w[i * cols..(i + 1) * cols], out);
        }
    }
}

/// `gw += g xᵀ`
pub fn outer_acc<F: Scalar>(gw: &mut [F], rows: usize, cols: usize, g: &[F], x: &[F]) {
    for (i, gi) in g.iter().enumerate().take(rows) {
        if *gi != F::zero() {
            axpy(*gi, x, &mut gw[i * cols..(i + 1) * cols]);
        }
    }
}

pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Fully connected layer `y = W x + b`, with `W: out × in`.
pub fn dense<F: Scalar>(x: &[F], w: &[F], b: &[F]) -> Vec<F> {
    let rows = b.len();
    let cols = x.len();
    assert_eq!(w.len(), rows * cols, "dense weight shape");
    let mut y = b.to_vec();
    matvec_acc(w, rows, cols, x, &mut y);
    y
}

/// Accumulates parameter gradients of [`dense`] and returns `∂L/∂x`.
pub fn dense_backward<F: Scalar>(
    x: &[F],
    w: &[F],
    dy: &[F],
    dw: &mut [F],
    db: &mut [F],
) -> Vec<F> {
    let rows = dy.len();
    let cols = x.len();
    outer_acc(dw, rows, cols, dy, x);
    for (b, g) in db.iter_mut().zip(dy) {
        *b += *g;
    }
    let mut dx = vec![F::zero(); cols];
    matvec_t_acc(w, rows, cols, dy, &mut dx);
    dx
}

pub fn relu<F: Scalar>(x: &[F]) -> Vec<F> {
    x.iter().map(|v| v.max(F::zero())).collect()
}

/// Gradient through ReLU given its *output* `y`.
pub fn relu_backward<F: Scalar>(y: &[F], dy: &[F]) -> Vec<F> {
    y.iter()
        .zip(dy)
        .map(|(y, g)| if *y > F::zero() { *g } else { F::zero() })
        .collect()
}

pub fn tanh<F: Scalar>(x: &[F]) -> Vec<F> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Gradient through tanh given its *output* `y`.
pub fn tanh_backward<F: Scalar>(y: &[F], dy: &[F]) -> Vec<F> {
    y.iter()
        .zip(dy)
        .map(|(y, g)| *g * (F::one() - *y * *y))
        .collect()
}

/// Max-subtracted softmax.
pub fn softmax<F: Scalar>(x: &[F]) -> Vec<F> {
    let m = x.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = x.iter().map(|v| (*v - m).exp()).collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Softmax restricted to positions where `mask` is true; masked entries are 0.
/// Returns all zeros when nothing is unmasked.
pub fn masked_softmax<F: Scalar>(x: &[F], mask: &[bool]) -> Vec<F> {
    let m = x
        .iter()
        .zip(mask)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .fold(F::neg_infinity(), F::max);
    if m == F::neg_infinity() {
        return vec![F::zero(); x.len()];
    }
    let e: Vec<F> = x
        .iter()
        .zip(mask)
        .map(|(v, k)| if *k { (*v - m).exp() } else { F::zero() })
        .collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Vector-Jacobian product of softmax: `dx = p ⊙ (dp − ⟨p, dp⟩)`.
/// Also valid for [`masked_softmax`] since masked `p` entries are zero.
pub fn softmax_backward<F: Scalar>(p: &[F], dp: &[F]) -> Vec<F> {
    let inner: F = p.iter().zip(dp).map(|(a, b)| *a * *b).sum();
    p.iter().zip(dp).map(|(pi, gi)| *pi * (*gi - inner)).collect()
}

/// Inverted dropout. Returns the output and the per-unit multiplier
/// (0 or `1/(1-rate)`), which the backward pass reuses.
pub fn dropout<F: Scalar, R: Rng + ?Sized>(
    x: &[F],
    rate: f64,
    train: bool,
    rng: &mut R,
) -> (Vec<F>, Vec<F>) {
    if !train || rate <= 0.0 {
        return (x.to_vec(), vec![F::one(); x.len()]);
    }
    let keep = F::of(1.0 / (1.0 - rate));
    let mask: Vec<F> = x
        .iter()
        .map(|_| {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        })
        .collect();
    let y = x.iter().zip(&mask).map(|(v, m)| *v * *m).collect();
    (y, mask)
}

pub fn dropout_backward<F: Scalar>(mask: &[F], dy: &[F]) -> Vec<F> {
    mask.iter().zip(dy).map(|(m, g)| *m * *g).collect()
}

/// Valid 1-D convolution over the rows of `input` (`s × d`).
///
/// `filters` is stored as an `(h·d) × n_f` matrix: column `f` holds filter `f`
/// flattened over its `h` rows. Output is `(s−h+1) × n_f`, row-major.
/// `skip_row[r]`, when given, marks windows known to be all-zero input; their
/// output is exactly the bias.
pub fn conv1d_valid<F: Scalar>(
    input: &[F],
    s: usize,
    d: usize,
    filters: &[F],
    h: usize,
    bias: &[F],
    skip_row: Option<&[bool]>,
) -> Result<Vec<F>> {
    let n_f = bias.len();
    if h == 0 || h > s {
        return Err(Error::Shape(format!("filter height {h} vs input length {s}")));
    }
    if input.len() != s * d || filters.len() != h * d * n_f {
        return Err(Error::Shape("conv1d operand sizes".into()));
    }
    let rows = s - h + 1;
    let mut out = vec![F::zero(); rows * n_f];
    for r in 0..rows {
        let o = &mut out[r * n_f..(r + 1) * n_f];
        o.copy_from_slice(bias);
        if skip_row.is_some_and(|m| m[r]) {
            continue;
        }
        let window = &input[r * d..(r + h) * d];
        for (q, xq) in window.iter().enumerate() {
            if *xq != F::zero() {
                axpy(*xq, &filters[q * n_f..(q + 1) * n_f], o);
            }
        }
    }
    Ok(out)
}

/// Backward of [`conv1d_valid`] for a dense output gradient. Accumulates into
/// `d_input`, `d_filters` and `d_bias`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_valid_backward<F: Scalar>(
    input: &[F],
    s: usize,
    d: usize,
    filters: &[F],
    h: usize,
    d_out: &[F],
    d_input: &mut [F],
    d_filters: &mut [F],
    d_bias: &mut [F],
) {
    let n_f = d_bias.len();
    let rows = s - h + 1;
    for r in 0..rows {
        let g = &d_out[r * n_f..(r + 1) * n_f];
        if g.iter().all(|v| *v == F::zero()) {
            continue;
        }
        for (b, gi) in d_bias.iter_mut().zip(g) {
            *b += *gi;
        }
        let window = &input[r * d..(r + h) * d];
        for q in 0..h * d {
            axpy(window[q], g, &mut d_filters[q * n_f..(q + 1) * n_f]);
            d_input[r * d + q] += dot(&filters[q * n_f..(q + 1) * n_f], g);
        }
    }
}

/// Global 1-max pooling of one feature map. Ties go to the smallest index.
pub fn global_max_pool<F: Scalar>(map: &[F]) -> (F, usize) {
    let mut best = (map[0], 0);
    for (i, v) in map.iter().enumerate().skip(1) {
        if *v > best.0 {
            best = (*v, i);
        }
    }
    best
}

/// Column-wise 1-max pooling of a `rows × n_f` feature map.
pub fn max_pool_columns<F: Scalar>(map: &[F], rows: usize, n_f: usize) -> (Vec<F>, Vec<usize>) {
    let mut vals = map[..n_f].to_vec();
    let mut idx = vec![0usize; n_f];
    for r in 1..rows {
        let row = &map[r * n_f..(r + 1) * n_f];
        for f in 0..n_f {
            if row[f] > vals[f] {
                vals[f] = row[f];
                idx[f] = r;
            }
        }
    }
    (vals, idx)
}

/// Routes pooled gradients back to the argmax positions of a `rows × n_f` map.
pub fn max_pool_columns_backward<F: Scalar>(
    argmax: &[usize],
    rows: usize,
    d_pooled: &[F],
) -> Vec<F> {
    let n_f = argmax.len();
    let mut d_map = vec![F::zero(); rows * n_f];
    for (f, (r, g)) in argmax.iter().zip(d_pooled).enumerate() {
        d_map[r * n_f + f] += *g;
    }
    d_map
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct nested-loop convolution written against the `n_f` filters of
    /// shape `h × d` (independent of the packed layout used above).
    fn conv_oracle(
        input: &[f64],
        s: usize,
        d: usize,
        filt: &[Vec<Vec<f64>>],
        bias: &[f64],
    ) -> Vec<Vec<f64>> {
        let h = filt[0].len();
        (0..=s - h)
            .map(|r| {
                filt.iter()
                    .zip(bias)
                    .map(|(f, b)| {
                        let mut acc = *b;
                        for k in 0..h {
                            for j in 0..d {
                                acc += input[(r + k) * d + j] * f[k][j];
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn pack(filt: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let n_f = filt.len();
        let h = filt[0].len();
        let d = filt[0][0].len();
        let mut out = vec![0.0; h * d * n_f];
        for (f, fl) in filt.iter().enumerate() {
            for k in 0..h {
                for j in 0..d {
                    out[(k * d + j) * n_f + f] = fl[k][j];
                }
            }
        }
        out
    }

    #[test]
    fn conv_scaling_filter() {
        let out = conv1d_valid(&[1.0, 2.0, 3.0], 3, 1, &[2.0], 1, &[0.0], None).unwrap();
        assert_eq!(out, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn conv_sum_of_ones() {
        let out = conv1d_valid(&[1.0; 4], 2, 2, &[1.0; 4], 2, &[0.0], None).unwrap();
        assert_eq!(out, vec![4.0]);
    }

    #[test]
    fn conv_rejects_tall_filter() {
        assert!(conv1d_valid(&[1.0; 2], 2, 1, &[1.0; 3], 3, &[0.0], None).is_err());
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (s, d, h, n_f) in [(7, 3, 2, 4), (9, 5, 4, 3), (4, 2, 4, 2), (12, 8, 3, 5)] {
            let input = rand_vec(&mut rng, s * d);
            let filt: Vec<Vec<Vec<f64>>> = (0..n_f)
                .map(|_| (0..h).map(|_| rand_vec(&mut rng, d)).collect())
                .collect();
            let bias = rand_vec(&mut rng, n_f);
            let got = conv1d_valid(&input, s, d, &pack(&filt), h, &bias, None).unwrap();
            let want = conv_oracle(&input, s, d, &filt, &bias);
            assert_eq!(got.len(), (s - h + 1) * n_f);
            for r in 0..=s - h {
                for f in 0..n_f {
                    assert_abs_diff_eq!(got[r * n_f + f], want[r][f], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn skipped_rows_equal_bias_exactly() {
        let s = 6;
        let d = 2;
        let mut input = vec![0.0f32; s * d];
        input[0] = 0.5;
        input[1] = -1.5;
        let filters: Vec<f32> = (0..2 * d * 3).map(|i| (i as f32 * 0.37).sin()).collect();
        let bias = [0.1f32, -0.2, 0.3];
        let skip = [false, true, true, true, true];
        let a = conv1d_valid(&input, s, d, &filters, 2, &bias, None).unwrap();
        let b = conv1d_valid(&input, s, d, &filters, 2, &bias, Some(&skip)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(global_max_pool(&[1.0, 5.0, 2.0]), (5.0, 1));
        assert_eq!(global_max_pool(&[3.0, 3.0]), (3.0, 0));
    }

    #[test]
    fn pooling_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v = rand_vec(&mut rng, 17);
            let (m, i) = global_max_pool(&v);
            let want = v.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(m, want);
            assert_eq!(v.iter().position(|x| *x == want).unwrap(), i);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1.0f64, 2.0, 3.0]);
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let z: f64 = e.iter().sum();
        for (a, b) in p.iter().zip(&e) {
            assert_abs_diff_eq!(*a, b / z, epsilon = 1e-12);
        }
        let shifted = softmax(&[1001.0f64, 1002.0, 1003.0]);
        for (a, b) in p.iter().zip(&shifted) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn masked_softmax_zeroes_masked() {
        let p = masked_softmax(&[5.0f64, 1.0, 1.0], &[false, true, true]);
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
        assert_eq!(masked_softmax(&[1.0f64], &[false]), vec![0.0]);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![1.0f64, -2.0, 3.0];
        assert_eq!(dropout(&x, 0.0, true, &mut rng).0, x);
        assert_eq!(dropout(&x, 0.5, false, &mut rng).0, x);
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = vec![1.0f64, -2.0, 0.5];
        let n = 100_000;
        let mut mean = [0.0f64; 3];
        for _ in 0..n {
            let (y, _) = dropout(&x, 0.5, true, &mut rng);
            for k in 0..3 {
                mean[k] += y[k] / n as f64;
            }
        }
        for k in 0..3 {
            assert!((mean[k] - x[k]).abs() <= 0.02 * x[k].abs(), "{mean:?}");
        }
    }

    #[test]
    fn dot_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [0, 1, 7, 8, 9, 33] {
            let a = rand_vec(&mut rng, n);
            let b = rand_vec(&mut rng, n);
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert_abs_diff_eq!(dot(&a, &b), naive, epsilon = 1e-12);
        }
    }
}

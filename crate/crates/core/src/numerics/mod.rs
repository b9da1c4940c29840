//! Dense tensor math with exact reverse-mode gradients for the layers used by
//! the convolutional and hierarchical-attention classifiers.

pub mod attention;
pub mod gradcheck;
pub mod gradsuite;
pub mod gru;
pub mod ops;
pub mod tensor;

pub use attention::{self_attention, self_attention_backward, AttentionCache, AttentionGrads, AttentionParams};
pub use gradcheck::{grad_check, relative_error};
pub use gru::{bi_gru, bi_gru_backward, gru_step, gru_step_backward, BiGruCache, GruGrads, GruParams, GruStepCache};
pub use ops::{
    axpy, conv1d_valid, conv1d_valid_backward, dense, dense_backward, dot, dropout, dropout_backward,
    global_max_pool, masked_softmax, max_pool_columns, max_pool_columns_backward, relu,
    relu_backward, sigmoid, softmax, softmax_backward, tanh, tanh_backward,
};
pub use tensor::{ParamId, ParamSet, Scalar, Tensor};

/// Glorot-style uniform bound `√(6/(fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn uniform_tensor<F: Scalar, R: rand::Rng + ?Sized>(
    shape: &[usize],
    bound: f64,
    rng: &mut R,
) -> Tensor<F> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| F::of(rng.random_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

#[cfg(test)]
mod grad_tests {
    use super::gradsuite::{op_errors, TOL};

    #[test]
    fn every_op_on_twenty_seeds() {
        for seed in 0..20 {
            for (op, err) in op_errors(seed) {
                assert!(err < TOL, "{op} seed {seed}: {err}");
            }
        }
    }
}

//! Central-difference gradient checking in double precision.

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares reverse-mode gradients against central differences for every
/// coordinate of every parameter block and returns the largest relative error.
///
/// `f` evaluates the scalar loss and its analytic gradient (one vector per
/// parameter block, same shapes as `params`).
pub fn grad_check<L>(params: &[Vec<f64>], f: L, eps: f64) -> f64
where
    L: Fn(&[Vec<f64>]) -> (f64, Vec<Vec<f64>>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "one gradient block per parameter block");
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for (b, block) in params.iter().enumerate() {
        assert_eq!(analytic[b].len(), block.len(), "gradient block {b} shape");
        for i in 0..block.len() {
            let orig = work[b][i];
            work[b][i] = orig + eps;
            let (plus, _) = f(&work);
            work[b][i] = orig - eps;
            let (minus, _) = f(&work);
            work[b][i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[b][i], numeric));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let c = [0.3, -1.2, 2.5];
        let err = grad_check(
            &[vec![1.0, 2.0, 3.0]],
            |p| {
                let v = p[0].iter().zip(&c).map(|(a, b)| a * b).sum();
                (v, vec![c.to_vec()])
            },
            1e-4,
        );
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let err = grad_check(
            &[vec![1.0, 2.0]],
            |p| (p[0][0] * p[0][0] + p[0][1], vec![vec![1.0, 1.0]]),
            1e-4,
        );
        assert!(err > 0.1);
    }
}

//! One-vs-rest linear SVMs on sparse rows.
//!
//! Each binary problem minimises `½‖w‖² + Σ_i c_i·max(0, 1 − y_i(w·x_i + b))`
//! with an unregularised bias, solved in the dual by SMO with second-order
//! working-set selection. Kernel values are linear dot products and, for
//! moderate `n`, come from one cached Gram matrix shared by every class and
//! every `C` of the grid.

use serde::{Deserialize, Serialize};

use super::tfidf::{SparseVec, TfidfVectorizer, sparse_dot, sparse_sparse_dot};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;
/// Largest training set for which the Gram matrix is held in memory.
const FULL_GRAM_MAX: usize = 8000;

pub const C_GRID_LEN: usize = 24;

/// `10^x` for 24 evenly spaced `x` from −5 to 6.5.
pub fn c_grid() -> Vec<f64> {
    (0..C_GRID_LEN).map(|k| 10f64.powf(-5.0 + 0.5 * k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Scale positive hinge terms by `n_neg / n_pos` in each binary problem.
    pub class_weighted: bool,
    /// Fixed C; `None` runs the grid search.
    pub c: Option<f64>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { tol: 1e-3, max_iter: 10_000_000, class_weighted: false, c: None }
    }
}

/// Linear kernel values over a fixed set of rows.
pub struct Gram<'a> {
    x: &'a [SparseVec],
    dim: usize,
    full: Option<Vec<f64>>,
    diag: Vec<f64>,
}

impl<'a> Gram<'a> {
    pub fn new(x: &'a [SparseVec], dim: usize) -> Self {
        let n = x.len();
        let diag: Vec<f64> = x.iter().map(|r| sparse_sparse_dot(r, r)).collect();
        let full = (n <= FULL_GRAM_MAX).then(|| {
            let mut k = vec![0.0; n * n];
            let mut dense = vec![0.0; dim];
            for i in 0..n {
                x[i].iter().for_each(|(c, v)| dense[*c as usize] = *v);
                for j in i..n {
                    let v = sparse_dot(&x[j], &dense);
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
                x[i].iter().for_each(|(c, _)| dense[*c as usize] = 0.0);
            }
            k
        });
        Self { x, dim, full, diag }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn row<'b>(&'b self, i: usize, buf: &'b mut Vec<f64>) -> &'b [f64] {
        let n = self.x.len();
        match &self.full {
            Some(k) => &k[i * n..(i + 1) * n],
            None => {
                let mut dense = vec![0.0; self.dim];
                self.x[i].iter().for_each(|(c, v)| dense[*c as usize] = *v);
                buf.clear();
                buf.extend(self.x.iter().map(|r| sparse_dot(r, &dense)));
                buf
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub w: Vec<f64>,
    pub b: f64,
    /// Best primal objective seen so far, one entry per solver epoch (`n`
    /// SMO steps), so non-increasing.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[(u32, f64)]) -> f64 {
        sparse_dot(x, &self.w) + self.b
    }
}

/// `½‖w‖² + Σ c_i·hinge`, evaluated directly.
pub fn primal_objective(x: &[SparseVec], y: &[f64], cost: &[f64], w: &[f64], b: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    reg + x.iter().zip(y).zip(cost).map(|((xi, yi), ci)| ci * (1.0 - yi * (sparse_dot(xi, w) + b)).max(0.0)).sum::<f64>()
}

/// Exact minimiser over `b` of `Σ c_i·max(0, 1 − y_i(s_i + b))`. When the
/// minimum is a flat interval its midpoint is returned.
pub fn optimal_bias(scores: &[f64], y: &[f64], cost: &[f64]) -> f64 {
    // Positive terms are active left of their breakpoint, negative ones right of it.
    let mut bp: Vec<(f64, f64)> = scores.iter().zip(y).zip(cost).map(|((s, yi), c)| (yi - s, *c)).collect();
    if bp.is_empty() {
        return 0.0;
    }
    bp.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut slope: f64 = -y.iter().zip(cost).filter(|(yi, _)| **yi > 0.0).map(|(_, c)| c).sum::<f64>();
    let scale = cost.iter().sum::<f64>().max(1.0);
    for (k, (b, c)) in bp.iter().enumerate() {
        slope += c;
        if slope > 1e-12 * scale {
            return *b;
        }
        if slope >= -1e-12 * scale {
            // Flat between this breakpoint and the next distinct one.
            return match bp[k + 1..].iter().find(|n| n.0 > *b) {
                Some(next) => 0.5 * (b + next.0),
                None => *b,
            };
        }
    }
    bp[bp.len() - 1].0
}

/// Binary SVM with per-example hinge multipliers `cost` (typically all `C`).
pub fn train_svm_binary_costs(gram: &Gram, y: &[f64], cost: &[f64], cfg: &SvmConfig) -> Result<BinarySvm> {
    let n = gram.len();
    if y.len() != n || cost.len() != n {
        return Err(Error::Shape(format!("{n} rows, {} labels, {} costs", y.len(), cost.len())));
    }
    if !y.iter().any(|v| *v > 0.0) || !y.iter().any(|v| *v < 0.0) {
        return Err(Error::InsufficientData("binary svm needs both classes".into()));
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::InvalidConfig("svm labels must be ±1".into()));
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let (mut buf_i, mut buf_j) = (Vec::new(), Vec::new());
    let mut best = (f64::INFINITY, alpha.clone());
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iter = 0;

    let primal_from_dual = |alpha: &[f64], grad: &[f64]| {
        // G_t = y_t·s_t − 1 where s_t = w·x_t, and ‖w‖² = Σ α_t y_t s_t.
        let s: Vec<f64> = (0..n).map(|t| y[t] * (grad[t] + 1.0)).collect();
        let b = optimal_bias(&s, y, cost);
        let reg = 0.5 * (0..n).map(|t| alpha[t] * y[t] * s[t]).sum::<f64>();
        reg + (0..n).map(|t| cost[t] * (1.0 - y[t] * (s[t] + b)).max(0.0)).sum::<f64>()
    };

    while iter < cfg.max_iter {
        let mut g_max = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let movable = if y[t] > 0.0 { alpha[t] < cost[t] } else { alpha[t] > 0.0 };
            if movable && v >= g_max {
                g_max = v;
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let k_i = gram.row(i, &mut buf_i).to_vec();
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let movable = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < cost[t] };
            if !movable {
                continue;
            }
            let v = y[t] * grad[t];
            g_max2 = g_max2.max(v);
            let diff = g_max + v;
            if diff > 0.0 {
                let quad = gram.diag[i] + gram.diag[t] - 2.0 * k_i[t];
                let obj = -diff * diff / if quad > 0.0 { quad } else { TAU };
                if obj <= obj_min {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        if g_max + g_max2 < cfg.tol || j == usize::MAX {
            converged = true;
            break;
        }

        let (ai, aj) = (alpha[i], alpha[j]);
        let (ci, cj) = (cost[i], cost[j]);
        let quad = (gram.diag[i] + gram.diag[j] - 2.0 * k_i[j]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        let k_j = gram.row(j, &mut buf_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k_i[t] * di + y[j] * k_j[t] * dj);
        }
        iter += 1;

        if iter % n == 0 {
            let p = primal_from_dual(&alpha, &grad);
            if p < best.0 {
                best = (p, alpha.clone());
            }
            objective.push(best.0);
        }
    }
    let p = primal_from_dual(&alpha, &grad);
    if p <= best.0 {
        best = (p, alpha.clone());
    }
    objective.push(best.0);
    if !converged {
        log::warn!("svm stopped at the iteration cap ({}) before reaching tolerance {}", cfg.max_iter, cfg.tol);
    }

    let alpha = best.1;
    let mut w = vec![0.0; gram.dim];
    for t in 0..n {
        if alpha[t] != 0.0 {
            gram.x[t].iter().for_each(|(c, v)| w[*c as usize] += alpha[t] * y[t] * v);
        }
    }
    let s: Vec<f64> = gram.x.iter().map(|r| sparse_dot(r, &w)).collect();
    let b = optimal_bias(&s, y, cost);
    Ok(BinarySvm { w, b, objective, iterations: iter, converged })
}

pub fn train_svm_binary(x: &[SparseVec], dim: usize, y: &[f64], c: f64, cfg: &SvmConfig) -> Result<BinarySvm> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("C = {c} must be positive")));
    }
    train_svm_binary_costs(&Gram::new(x, dim), y, &vec![c; x.len()], cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmOvR {
    pub c: f64,
    /// One weight row per category, in schema order.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearSvmOvR {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn decision(&self, x: &[(u32, f64)]) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).map(|(w, b)| sparse_dot(x, w) + b).collect()
    }

    /// Argmax of the decision values; ties go to the earlier category.
    pub fn predict(&self, x: &[(u32, f64)]) -> usize {
        let d = self.decision(x);
        let mut best = 0;
        for (k, v) in d.iter().enumerate() {
            if *v > d[best] {
                best = k;
            }
        }
        best
    }

    /// Features with positive coefficient for `category`, largest first.
    pub fn top_ngrams(&self, vectorizer: &TfidfVectorizer, category: usize, k: usize) -> Vec<(String, f64)> {
        let w = &self.weights[category];
        let mut cols: Vec<usize> = (0..w.len()).filter(|c| w[*c] > 0.0).collect();
        cols.sort_by(|a, b| w[*b].total_cmp(&w[*a]).then_with(|| vectorizer.feature(*a).cmp(vectorizer.feature(*b))));
        cols.into_iter().take(k).map(|c| (vectorizer.feature(c).to_string(), w[c])).collect()
    }
}

/// Trains one binary separator per category against the rest.
pub fn train_ovr(gram: &Gram, labels: &[usize], k: usize, c: f64, cfg: &SvmConfig) -> Result<LinearSvmOvR> {
    if labels.len() != gram.len() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), gram.len())));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("C = {c} must be positive")));
    }
    let classes: Vec<usize> = (0..k).collect();
    let fits = crate::parallel::par_map(&classes, |&cat| {
        let y: Vec<f64> = labels.iter().map(|l| if *l == cat { 1.0 } else { -1.0 }).collect();
        let n_pos = labels.iter().filter(|l| **l == cat).count();
        let pos_mult = if cfg.class_weighted && n_pos > 0 { (labels.len() - n_pos) as f64 / n_pos as f64 } else { 1.0 };
        let cost: Vec<f64> = y.iter().map(|v| if *v > 0.0 { c * pos_mult } else { c }).collect();
        train_svm_binary_costs(gram, &y, &cost, cfg)
    });
    let mut model = LinearSvmOvR { c, weights: Vec::with_capacity(k), biases: Vec::with_capacity(k) };
    for fit in fits {
        let fit = fit?;
        model.weights.push(fit.w);
        model.biases.push(fit.b);
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    /// (C, validation macro-F1) per candidate.
    pub scores: Vec<(f64, f64)>,
    pub best_c: f64,
}

/// Picks C by validation macro-F1 (ties to the smaller C).
pub fn grid_search_c(
    train: (&[SparseVec], &[usize]),
    val: (&[SparseVec], &[usize]),
    dim: usize,
    k: usize,
    cfg: &SvmConfig,
) -> Result<GridSearch> {
    let gram = Gram::new(train.0, dim);
    let mut scores = Vec::with_capacity(C_GRID_LEN);
    for c in c_grid() {
        let model = train_ovr(&gram, train.1, k, c, cfg)?;
        let pred: Vec<usize> = val.0.iter().map(|x| model.predict(x)).collect();
        let f1 = crate::evaluation::macro_f1(k, val.1, &pred)?;
        log::debug!("svm C = {c:.3e}: validation macro-F1 {f1:.4}");
        scores.push((c, f1));
    }
    let mut best = scores[0];
    for s in &scores[1..] {
        if s.1 > best.1 {
            best = *s;
        }
    }
    Ok(GridSearch { scores, best_c: best.0 })
}

/// Grid search on the validation split (unless C is fixed), then a final fit
/// on train + validation with the chosen C.
pub fn fit_with_selection(
    train: (&[SparseVec], &[usize]),
    val: (&[SparseVec], &[usize]),
    dim: usize,
    k: usize,
    cfg: &SvmConfig,
) -> Result<(LinearSvmOvR, Option<GridSearch>)> {
    let grid = match cfg.c {
        Some(_) => None,
        None => Some(grid_search_c(train, val, dim, k, cfg)?),
    };
    let c = cfg.c.or(grid.as_ref().map(|g| g.best_c)).expect("C chosen");
    let x: Vec<SparseVec> = train.0.iter().chain(val.0).cloned().collect();
    let y: Vec<usize> = train.1.iter().chain(val.1).copied().collect();
    let model = train_ovr(&Gram::new(&x, dim), &y, k, c, cfg)?;
    Ok((model, grid))
}

/// Long-run projected subgradient descent on the primal, used as an
/// independent reference in tests. `w` is kept in the ball that must contain
/// the optimum (`½‖w‖² ≤ objective at zero = Σ c_i`), the step decays as
/// `η₀/√t`, and the best iterate is returned as `(objective, w, b)`.
pub fn subgradient_oracle(x: &[Vec<f64>], y: &[f64], c: f64, iters: usize) -> (f64, Vec<f64>, f64) {
    let n = x.len();
    let d = x[0].len();
    let radius = (2.0 * c * n as f64).sqrt();
    let objective = |w: &[f64], b: f64| {
        0.5 * w.iter().map(|v| v * v).sum::<f64>()
            + c * x.iter().zip(y).map(|(xi, yi)| (1.0 - yi * (dot(xi, w) + b)).max(0.0)).sum::<f64>()
    };
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let mut best = (objective(&w, b), w.clone(), b);
    let eta0 = 1.0 / (1.0 + c * n as f64);
    for t in 1..=iters {
        let mut gw = w.clone();
        let mut gb = 0.0;
        for (xi, yi) in x.iter().zip(y) {
            if yi * (dot(xi, &w) + b) < 1.0 {
                gw.iter_mut().zip(xi).for_each(|(g, v)| *g -= c * yi * v);
                gb -= c * yi;
            }
        }
        let eta = eta0 / (t as f64).sqrt();
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= eta * g);
        b -= eta * gb;
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|v| *v *= radius / norm);
        }
        let o = objective(&w, b);
        if o < best.0 {
            best = (o, w.clone(), b);
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense rows as sparse rows, for small fixtures.
pub fn to_sparse(rows: &[Vec<f64>]) -> Vec<SparseVec> {
    rows.iter()
        .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, v)| (c as u32, *v)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    pub(crate) fn blobs(seed: u64, n: usize, gap: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = crate::rng::seeded(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            x.push(vec![label * gap + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn grid_values() {
        let g = c_grid();
        assert_eq!(g.len(), 24);
        assert_eq!(g[0], 1e-5);
        assert!((g[23] - 10f64.powf(6.5)).abs() < 1e-6);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - 10f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair() {
        let x = to_sparse(&[vec![-1.0], vec![1.0]]);
        let m = train_svm_binary(&x, 1, &[-1.0, 1.0], 1e3, &SvmConfig::default()).unwrap();
        assert!(m.decision(&x[0]) < 0.0 && m.decision(&x[1]) > 0.0);
        assert!(m.b.abs() < 1e-9, "{}", m.b);
        assert!((m.w[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tiny_c_shrinks_w() {
        let (x, y) = blobs(2, 20, 1.0);
        let x = to_sparse(&x);
        let norms: Vec<f64> = [1e-1, 1e-3, 1e-5]
            .iter()
            .map(|c| {
                let m = train_svm_binary(&x, 2, &y, *c, &SvmConfig::default()).unwrap();
                m.w.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
        assert!(norms[2] < 1e-3, "{norms:?}");
    }

    #[test]
    fn single_class_rejected() {
        let x = to_sparse(&[vec![1.0], vec![2.0]]);
        assert!(train_svm_binary(&x, 1, &[1.0, 1.0], 1.0, &SvmConfig::default()).is_err());
    }

    #[test]
    fn matches_subgradient_oracle() {
        for seed in 0..3 {
            let (xd, y) = blobs(seed, 20, 1.2);
            let x = to_sparse(&xd);
            let cfg = SvmConfig { tol: 1e-6, ..Default::default() };
            let m = train_svm_binary(&x, 2, &y, 1.0, &cfg).unwrap();
            let ours = primal_objective(&x, &y, &vec![1.0; 20], &m.w, m.b);
            let (oracle, _, _) = subgradient_oracle(&xd, &y, 1.0, 200_000);
            assert!(ours <= oracle * (1.0 + 1e-9), "{ours} vs {oracle}");
            assert!((ours - oracle).abs() / oracle < 1e-3, "{ours} vs {oracle}");
        }
    }

    #[test]
    fn objective_history_non_increasing() {
        let (x, y) = blobs(9, 60, 0.3);
        let x = to_sparse(&x);
        let m = train_svm_binary(&x, 2, &y, 10.0, &SvmConfig { tol: 1e-8, ..Default::default() }).unwrap();
        assert!(m.converged);
        for w in m.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn optimal_bias_is_a_minimum() {
        let mut rng = crate::rng::seeded(5);
        for _ in 0..50 {
            let n = rng.random_range(2..12);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let f = |b: f64| (0..n).map(|i| c[i] * (1.0 - y[i] * (s[i] + b)).max(0.0)).sum::<f64>();
            let b = optimal_bias(&s, &y, &c);
            for k in -400..=400 {
                assert!(f(b) <= f(k as f64 * 0.01) + 1e-12);
            }
        }
    }

    #[test]
    fn predict_rules() {
        let m = LinearSvmOvR { c: 1.0, weights: vec![vec![0.0], vec![0.0]], biases: vec![0.3, -0.1] };
        assert_eq!(m.predict(&[]), 0);
        let z = LinearSvmOvR { c: 1.0, weights: vec![vec![0.0; 3]; 3], biases: vec![0.0; 3] };
        assert_eq!(z.predict(&[(1, 2.0)]), 0);
        let f = LinearSvmOvR { c: 1.0, weights: vec![vec![1.0, -1.0], vec![-0.5, 2.0]], biases: vec![0.0, 0.1] };
        // decisions: 1·3 − 1·1 = 2 vs −1.5 + 2 + 0.1 = 0.6
        assert_eq!(f.decision(&[(0, 3.0), (1, 1.0)]), vec![2.0, 0.6]);
        assert_eq!(f.predict(&[(0, 3.0), (1, 1.0)]), 0);
    }

    #[test]
    fn ovr_two_class_matches_binary() {
        let (xd, y) = blobs(4, 40, 0.4);
        let x = to_sparse(&xd);
        let labels: Vec<usize> = y.iter().map(|v| if *v > 0.0 { 0 } else { 1 }).collect();
        let cfg = SvmConfig::default();
        let ovr = train_ovr(&Gram::new(&x, 2), &labels, 2, 1.0, &cfg).unwrap();
        let bin = train_svm_binary(&x, 2, &y, 1.0, &cfg).unwrap();
        for xi in &x {
            let d = bin.decision(xi);
            if d.abs() > 1e-3 {
                assert_eq!(ovr.predict(xi), if d > 0.0 { 0 } else { 1 });
            }
        }
    }

    #[test]
    fn planted_keyword_ranks_high() {
        let mut rng = crate::rng::seeded(8);
        let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..90 {
            let cat = i % 3;
            let mut d: Vec<String> = (0..8).map(|_| words[rng.random_range(0..words.len())].to_string()).collect();
            let key = ["ladder", "forklift", "spill"][cat];
            d.insert(rng.random_range(0..d.len()), key.to_string());
            docs.push(d);
            labels.push(cat);
        }
        let v = TfidfVectorizer::fit(&docs, Default::default()).unwrap();
        let x: Vec<SparseVec> = docs.iter().map(|d| v.transform(d)).collect();
        let m = train_ovr(&Gram::new(&x, v.len()), &labels, 3, 1.0, &SvmConfig::default()).unwrap();
        for (cat, key) in ["ladder", "forklift", "spill"].iter().enumerate() {
            let top = m.top_ngrams(&v, cat, 3);
            assert!(top.iter().any(|(g, _)| g == key), "{top:?}");
            assert!(top.windows(2).all(|w| w[1].1 <= w[0].1));
        }
        let all = m.top_ngrams(&v, 0, usize::MAX);
        assert!(all.len() <= v.len());
    }

    #[test]
    fn ties_pick_smallest_c() {
        let x = to_sparse(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]]);
        let g = grid_search_c((&x, &[1, 1, 0, 0]), (&x, &[1, 1, 0, 0]), 1, 2, &SvmConfig::default()).unwrap();
        let top = g.scores.iter().map(|s| s.1).fold(f64::MIN, f64::max);
        let first = g.scores.iter().find(|s| s.1 == top).unwrap().0;
        assert_eq!(g.best_c, first);
    }

    proptest! {
        #[test]
        fn zero_coefficient_feature_is_inert(vals in proptest::collection::vec(-3.0f64..3.0, 3), extra in -5.0f64..5.0) {
            let m = LinearSvmOvR { c: 1.0, weights: vec![vec![1.0, 0.5, 0.0], vec![-1.0, 2.0, 0.0]], biases: vec![0.1, -0.2] };
            let x: SparseVec = vec![(0, vals[0]), (1, vals[1])];
            let mut x2 = x.clone();
            x2.push((2, extra));
            prop_assert_eq!(m.decision(&x), m.decision(&x2));
        }
    }
}

//! Confusion matrices, precision/recall/F1, a sampled random baseline and a
//! two-component PCA for embedding plots.

use std::io::Write;
use std::path::Path;

use rand::distr::{Distribution, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the predicted column is empty (precision reported as 0).
    pub precision_undefined: bool,
    /// Set when the true row is empty (recall reported as 0).
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn from_pairs(k: usize, truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        let mut m = Self::new(k);
        for (t, p) in truth.iter().zip(pred) {
            m.add(*t, *p)?;
        }
        Ok(m)
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::Shape(format!("{} counts for K = {k}", counts.len())));
        }
        Ok(Self { k, counts })
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.k || pred >= self.k {
            return Err(Error::Shape(format!("class index out of range for K = {}", self.k)));
        }
        self.counts[truth * self.k + pred] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.k, other.k);
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    pub fn col_total(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    pub fn prf1(&self) -> Metrics {
        let per_class: Vec<ClassMetrics> = (0..self.k)
            .map(|i| {
                let tp = self.get(i, i) as f64;
                let (col, row) = (self.col_total(i), self.row_total(i));
                let precision = if col == 0 { 0.0 } else { tp / col as f64 };
                let recall = if row == 0 { 0.0 } else { tp / row as f64 };
                let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
                ClassMetrics { precision, recall, f1, precision_undefined: col == 0, recall_undefined: row == 0 }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / self.k as f64;
        let total = self.total();
        let trace: u64 = (0..self.k).map(|i| self.get(i, i)).sum();
        Metrics {
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            per_class,
        }
    }
}

pub fn macro_f1(k: usize, truth: &[usize], pred: &[usize]) -> Result<f64> {
    Ok(ConfusionMatrix::from_pairs(k, truth, pred)?.prf1().macro_f1)
}

/// Mean and standard deviation over trials of each per-class metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub mean: Metrics,
    pub std_f1: Vec<f64>,
    pub trials: usize,
}

/// Predictions drawn i.i.d. from the training label distribution.
pub fn random_baseline(train_counts: &[u64], test_labels: &[usize], seed: u64, trials: usize) -> Result<BaselineMetrics> {
    let k = train_counts.len();
    let dist = WeightedIndex::new(train_counts)
        .map_err(|e| Error::InsufficientData(format!("training label distribution: {e}")))?;
    if trials == 0 {
        return Err(Error::InvalidConfig("random baseline needs at least one trial".into()));
    }
    let mut rng = crate::rng::seeded(seed);
    let mut runs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let pred: Vec<usize> = test_labels.iter().map(|_| dist.sample(&mut rng)).collect();
        runs.push(ConfusionMatrix::from_pairs(k, test_labels, &pred)?.prf1());
    }
    let n = trials as f64;
    let avg = |f: &dyn Fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let per_class = (0..k)
        .map(|c| ClassMetrics {
            precision: avg(&|m| m.per_class[c].precision),
            recall: avg(&|m| m.per_class[c].recall),
            f1: avg(&|m| m.per_class[c].f1),
            precision_undefined: runs.iter().all(|m| m.per_class[c].precision_undefined),
            recall_undefined: runs.iter().all(|m| m.per_class[c].recall_undefined),
        })
        .collect();
    let std_f1 = (0..k)
        .map(|c| {
            let mu = avg(&|m| m.per_class[c].f1);
            (runs.iter().map(|m| (m.per_class[c].f1 - mu).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let mean = Metrics {
        per_class,
        macro_precision: avg(&|m| m.macro_precision),
        macro_recall: avg(&|m| m.macro_recall),
        macro_f1: avg(&|m| m.macro_f1),
        accuracy: avg(&|m| m.accuracy),
    };
    Ok(BaselineMetrics { mean, std_f1, trials })
}

/// Writes one row per (model, metric) with the categories as columns plus
/// a trailing mean.
pub fn write_metrics_csv(path: &Path, categories: &[String], rows: &[(String, Metrics)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string(), "metric".to_string()];
    header.extend(categories.iter().cloned());
    header.push("mean".into());
    w.write_record(&header)?;
    for (model, m) in rows {
        let metric_rows: [(&str, fn(&ClassMetrics) -> f64, f64); 3] = [
            ("precision", |c| c.precision, m.macro_precision),
            ("recall", |c| c.recall, m.macro_recall),
            ("f1", |c| c.f1, m.macro_f1),
        ];
        for (name, get, mean) in metric_rows {
            let mut rec = vec![model.clone(), name.to_string()];
            rec.extend(m.per_class.iter().map(|c| format!("{:.4}", get(c))));
            rec.push(format!("{mean:.4}"));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_confusion_csv(path: &Path, categories: &[String], cm: &ConfusionMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "true\\pred,{}", categories.join(","))?;
    for (i, c) in categories.iter().enumerate() {
        let row: Vec<String> = (0..cm.k()).map(|j| cm.get(i, j).to_string()).collect();
        writeln!(f, "{c},{}", row.join(","))?;
    }
    Ok(())
}

/// Two leading principal directions of row vectors and the projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    pub directions: [Vec<f64>; 2],
    pub projections: Vec<[f64; 2]>,
}

/// Power iteration with deflation on the covariance of mean-centred rows.
pub fn pca2(vectors: &[Vec<f64>]) -> Result<Pca2> {
    let Some(first) = vectors.first() else {
        return Err(Error::InsufficientData("pca of an empty set".into()));
    };
    let d = first.len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("ragged vectors for pca".into()));
    }
    let n = vectors.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let centred: Vec<Vec<f64>> = vectors.iter().map(|v| v.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let mut cov = vec![0.0; d * d];
    for v in &centred {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += v[a] * v[b] / n;
            }
        }
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for comp in 0..2 {
        // Deterministic start not orthogonal to any axis.
        let mut q: Vec<f64> = (0..d).map(|j| 1.0 + 0.1 * ((j + comp) as f64).sin()).collect();
        orthonormalize(&mut q, &dirs);
        for _ in 0..10_000 {
            let mut next: Vec<f64> = (0..d).map(|a| (0..d).map(|b| cov[a * d + b] * q[b]).sum()).collect();
            orthonormalize(&mut next, &dirs);
            let delta = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            q = next;
            if delta < 1e-9 {
                break;
            }
        }
        dirs.push(q);
    }
    let projections = centred
        .iter()
        .map(|v| [dirs[0].iter().zip(v).map(|(a, b)| a * b).sum(), dirs[1].iter().zip(v).map(|(a, b)| a * b).sum()])
        .collect();
    let [d0, d1]: [Vec<f64>; 2] = dirs.try_into().expect("two directions");
    Ok(Pca2 { mean, directions: [d0, d1], projections })
}

/// Gram-Schmidt against `basis`, then unit length. A vector that vanishes
/// (rank-deficient data) is replaced by the first basis-orthogonal axis.
fn orthonormalize(q: &mut [f64], basis: &[Vec<f64>]) {
    let project_out = |q: &mut [f64]| {
        for u in basis {
            let p: f64 = u.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
            q.iter_mut().zip(u).for_each(|(x, ui)| *x -= p * ui);
        }
    };
    project_out(q);
    let mut norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-300 {
        for axis in 0..q.len() {
            q.iter_mut().enumerate().for_each(|(j, x)| *x = if j == axis { 1.0 } else { 0.0 });
            project_out(q);
            norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                break;
            }
        }
    }
    if norm > 0.0 {
        q.iter_mut().for_each(|x| *x /= norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn identity_is_perfect() {
        let m = ConfusionMatrix::from_pairs(3, &[0, 1, 2], &[0, 1, 2]).unwrap().prf1();
        for c in &m.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn two_by_two_hand_values() {
        let m = ConfusionMatrix::from_counts(2, vec![8, 2, 4, 6]).unwrap().prf1();
        assert!((m.per_class[0].precision - 8.0 / 12.0).abs() < 1e-12);
        assert!((m.per_class[0].recall - 0.8).abs() < 1e-12);
        assert!((m.per_class[0].f1 - 0.727_272_727_272_727_3).abs() < 1e-12);
    }

    #[test]
    fn empty_column_flagged() {
        let m = ConfusionMatrix::from_pairs(2, &[0, 1], &[0, 0]).unwrap().prf1();
        assert!(m.per_class[1].precision_undefined);
        assert_eq!(m.per_class[1].precision, 0.0);
        assert!(!m.per_class[0].precision_undefined);
    }

    #[test]
    fn baseline_balanced_two_class() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let b = random_baseline(&[50, 50], &labels, 3, 100).unwrap();
        for c in &b.mean.per_class {
            assert!((c.precision - 0.5).abs() < 0.02 && (c.recall - 0.5).abs() < 0.02, "{c:?}");
        }
        assert_eq!(b, random_baseline(&[50, 50], &labels, 3, 100).unwrap());
    }

    #[test]
    fn baseline_single_class() {
        let b = random_baseline(&[10, 0], &[0, 0, 0], 1, 5).unwrap();
        assert_eq!(b.mean.per_class[0].recall, 1.0);
    }

    #[test]
    fn pca_planted_plane() {
        let mut rng = crate::rng::seeded(4);
        let d = 12;
        let mut u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthonormalize(&mut u, &[]);
        orthonormalize(&mut v, &[u.clone()]);
        let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
                (0..d).map(|j| offset[j] + a * u[j] + b * v[j]).collect()
            })
            .collect();
        let p = pca2(&pts).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!((dot(&p.directions[0], &p.directions[0]) - 1.0).abs() < 1e-8);
        assert!(dot(&p.directions[0], &p.directions[1]).abs() < 1e-8);
        for (x, pr) in pts.iter().zip(&p.projections) {
            let err: f64 = (0..d)
                .map(|j| (p.mean[j] + pr[0] * p.directions[0][j] + pr[1] * p.directions[1][j] - x[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn pca_degenerate_sets() {
        let p = pca2(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(p.projections[0], [0.0, 0.0]);
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let p = pca2(&pts).unwrap();
        assert_eq!(p.projections[0], p.projections[2]);
    }

    proptest! {
        #[test]
        fn accuracy_identity(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = ConfusionMatrix::from_pairs(4, &t, &p).unwrap();
            let m = cm.prf1();
            let total = cm.total() as f64;
            let lhs: f64 = (0..4).map(|i| m.per_class[i].recall * cm.row_total(i) as f64 / total).sum();
            prop_assert!((lhs - m.accuracy).abs() < 1e-12);
            for c in &m.per_class {
                if c.precision > 0.0 && c.recall > 0.0 {
                    prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
                    prop_assert!(c.f1 >= c.precision.min(c.recall) - 1e-12);
                }
            }
        }
    }
}

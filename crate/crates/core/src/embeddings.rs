//! Skip-gram word vectors with negative sampling, and cosine neighbours.

use std::fs;
use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dot;
use crate::rng;
use crate::textprep::{TokenizedReport, Vocabulary, PAD_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    /// Row-major `vocab × dim`.
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; rows * dim] }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn row(&self, id: u32) -> &[f32] {
        let i = id as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, a: u32, b: u32) -> f64 {
        cosine(self.row(a), self.row(b))
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut s = format!("dim={} vocab={}\n", self.dim, self.rows());
        for r in 0..self.rows() {
            let row: Vec<String> = self.row(r as u32).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let bad = |line: usize, reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let mut dim = None;
        let mut rows = None;
        for part in header.split_whitespace() {
            match part.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("vocab", v)) => rows = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let (dim, rows) = dim
            .zip(rows)
            .ok_or_else(|| bad(1, "expected header `dim=<d> vocab=<V>`".into()))?;
        let mut data = Vec::with_capacity(dim * rows);
        for (i, line) in lines.enumerate() {
            let before = data.len();
            for v in line.split_whitespace() {
                data.push(v.parse::<f32>().map_err(|e| bad(i + 2, e.to_string()))?);
            }
            if data.len() - before != dim {
                return Err(bad(i + 2, format!("expected {dim} values")));
            }
        }
        if data.len() != dim * rows {
            return Err(bad(rows + 1, format!("expected {rows} rows")));
        }
        Ok(Self { dim, data })
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub subsample: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            subsample: 1e-3,
        }
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

/// Trains input vectors with skip-gram and negative sampling.
///
/// Tokens below `min_count` are mapped to the OOV row and trained like any
/// other token. Random draws happen in this order, per epoch, per report,
/// per position: the subsampling test, the reduced window size, then for
/// each context word `negatives` draws from the unigram^0.75 table.
pub fn train_skipgram(
    corpus: &[TokenizedReport],
    vocab: &Vocabulary,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    if cfg.dim == 0 || cfg.window == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidConfig("dim, window and epochs must be positive".into()));
    }
    let docs: Vec<Vec<u32>> = corpus
        .iter()
        .map(|r| r.sentences.iter().flatten().map(|t| vocab.lookup(t)).collect::<Vec<u32>>())
        .filter(|d| !d.is_empty())
        .collect();
    let total: u64 = docs.iter().map(|d| d.len() as u64).sum();
    if total == 0 {
        return Err(Error::InsufficientData("empty corpus for skip-gram training".into()));
    }
    let v = vocab.len();
    let mut counts = vec![0u64; v];
    for id in docs.iter().flatten() {
        counts[*id as usize] += 1;
    }
    let weights: Vec<f64> = counts.iter().map(|c| (*c as f64).powf(0.75)).collect();
    let negative_table = WeightedIndex::new(&weights)
        .map_err(|e| Error::InsufficientData(format!("negative sampling table: {e}")))?;
    let keep_prob: Vec<f64> = counts
        .iter()
        .map(|c| {
            if cfg.subsample <= 0.0 || *c == 0 {
                return 1.0;
            }
            let f = *c as f64 / total as f64;
            let t = cfg.subsample;
            ((f / t).sqrt() + 1.0) * t / f
        })
        .collect();

    let dim = cfg.dim;
    let mut rng = rng::seeded(seed);
    let mut input = EmbeddingMatrix::zeros(v, dim);
    let bound = 0.5 / dim as f32;
    for x in input.data[dim..].iter_mut() {
        *x = rng.random_range(-bound..bound);
    }
    let mut output = vec![0f32; v * dim];

    let planned = (cfg.epochs as u64 * total) as f64;
    let mut processed = 0u64;
    let mut neu1e = vec![0f32; dim];
    let mut kept = Vec::new();
    for _ in 0..cfg.epochs {
        for doc in &docs {
            kept.clear();
            for &id in doc {
                let p = keep_prob[id as usize];
                if p >= 1.0 || rng.random::<f64>() < p {
                    kept.push(id);
                }
            }
            processed += doc.len() as u64;
            let lr = (cfg.initial_lr * (1.0 - processed as f64 / (planned + 1.0))).max(cfg.initial_lr * 1e-4) as f32;
            for (pos, &center) in kept.iter().enumerate() {
                let b = rng.random_range(1..=cfg.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(kept.len() - 1);
                for (cpos, &ctx) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    neu1e.iter_mut().for_each(|x| *x = 0.0);
                    let ci = center as usize * dim;
                    for n in 0..=cfg.negatives {
                        let (target, label) = if n == 0 {
                            (ctx, 1.0f32)
                        } else {
                            let t = negative_table.sample(&mut rng) as u32;
                            if t == ctx {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let ti = target as usize * dim;
                        let f = dot(&input.data[ci..ci + dim], &output[ti..ti + dim]);
                        let g = (label - sigmoid(f)) * lr;
                        for k in 0..dim {
                            neu1e[k] += g * output[ti + k];
                            output[ti + k] += g * input.data[ci + k];
                        }
                    }
                    for k in 0..dim {
                        input.data[ci + k] += neu1e[k];
                    }
                }
            }
        }
    }
    debug_assert!(input.row(PAD_ID).iter().all(|x| *x == 0.0));
    if !input.data.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("skip-gram embeddings".into()));
    }
    Ok(input)
}

/// The `k` most cosine-similar tokens, excluding the query and rows 0–1.
pub fn nearest_neighbors(
    matrix: &EmbeddingMatrix,
    vocab: &Vocabulary,
    word: &str,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let q = vocab
        .get(word)
        .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))?;
    let mut sims: Vec<(u32, f64)> = (2..matrix.rows() as u32)
        .filter(|id| *id != q)
        .map(|id| (id, matrix.cosine(q, id)))
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(sims
        .into_iter()
        .take(k.max(1))
        .map(|(id, s)| (vocab.decode(id).to_string(), s))
        .collect())
}

/// Rows for ids not covered by `matrix` are left as in `target`; row 0 stays zero.
pub fn copy_into(matrix: &EmbeddingMatrix, target: &mut [f32], dim: usize) -> Result<()> {
    if matrix.dim != dim {
        return Err(Error::Shape(format!("embedding dim {} vs model dim {dim}", matrix.dim)));
    }
    let n = matrix.data.len().min(target.len());
    target[dim..n].copy_from_slice(&matrix.data[dim..n]);
    target[..dim].iter_mut().for_each(|x| *x = 0.0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Field;
    use crate::textprep::{build_vocabulary, OOV_ID};
    use rand::seq::IndexedRandom;

    fn docs(sentences: Vec<Vec<String>>) -> Vec<TokenizedReport> {
        sentences
            .into_iter()
            .enumerate()
            .map(|(i, s)| TokenizedReport {
                report_id: i.to_string(),
                sentences: vec![s],
                sentence_fields: vec![Field::Description],
            })
            .collect()
    }

    fn topic_corpus() -> Vec<TokenizedReport> {
        let mut rng = rng::seeded(11);
        let topics: [(&[&str], &[&str]); 3] = [
            (&["hard", "hat"], &["helmet", "site", "wear", "crown", "strap", "visor"]),
            (&["boots"], &["sole", "lace", "toe", "heel", "leather", "grip"]),
            (&["ladder"], &["rung", "climb", "step", "top", "lean", "rail"]),
        ];
        let mut out = Vec::new();
        for i in 0..600 {
            let (planted, fillers) = topics[i % 3];
            let mut s: Vec<String> = (0..6).map(|_| fillers.choose(&mut rng).unwrap().to_string()).collect();
            let at = rng.random_range(0..=s.len());
            for (j, p) in planted.iter().enumerate() {
                s.insert(at + j, p.to_string());
            }
            out.push(s);
        }
        docs(out)
    }

    fn small_cfg() -> SkipGramConfig {
        SkipGramConfig { dim: 16, epochs: 10, ..Default::default() }
    }

    #[test]
    fn degenerate_corpus_trains() {
        let corpus = docs(vec![vec!["x".to_string(); 20]; 5]);
        let vocab = build_vocabulary(&corpus, 1);
        let m = train_skipgram(&corpus, &vocab, &small_cfg(), 1).unwrap();
        assert!(m.row(2).iter().all(|x| x.is_finite()));
        assert!(m.row(0).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn empty_corpus_errors() {
        let vocab = build_vocabulary(&[], 1);
        assert!(train_skipgram(&[], &vocab, &small_cfg(), 1).is_err());
    }

    #[test]
    fn co_occurrence_beats_separation() {
        let corpus = topic_corpus();
        let vocab = build_vocabulary(&corpus, 1);
        let m = train_skipgram(&corpus, &vocab, &small_cfg(), 3).unwrap();
        let id = |w| vocab.get(w).unwrap();
        let together = m.cosine(id("hard"), id("hat"));
        let apart = m.cosine(id("boots"), id("ladder"));
        assert!(together > apart, "{together} vs {apart}");
        assert!(m.row(0).iter().all(|x| *x == 0.0));
        assert_eq!(m.cosine(id("hard"), id("boots")), m.cosine(id("boots"), id("hard")));
    }

    #[test]
    fn shared_contexts_are_neighbours() {
        // "left tool right" triples with window 1: only tools share contexts.
        let mut rng = rng::seeded(5);
        let mut sents = Vec::new();
        let other = ["ladder", "rope", "glove", "drum", "forklift", "crane", "pallet", "hose"];
        let left = ["hit", "struck", "swung", "dropped", "grabbed", "held"];
        let right = ["nail", "thumb", "board", "peg", "wedge", "stake"];
        let left2 = ["lift", "carry", "move", "store", "load", "check"];
        let right2 = ["bay", "yard", "dock", "shelf", "van", "shed"];
        for i in 0..1200 {
            let (tool, l, r) = match i % 4 {
                0 => ("hammer", &left, &right),
                1 => ("mallet", &left, &right),
                _ => (*other.choose(&mut rng).unwrap(), &left2, &right2),
            };
            sents.push(vec![
                l.choose(&mut rng).unwrap().to_string(),
                tool.to_string(),
                r.choose(&mut rng).unwrap().to_string(),
            ]);
        }
        let corpus = docs(sents);
        let vocab = build_vocabulary(&corpus, 1);
        let cfg = SkipGramConfig { window: 1, ..small_cfg() };
        let m = train_skipgram(&corpus, &vocab, &cfg, 9).unwrap();
        let nn = nearest_neighbors(&m, &vocab, "hammer", 3).unwrap();
        assert!(nn.iter().any(|(w, _)| w == "mallet"), "{nn:?}");
        assert!(nn.iter().all(|(w, _)| w != "hammer"));
        assert!(nn.windows(2).all(|p| p[0].1 >= p[1].1));
        assert!(matches!(nearest_neighbors(&m, &vocab, "zzz", 3), Err(Error::OutOfVocabulary(_))));
    }

    #[test]
    fn deterministic_and_file_roundtrip() {
        let corpus = topic_corpus();
        let vocab = build_vocabulary(&corpus, 1);
        let a = train_skipgram(&corpus, &vocab, &small_cfg(), 4).unwrap();
        let b = train_skipgram(&corpus, &vocab, &small_cfg(), 4).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        a.save_text(&p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with(&format!("dim=16 vocab={}\n", vocab.len())));
        assert_eq!(EmbeddingMatrix::load_text(&p).unwrap(), a);
    }

    #[test]
    fn oov_row_is_trained() {
        let mut corpus = topic_corpus();
        corpus[0].sentences[0].push("singleton".into());
        let vocab = build_vocabulary(&corpus, 2);
        let m = train_skipgram(&corpus, &vocab, &small_cfg(), 4).unwrap();
        assert!(m.row(OOV_ID).iter().any(|x| *x != 0.0));
        let norms_ok = (2..vocab.len() as u32).all(|i| {
            let n: f32 = m.row(i).iter().map(|x| x * x).sum();
            n.is_finite() && n > 0.0
        });
        assert!(norms_ok);
    }
}

//! Raw tf·idf n-gram features.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse row: (column, value) sorted by column.
pub type SparseVec = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfConfig {
    pub ngram_max: usize,
    /// Features whose document frequency exceeds this share of documents are dropped.
    pub df_ceiling: f64,
    /// `None` keeps every surviving n-gram.
    pub max_features: Option<usize>,
    pub max_tokens: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self { ngram_max: 3, df_ceiling: 0.9, max_features: None, max_tokens: 200 }
    }
}

impl TfidfConfig {
    /// Feature budget tied to the size of the deep-model vocabulary.
    pub fn with_vocab_budget(vocab_size: usize) -> Self {
        Self { max_features: Some(6 * vocab_size), ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.ngram_max == 0 || self.max_tokens == 0 {
            return Err(Error::InvalidConfig("ngram_max and max_tokens must be positive".into()));
        }
        if !(self.df_ceiling > 0.0 && self.df_ceiling <= 1.0) {
            return Err(Error::InvalidConfig(format!("df_ceiling {} not in (0, 1]", self.df_ceiling)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVectorizer {
    pub config: TfidfConfig,
    /// Training corpus size.
    pub m: usize,
    features: Vec<String>,
    df: Vec<usize>,
    idf: Vec<f64>,
    index: HashMap<String, u32>,
}

pub fn idf(m: usize, df: usize) -> f64 {
    ((m + 1) as f64 / df as f64).ln()
}

/// Calls `f` on every 1..=n_max gram of `tokens`, joined by single spaces.
fn for_each_ngram<S: AsRef<str>>(tokens: &[S], n_max: usize, mut f: impl FnMut(String)) {
    for start in 0..tokens.len() {
        let mut gram = String::new();
        for (n, tok) in tokens[start..].iter().take(n_max).enumerate() {
            if n > 0 {
                gram.push(' ');
            }
            gram.push_str(tok.as_ref());
            f(gram.clone());
        }
    }
}

impl TfidfVectorizer {
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>], config: TfidfConfig) -> Result<Self> {
        config.validate()?;
        if docs.is_empty() {
            return Err(Error::InsufficientData("empty corpus for tf-idf".into()));
        }
        let m = docs.len();
        let mut stats: HashMap<String, (usize, usize)> = HashMap::new();
        for doc in docs {
            let doc = &doc[..doc.len().min(config.max_tokens)];
            let mut seen: HashMap<String, ()> = HashMap::new();
            for_each_ngram(doc, config.ngram_max, |g| {
                let e = stats.entry(g.clone()).or_insert((0, 0));
                e.0 += 1;
                if seen.insert(g, ()).is_none() {
                    e.1 += 1;
                }
            });
        }
        let mut ranked: Vec<(String, usize, usize)> = stats
            .into_iter()
            .filter(|(_, (_, df))| *df as f64 / m as f64 <= config.df_ceiling)
            .map(|(g, (tf, df))| (g, tf, df))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(cap) = config.max_features {
            ranked.truncate(cap);
        }
        let features: Vec<String> = ranked.iter().map(|r| r.0.clone()).collect();
        let df: Vec<usize> = ranked.iter().map(|r| r.2).collect();
        Ok(Self::assemble(config, m, features, df))
    }

    fn assemble(config: TfidfConfig, m: usize, features: Vec<String>, df: Vec<usize>) -> Self {
        let idf = df.iter().map(|d| idf(m, *d)).collect();
        let index = features.iter().enumerate().map(|(i, f)| (f.clone(), i as u32)).collect();
        Self { config, m, features, df, idf, index }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, col: usize) -> &str {
        &self.features[col]
    }

    pub fn column(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).map(|c| *c as usize)
    }

    pub fn df(&self, col: usize) -> usize {
        self.df[col]
    }

    pub fn idf(&self, col: usize) -> f64 {
        self.idf[col]
    }

    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let tokens = &tokens[..tokens.len().min(self.config.max_tokens)];
        let mut tf: HashMap<u32, usize> = HashMap::new();
        for_each_ngram(tokens, self.config.ngram_max, |g| {
            if let Some(c) = self.index.get(&g) {
                *tf.entry(*c).or_insert(0) += 1;
            }
        });
        let mut row: SparseVec = tf.into_iter().map(|(c, n)| (c, n as f64 * self.idf[c as usize])).collect();
        row.sort_by_key(|e| e.0);
        row
    }

    /// TSV: `ngram<TAB>df<TAB>idf<TAB>column`, after a `# m=<m> ngram_max=<n> max_tokens=<t>` line.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# m={} ngram_max={} max_tokens={}", self.m, self.config.ngram_max, self.config.max_tokens)?;
        for (i, f) in self.features.iter().enumerate() {
            writeln!(w, "{f}\t{}\t{:.17e}\t{i}", self.df[i], self.idf[i])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let mut config = TfidfConfig { df_ceiling: 1.0, ..TfidfConfig::default() };
        let mut m = None;
        for kv in header.trim_start_matches('#').split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(1, "bad header"))?;
            let v: usize = v.parse().map_err(|_| bad(1, "bad header value"))?;
            match k {
                "m" => m = Some(v),
                "ngram_max" => config.ngram_max = v,
                "max_tokens" => config.max_tokens = v,
                _ => return Err(bad(1, "unknown header key")),
            }
        }
        let m = m.ok_or_else(|| bad(1, "header lacks m"))?;
        let (mut features, mut df) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line = line?;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(i + 2, "expected 4 columns"));
            }
            if cols[3].parse::<usize>().ok() != Some(features.len()) {
                return Err(bad(i + 2, "columns out of order"));
            }
            features.push(cols[0].to_string());
            df.push(cols[1].parse().map_err(|_| bad(i + 2, "bad df"))?);
        }
        Ok(Self::assemble(config, m, features, df))
    }
}

/// Sparse-dense dot product.
pub fn sparse_dot(x: &[(u32, f64)], w: &[f64]) -> f64 {
    x.iter().map(|(c, v)| v * w[*c as usize]).sum()
}

/// Dot product of two column-sorted sparse rows.
pub fn sparse_sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

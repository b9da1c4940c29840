//! Synthetic incident corpora with planted precursor and outcome-leak
//! phrases, for end-to-end checks of training and extraction.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng as _;
use rand::distr::Distribution;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};

use crate::corpus::{Field, OutcomeSchema, Report};
use crate::error::{Error, Result};

pub const OUTCOME: &str = "category";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub categories: Vec<String>,
    pub reports_per_category: usize,
    /// Per category, planted phrases of 2–4 tokens.
    pub precursors: Vec<Vec<String>>,
    /// Per category, outcome-leak phrases.
    pub leaks: Vec<Vec<String>>,
    pub distractor_vocab: usize,
    pub zipf_exponent: f64,
    pub p_precursor: f64,
    pub p_leak: f64,
    /// Share of distractor slots replaced by random-letter tokens.
    pub noise_rate: f64,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_sentence_tokens: usize,
    pub max_sentence_tokens: usize,
    pub seed: u64,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            categories: strings(&["access", "equipment", "slips", "dropped", "ppe"]),
            reports_per_category: 400,
            precursors: vec![
                strings(&["ladder not secured", "scaffold plank absent", "loose handrail"]),
                strings(&["hydraulic hose burst", "guard removed", "faulty wiring exposed"]),
                strings(&["wet floor", "oil spill unmarked", "icy walkway"]),
                strings(&["unsecured load swung", "tool fell overhead", "crane sling snapped"]),
                strings(&["without safety glasses", "gloves torn", "no hard hat"]),
            ],
            leaks: vec![
                strings(&["taken to hospital"]),
                strings(&["stitches were required"]),
                strings(&["ice pack applied"]),
                strings(&["ambulance called"]),
                strings(&["eye wash station"]),
            ],
            distractor_vocab: 2000,
            zipf_exponent: 1.1,
            p_precursor: 0.9,
            p_leak: 0.3,
            noise_rate: 0.02,
            min_sentences: 3,
            max_sentences: 10,
            min_sentence_tokens: 4,
            max_sentence_tokens: 10,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn k(&self) -> usize {
        self.categories.len()
    }

    pub fn schema(&self) -> Result<OutcomeSchema> {
        let cats: Vec<&str> = self.categories.iter().map(String::as_str).collect();
        OutcomeSchema::new(OUTCOME, &cats)
    }

    /// Every token of every planted and leak phrase.
    fn reserved_tokens(&self) -> HashSet<String> {
        self.precursors.iter().chain(&self.leaks).flatten().flat_map(|p| p.split_whitespace().map(String::from)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let k = self.k();
        if k < 2 || self.precursors.len() != k || self.leaks.len() != k {
            return bad(format!("need K >= 2 categories with one precursor and one leak list each (K = {k})"));
        }
        for (name, p) in [("p_precursor", self.p_precursor), ("p_leak", self.p_leak), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.reports_per_category == 0 || self.distractor_vocab < 10 || self.zipf_exponent <= 0.0 {
            return bad("reports_per_category, distractor_vocab >= 10 and zipf_exponent must be positive".into());
        }
        if self.min_sentences == 0
            || self.min_sentences > self.max_sentences
            || self.min_sentence_tokens == 0
            || self.min_sentence_tokens > self.max_sentence_tokens
        {
            return bad("sentence count and length ranges must be non-empty".into());
        }
        let mut owner: BTreeMap<String, usize> = BTreeMap::new();
        for (c, phrases) in self.precursors.iter().enumerate() {
            if phrases.is_empty() && self.p_precursor > 0.0 {
                return bad(format!("category `{}` has no precursor phrases", self.categories[c]));
            }
            for p in phrases {
                let n = p.split_whitespace().count();
                if !(2..=4).contains(&n) {
                    return bad(format!("precursor `{p}` must have 2-4 tokens"));
                }
                for t in p.split_whitespace() {
                    if owner.insert(t.to_string(), c).is_some_and(|o| o != c) {
                        return bad(format!("token `{t}` is planted in two categories"));
                    }
                }
            }
        }
        for (c, phrases) in self.leaks.iter().enumerate() {
            if phrases.is_empty() && self.p_leak > 0.0 {
                return bad(format!("category `{}` has no leak phrases", self.categories[c]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTruth {
    pub precursors: Vec<String>,
    pub leaks: Vec<String>,
}

pub type GroundTruth = BTreeMap<String, CategoryTruth>;

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Distinct pronounceable words, none equal to a reserved token.
fn distractor_words(n: usize, reserved: &HashSet<String>, rng: &mut crate::rng::Rng) -> Vec<String> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
        }
        if rng.random_bool(0.3) {
            w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        }
        if !reserved.contains(&w) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn noise_token(rng: &mut crate::rng::Rng, reserved: &HashSet<String>) -> String {
    loop {
        let len = rng.random_range(4..=9);
        let w: String = (0..len).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect();
        if !reserved.contains(&w) {
            return w;
        }
    }
}

/// Generates `K · reports_per_category` reports (categories interleaved) and
/// the planted ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<Report>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = crate::rng::component_rng(cfg.seed, "synthcorpus");
    let reserved = cfg.reserved_tokens();
    let words = distractor_words(cfg.distractor_vocab, &reserved, &mut rng);
    let zipf = Zipf::new(cfg.distractor_vocab as f64, cfg.zipf_exponent)
        .map_err(|e| Error::InvalidConfig(format!("zipf: {e}")))?;
    let distractor = |rng: &mut crate::rng::Rng| -> String {
        if cfg.noise_rate > 0.0 && rng.random_bool(cfg.noise_rate) {
            noise_token(rng, &reserved)
        } else {
            words[zipf.sample(rng) as usize - 1].clone()
        }
    };

    let k = cfg.k();
    let n = k * cfg.reports_per_category;
    let width = n.to_string().len();
    let mut reports = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let title_len = rng.random_range(2..=5);
        let title: Vec<String> = (0..title_len).map(|_| distractor(&mut rng)).collect();
        let n_sent = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
        let mut sentences: Vec<Vec<String>> = (0..n_sent)
            .map(|_| {
                let len = rng.random_range(cfg.min_sentence_tokens..=cfg.max_sentence_tokens);
                (0..len).map(|_| distractor(&mut rng)).collect()
            })
            .collect();
        if rng.random_bool(cfg.p_precursor) {
            let phrases = &cfg.precursors[c];
            let phrase = &phrases[rng.random_range(0..phrases.len())];
            let s = rng.random_range(0..n_sent);
            let pos = rng.random_range(0..=sentences[s].len());
            let toks: Vec<String> = phrase.split_whitespace().map(String::from).collect();
            sentences[s].splice(pos..pos, toks);
        }
        if rng.random_bool(cfg.p_leak) {
            let phrases = &cfg.leaks[c];
            let phrase = &phrases[rng.random_range(0..phrases.len())];
            sentences.push(phrase.split_whitespace().map(String::from).collect());
        }
        let body: Vec<String> = sentences.iter().map(|s| format!("{} .", s.join(" "))).collect();
        reports.push(Report {
            id: format!("syn-{i:0width$}"),
            fields: BTreeMap::from([(Field::Title, title.join(" ")), (Field::Description, body.join(" "))]),
            labels: BTreeMap::from([(OUTCOME.to_string(), BTreeSet::from([cfg.categories[c].clone()]))]),
        });
    }
    let truth = cfg
        .categories
        .iter()
        .enumerate()
        .map(|(c, name)| (name.clone(), CategoryTruth { precursors: cfg.precursors[c].clone(), leaks: cfg.leaks[c].clone() }))
        .collect();
    Ok((reports, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn small(p_prec: f64, p_leak: f64) -> SynthConfig {
        SynthConfig { reports_per_category: 60, p_precursor: p_prec, p_leak, ..Default::default() }
    }

    fn text(r: &Report) -> String {
        format!(" {} ", r.fields.values().cloned().collect::<Vec<_>>().join(" "))
    }

    fn category(r: &Report) -> &str {
        r.labels[OUTCOME].iter().next().unwrap()
    }

    #[test]
    fn default_size_and_determinism() {
        let cfg = SynthConfig::default();
        let (a, truth) = generate(&cfg).unwrap();
        assert_eq!(a.len(), 2000);
        assert_eq!(truth.len(), 5);
        let (b, _) = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        crate::corpus::write_jsonl(&pa, &a).unwrap();
        crate::corpus::write_jsonl(&pb, &b).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        let (c, _) = generate(&SynthConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn inclusion_probability_extremes() {
        let cfg = small(1.0, 0.0);
        let (reports, truth) = generate(&cfg).unwrap();
        for r in &reports {
            let t = text(r);
            let planted = &truth[category(r)].precursors;
            assert!(planted.iter().any(|p| t.contains(&format!(" {p} "))), "{t}");
        }
        let cfg = small(0.0, 0.0);
        let (reports, _) = generate(&cfg).unwrap();
        let reserved = cfg.reserved_tokens();
        for r in &reports {
            assert!(text(r).split_whitespace().all(|w| !reserved.contains(w)));
        }
    }

    #[test]
    fn planted_phrases_stay_in_their_category() {
        let cfg = small(0.9, 0.5);
        let (reports, truth) = generate(&cfg).unwrap();
        for r in &reports {
            let t = text(r);
            for (cat, ct) in &truth {
                if cat != category(r) {
                    for p in ct.precursors.iter().chain(&ct.leaks) {
                        assert!(!t.contains(&format!(" {p} ")), "{p} leaked into {}", r.id);
                    }
                }
            }
        }
    }

    #[test]
    fn sentence_shape() {
        let cfg = small(0.0, 0.0);
        let (reports, _) = generate(&cfg).unwrap();
        for r in &reports {
            let body = r.field(Field::Description).unwrap();
            let sents: Vec<&str> = body.split(" .").map(str::trim).filter(|s| !s.is_empty()).collect();
            assert!((3..=10).contains(&sents.len()));
            assert!(sents.iter().all(|s| (4..=10).contains(&s.split_whitespace().count())));
        }
    }

    #[test]
    fn overlapping_phrases_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.precursors[1].push("wet hose".into());
        assert!(generate(&cfg).is_err());
        let cfg = SynthConfig { p_leak: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn distractors_are_category_independent() {
        // Contingency test on the 20 most frequent distractors by category.
        let cfg = SynthConfig { p_precursor: 0.0, p_leak: 0.0, noise_rate: 0.0, ..Default::default() };
        let (reports, _) = generate(&cfg).unwrap();
        let mut counts: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &reports {
            let c = cfg.categories.iter().position(|n| n == category(r)).unwrap();
            for w in text(r).split_whitespace().filter(|w| *w != ".") {
                counts.entry(w.to_string()).or_insert_with(|| vec![0.0; 5])[c] += 1.0;
            }
        }
        let mut top: Vec<(String, Vec<f64>)> = counts.into_iter().collect();
        top.sort_by(|a, b| b.1.iter().sum::<f64>().total_cmp(&a.1.iter().sum::<f64>()).then(a.0.cmp(&b.0)));
        top.truncate(20);
        let col: Vec<f64> = (0..5).map(|c| top.iter().map(|r| r.1[c]).sum()).collect();
        let total: f64 = col.iter().sum();
        let mut chi2 = 0.0;
        for (_, row) in &top {
            let rs: f64 = row.iter().sum();
            for c in 0..5 {
                let e = rs * col[c] / total;
                chi2 += (row[c] - e).powi(2) / e;
            }
        }
        let p = 1.0 - ChiSquared::new((19 * 4) as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }
}

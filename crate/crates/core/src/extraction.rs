//! Corpus-level aggregation of interpretability signals into ranked text
//! fragments, per-report explanations and their HTML rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{CnnModel, argmax};
use crate::error::{Error, Result};
use crate::han::{HanModel, word_scores};
use crate::model::Classifier;
use crate::textprep::{PAD_ID, TokenizedReport, Vocabulary, encode_cnn, encode_han};
use crate::tfidf_svm::{LinearSvmOvR, TfidfVectorizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Regions,
    Saliency,
    Attention,
    Svm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Regions => "regions",
            Method::Saliency => "saliency",
            Method::Attention => "attention",
            Method::Svm => "svm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Regions, Method::Saliency, Method::Attention, Method::Svm].into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub fragment: String,
    pub score: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecursorRanking {
    pub method: Method,
    pub outcome: String,
    pub category: String,
    pub entries: Vec<RankEntry>,
}

impl PrecursorRanking {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("rank\tfragment\tscore\tsupport\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", i + 1, e.fragment, e.score, e.support);
        }
        s
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// Per-fragment contributions from each report. Sums are taken over sorted
/// contributions, so totals do not depend on report order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregate {
    contributions: BTreeMap<String, Vec<f64>>,
    support: BTreeMap<String, usize>,
    reports: usize,
}

impl Aggregate {
    /// Adds one report's fragments; a fragment seen twice in the report
    /// counts once towards support.
    pub fn add_report(&mut self, fragments: Vec<(String, f64)>) {
        let mut seen: BTreeMap<String, f64> = BTreeMap::new();
        for (f, s) in fragments {
            *seen.entry(f).or_insert(0.0) += s;
        }
        for (f, s) in seen {
            self.contributions.entry(f.clone()).or_default().push(s);
            *self.support.entry(f).or_insert(0) += 1;
        }
        self.reports += 1;
    }

    pub fn merge(&mut self, other: Aggregate) {
        for (f, v) in other.contributions {
            self.contributions.entry(f).or_default().extend(v);
        }
        for (f, n) in other.support {
            *self.support.entry(f).or_insert(0) += n;
        }
        self.reports += other.reports;
    }

    pub fn num_reports(&self) -> usize {
        self.reports
    }

    pub fn score(&self, fragment: &str) -> f64 {
        self.contributions.get(fragment).map_or(0.0, |v| sorted_sum(v))
    }

    pub fn total(&self) -> f64 {
        self.contributions.values().map(|v| sorted_sum(v)).sum()
    }

    /// Entries by score descending (ties by fragment), truncated to `k`.
    pub fn ranking(&self, k: usize) -> Vec<RankEntry> {
        let mut out: Vec<RankEntry> = self
            .contributions
            .iter()
            .map(|(f, v)| RankEntry { fragment: f.clone(), score: sorted_sum(v), support: self.support[f] })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.fragment.cmp(&b.fragment)));
        out.truncate(k);
        out
    }
}

fn sorted_sum(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum()
}

/// Salient tokens score above `mean + z·σ` of their report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeRule {
    pub z: f64,
}

impl Default for MergeRule {
    fn default() -> Self {
        Self { z: 2.0 }
    }
}

/// Maximal runs of adjacent salient tokens within one segment, scored by the
/// sum of their members. With `keep_rest`, every other token is emitted as a
/// unigram so the report's total is preserved; without it, a report with no
/// salient token yields its single top-scoring token.
pub fn salient_fragments(tokens: &[String], scores: &[f64], segments: &[usize], rule: MergeRule, keep_rest: bool) -> Vec<(String, f64)> {
    let n = tokens.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let threshold = mean + rule.z * sd;
    let salient: Vec<bool> = scores.iter().map(|s| *s > threshold).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if salient[i] {
            let mut j = i + 1;
            while j < n && salient[j] && segments[j] == segments[i] {
                j += 1;
            }
            out.push((tokens[i..j].join(" "), scores[i..j].iter().sum()));
            i = j;
        } else {
            if keep_rest {
                out.push((tokens[i].clone(), scores[i]));
            }
            i += 1;
        }
    }
    if !keep_rest && out.is_empty() {
        let top = argmax(scores);
        out.push((tokens[top].clone(), scores[top]));
    }
    out
}

/// Token strings the model sees (`OOV` for unknown words), in flat order.
fn model_tokens(ids: &[u32], vocab: &Vocabulary) -> Vec<String> {
    ids.iter().filter(|id| **id != PAD_ID).map(|id| vocab.decode(*id).to_string()).collect()
}

fn region_fragments(model: &CnnModel<f32>, vocab: &Vocabulary, report: &TokenizedReport, top_k: usize) -> Result<Vec<(String, f64)>> {
    let input = encode_cnn(report, vocab, model.config.s);
    let mut regions = model.region_embeddings(&input)?;
    regions.retain(|r| !r.all_padding);
    regions.sort_by(|a, b| b.norm.total_cmp(&a.norm).then(a.width.cmp(&b.width)).then(a.start.cmp(&b.start)));
    Ok(regions
        .iter()
        .take(top_k)
        .map(|r| (model_tokens(&input.ids[r.start..r.start + r.width], vocab).join(" "), r.norm))
        .collect())
}

fn saliency_fragments(model: &CnnModel<f32>, vocab: &Vocabulary, report: &TokenizedReport, rule: MergeRule) -> Result<Vec<(String, f64)>> {
    let input = encode_cnn(report, vocab, model.config.s);
    let sal = model.saliency(&input)?;
    let n = report.num_tokens().min(model.config.s);
    let tokens = model_tokens(&input.ids[..n], vocab);
    let fields: Vec<usize> = report.token_fields().iter().take(n).map(|f| *f as usize).collect();
    Ok(salient_fragments(&tokens, &sal[..n], &fields, rule, false))
}

fn attention_fragments(model: &HanModel<f32>, vocab: &Vocabulary, report: &TokenizedReport, rule: MergeRule) -> Result<Vec<(String, f64)>> {
    let (mw, ms) = (model.config.max_words, model.config.max_sents);
    let input = encode_han(report, vocab, mw, ms);
    let trace = model.forward(&input, false, &mut crate::rng::seeded(0))?;
    let scores = word_scores(&trace);
    let (mut tokens, mut s, mut seg) = (Vec::new(), Vec::new(), Vec::new());
    for p in 0..ms * mw {
        if input.ids[p] != PAD_ID {
            tokens.push(vocab.decode(input.ids[p]).to_string());
            s.push(scores[p]);
            seg.push(p / mw);
        }
    }
    Ok(salient_fragments(&tokens, &s, &seg, rule, true))
}

fn aggregate_with(reports: &[&TokenizedReport], f: impl Fn(&TokenizedReport) -> Result<Vec<(String, f64)>> + Sync) -> Result<Aggregate> {
    let per_report = crate::parallel::par_map(reports, |r| if r.is_empty() { Ok(None) } else { f(r).map(Some) });
    let mut agg = Aggregate::default();
    for frags in per_report {
        if let Some(frags) = frags? {
            agg.add_report(frags);
        }
    }
    Ok(agg)
}

/// Top `top_k` regions (by feature-map norm, across branches) of each
/// report, keyed by their token string.
pub fn aggregate_regions(model: &CnnModel<f32>, vocab: &Vocabulary, reports: &[&TokenizedReport], top_k: usize) -> Result<Aggregate> {
    aggregate_with(reports, |r| region_fragments(model, vocab, r, top_k))
}

pub fn aggregate_saliency(model: &CnnModel<f32>, vocab: &Vocabulary, reports: &[&TokenizedReport], rule: MergeRule) -> Result<Aggregate> {
    aggregate_with(reports, |r| saliency_fragments(model, vocab, r, rule))
}

pub fn aggregate_attention(model: &HanModel<f32>, vocab: &Vocabulary, reports: &[&TokenizedReport], rule: MergeRule) -> Result<Aggregate> {
    aggregate_with(reports, |r| attention_fragments(model, vocab, r, rule))
}

/// Positive-coefficient n-grams of one category; support is the n-gram's
/// document frequency.
pub fn aggregate_svm(model: &LinearSvmOvR, vectorizer: &TfidfVectorizer, category: usize, k: usize) -> Vec<RankEntry> {
    model
        .top_ngrams(vectorizer, category, k)
        .into_iter()
        .map(|(g, w)| {
            let support = vectorizer.column(&g).map_or(0, |c| vectorizer.df(c));
            RankEntry { fragment: g, score: w, support }
        })
        .collect()
}

/// Groups reports for aggregation: by true label or by the model's prediction.
pub fn group_by_category<'a>(reports: &[&'a TokenizedReport], categories: &[usize], k: usize) -> Vec<Vec<&'a TokenizedReport>> {
    let mut groups = vec![Vec::new(); k];
    for (r, c) in reports.iter().zip(categories) {
        groups[*c].push(*r);
    }
    groups
}

/// True when `fragment` contains `phrase` as a token run, or is itself a
/// token run inside `phrase`.
pub fn phrase_recovered(fragment: &str, phrase: &str) -> bool {
    let f: Vec<&str> = fragment.split_whitespace().collect();
    let p: Vec<&str> = phrase.split_whitespace().collect();
    let contains = |hay: &[&str], needle: &[&str]| !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle);
    contains(&f, &p) || contains(&p, &f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportExplanation {
    pub report_id: String,
    pub model: String,
    pub probabilities: Vec<f64>,
    pub tokens: Vec<String>,
    pub token_scores: Vec<f64>,
    /// Sentence index of each token.
    pub token_sentence: Vec<usize>,
    /// HAN sentence attention, one per sentence that reached the model.
    pub sentence_scores: Option<Vec<f64>>,
}

pub fn explain_cnn(model: &CnnModel<f32>, vocab: &Vocabulary, report: &TokenizedReport) -> Result<ReportExplanation> {
    let input = encode_cnn(report, vocab, model.config.s);
    let probs = model.predict_proba(&input)?;
    let sal = model.saliency(&input)?;
    let n = report.num_tokens().min(model.config.s);
    let mut token_sentence = Vec::with_capacity(n);
    for (i, s) in report.sentences.iter().enumerate() {
        token_sentence.extend(std::iter::repeat_n(i, s.len()));
    }
    token_sentence.truncate(n);
    Ok(ReportExplanation {
        report_id: report.report_id.clone(),
        model: "cnn".into(),
        probabilities: probs.iter().map(|p| f64::from(*p)).collect(),
        tokens: report.flat_tokens().into_iter().take(n).map(String::from).collect(),
        token_scores: sal[..n].to_vec(),
        token_sentence,
        sentence_scores: None,
    })
}

pub fn explain_han(model: &HanModel<f32>, vocab: &Vocabulary, report: &TokenizedReport) -> Result<ReportExplanation> {
    let (mw, ms) = (model.config.max_words, model.config.max_sents);
    let input = encode_han(report, vocab, mw, ms);
    let trace = model.forward(&input, false, &mut crate::rng::seeded(0))?;
    let scores = word_scores(&trace);
    let (mut tokens, mut token_scores, mut token_sentence) = (Vec::new(), Vec::new(), Vec::new());
    for (i, sent) in report.sentences.iter().take(ms).enumerate() {
        for (j, t) in sent.iter().take(mw).enumerate() {
            tokens.push(t.clone());
            token_scores.push(scores[i * mw + j]);
            token_sentence.push(i);
        }
    }
    let n_sent = report.sentences.len().min(ms);
    Ok(ReportExplanation {
        report_id: report.report_id.clone(),
        model: "han".into(),
        probabilities: trace.probabilities.iter().map(|p| f64::from(*p)).collect(),
        tokens,
        token_scores,
        token_sentence,
        sentence_scores: Some(trace.sentence_alpha[..n_sent].iter().map(|a| f64::from(*a)).collect()),
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const MIN_OPACITY: f64 = 0.05;
const MAX_OPACITY: f64 = 0.95;

/// Linear map from `[min, max]` of `scores` to `[MIN_OPACITY, MAX_OPACITY]`.
pub fn opacities(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|s| if hi > lo { MIN_OPACITY + (MAX_OPACITY - MIN_OPACITY) * (s - lo) / (hi - lo) } else { MIN_OPACITY })
        .collect()
}

/// Self-contained HTML page: probability bars, then the text with each token
/// shaded by its score (and, for HAN, each sentence by its attention).
pub fn render_explanation_html(e: &ReportExplanation, categories: &[String]) -> String {
    let mut h = String::new();
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{id} ({model})</title>\n<style>\
         body{{font-family:sans-serif;max-width:60em;margin:2em auto}}\
         .bar{{background:#4a7bd0;height:1em;display:inline-block}}\
         .lbl{{display:inline-block;width:12em}}\
         .s{{padding-left:.5em;margin:.2em 0;border-left:.4em solid}}\
         </style></head><body>\n<h1>{id}</h1>\n<div class=\"probs\">\n",
        id = escape(&e.report_id),
        model = escape(&e.model)
    );
    let pred = argmax(&e.probabilities);
    for (i, (c, p)) in categories.iter().zip(&e.probabilities).enumerate() {
        let mark = if i == pred { " <b>*</b>" } else { "" };
        let _ = writeln!(
            h,
            "<div><span class=\"lbl\">{}</span><span class=\"bar\" style=\"width:{:.1}em\"></span> {:.3}{mark}</div>",
            escape(c),
            20.0 * p,
            p
        );
    }
    h.push_str("</div>\n<div class=\"text\">\n");
    let op = opacities(&e.token_scores);
    let sent_op = e.sentence_scores.as_ref().map(|s| opacities(s));
    let mut current = usize::MAX;
    for (t, (tok, o)) in e.tokens.iter().zip(&op).enumerate() {
        let s = e.token_sentence[t];
        if s != current {
            if current != usize::MAX {
                h.push_str("</div>\n");
            }
            let border = sent_op.as_ref().map_or(0.0, |so| so.get(s).copied().unwrap_or(0.0));
            let _ = write!(h, "<div class=\"s\" style=\"border-color:rgba(200,40,40,{border:.3})\">");
            current = s;
        }
        let _ = write!(
            h,
            "<span title=\"{:.4e}\" style=\"background:rgba(255,140,0,{o:.3})\">{}</span> ",
            e.token_scores[t],
            escape(tok)
        );
    }
    if current != usize::MAX {
        h.push_str("</div>\n");
    }
    h.push_str("</div>\n</body></html>\n");
    h
}

/// `<report_id>.<model>.html`
pub fn explanation_file_name(e: &ReportExplanation) -> String {
    format!("{}.{}.html", e.report_id, e.model)
}

pub fn ranking(method: Method, outcome: &str, category: &str, entries: Vec<RankEntry>) -> PrecursorRanking {
    PrecursorRanking { method, outcome: outcome.to_string(), category: category.to_string(), entries }
}

pub fn check_top_k(k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidConfig("top_k must be positive".into()));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::CnnConfig;
    use crate::corpus::Field;
    use crate::han::HanConfig;
    use crate::textprep::{build_vocabulary, preprocess};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn uniform_scores_fall_back_to_top_token() {
        let t = toks("a b c d");
        let f = salient_fragments(&t, &[0.5; 4], &[0; 4], MergeRule::default(), false);
        assert_eq!(f, vec![("a".to_string(), 0.5)]);
    }

    #[test]
    fn planted_run_becomes_one_fragment() {
        let t = toks("a b c d e f g h i j k l m n o p q r s t");
        let mut s = vec![0.01; 20];
        s[7] = 1.0;
        s[8] = 1.1;
        s[9] = 0.9;
        let f = salient_fragments(&t, &s, &[0; 20], MergeRule::default(), false);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].0, "h i j");
        assert!((f[0].1 - 3.0).abs() < 1e-12);
        // Scale covariance of the threshold.
        let s2: Vec<f64> = s.iter().map(|x| 2.0 * x).collect();
        let f2 = salient_fragments(&t, &s2, &[0; 20], MergeRule::default(), false);
        assert_eq!(f2[0].0, f[0].0);
        // A segment boundary splits the run.
        let mut seg = vec![0; 20];
        seg[9..].iter_mut().for_each(|x| *x = 1);
        let f3 = salient_fragments(&t, &s, &seg, MergeRule::default(), false);
        assert_eq!(f3.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["h i", "j"]);
    }

    #[test]
    fn keep_rest_preserves_total() {
        let t = toks("a b c d e f g h i j");
        let s = [0.02, 0.03, 0.5, 0.05, 0.1, 0.05, 0.05, 0.1, 0.05, 0.05];
        let f = salient_fragments(&t, &s, &[0; 10], MergeRule::default(), true);
        let total: f64 = f.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(f.iter().any(|x| x.0 == "c"));
    }

    #[test]
    fn recovery_rule() {
        assert!(phrase_recovered("the wet floor near", "wet floor"));
        assert!(phrase_recovered("floor", "wet floor"));
        assert!(phrase_recovered("ladder not", "ladder not secured"));
        assert!(!phrase_recovered("wet", "wetfloor"));
        assert!(!phrase_recovered("floor wet", "wet floor"));
    }

    fn corpus() -> Vec<TokenizedReport> {
        ["the ladder was not secured. worker fell.", "oil on the floor. slipped.", "xyzzy qwerty", "ladder again."]
            .iter()
            .enumerate()
            .map(|(i, t)| preprocess(&format!("r{i}"), &[(Field::Description, t)]))
            .collect()
    }

    fn cnn(vocab: &Vocabulary) -> CnnModel<f32> {
        let cfg = CnnConfig { s: 12, dim: 6, n_filters: 4, num_classes: 2, vocab_size: vocab.len(), ..Default::default() };
        CnnModel::new(cfg, &mut crate::rng::seeded(1)).unwrap()
    }

    fn han(vocab: &Vocabulary) -> HanModel<f32> {
        let cfg = HanConfig { dim: 6, word_hidden: 4, sent_hidden: 4, word_att: 3, sent_att: 3, max_words: 6, max_sents: 4, num_classes: 2, vocab_size: vocab.len(), ..Default::default() };
        HanModel::new(cfg, &mut crate::rng::seeded(2)).unwrap()
    }

    #[test]
    fn additivity_and_order_invariance() {
        let c = corpus();
        let vocab = build_vocabulary(&c[..2], 1);
        let (m, h) = (cnn(&vocab), han(&vocab));
        let all: Vec<&TokenizedReport> = c.iter().collect();
        let rev: Vec<&TokenizedReport> = c.iter().rev().collect();
        type Agg<'a> = Box<dyn Fn(&[&TokenizedReport]) -> Aggregate + 'a>;
        let methods: Vec<Agg> = vec![
            Box::new(|r| aggregate_regions(&m, &vocab, r, 3).unwrap()),
            Box::new(|r| aggregate_saliency(&m, &vocab, r, MergeRule::default()).unwrap()),
            Box::new(|r| aggregate_attention(&h, &vocab, r, MergeRule::default()).unwrap()),
        ];
        for agg in &methods {
            let full = agg(&all);
            let mut parts = agg(&all[..2]);
            parts.merge(agg(&all[2..]));
            for (a, b) in full.ranking(usize::MAX).iter().zip(parts.ranking(usize::MAX)) {
                assert_eq!(a.fragment, b.fragment);
                assert!((a.score - b.score).abs() < 1e-12);
                assert_eq!(a.support, b.support);
            }
            assert_eq!(full.ranking(10), agg(&rev).ranking(10));
        }
    }

    #[test]
    fn duplicate_reports_double_scores() {
        let c = corpus();
        let vocab = build_vocabulary(&c, 1);
        let m = cnn(&vocab);
        let one = aggregate_regions(&m, &vocab, &[&c[0]], 3).unwrap();
        let two = aggregate_regions(&m, &vocab, &[&c[0], &c[0]], 3).unwrap();
        for (a, b) in one.ranking(10).iter().zip(two.ranking(10)) {
            assert_eq!(a.fragment, b.fragment);
            assert_eq!(2.0 * a.score, b.score);
            assert_eq!(2 * a.support, b.support);
        }
    }

    #[test]
    fn oov_regions_still_count() {
        let c = corpus();
        let vocab = build_vocabulary(&c[..2], 1);
        let m = cnn(&vocab);
        let agg = aggregate_regions(&m, &vocab, &[&c[2]], 3).unwrap();
        let r = agg.ranking(10);
        assert!(!r.is_empty());
        assert!(r.iter().all(|e| e.fragment.split(' ').all(|t| t == "OOV")), "{r:?}");
    }

    #[test]
    fn attention_totals_match_report_count() {
        let c = corpus();
        let vocab = build_vocabulary(&c, 1);
        let h = han(&vocab);
        let all: Vec<&TokenizedReport> = c.iter().collect();
        let agg = aggregate_attention(&h, &vocab, &all, MergeRule::default()).unwrap();
        assert!((agg.total() - 4.0).abs() < 1e-4, "{}", agg.total());
        let single = preprocess("s", &[(Field::Description, "ladder")]);
        let copies = vec![&single; 5];
        let agg = aggregate_attention(&h, &vocab, &copies, MergeRule::default()).unwrap();
        assert!((agg.score("ladder") - 5.0).abs() < 1e-6);
    }

    #[test]
    fn html_is_deterministic_and_monotone() {
        let c = corpus();
        let vocab = build_vocabulary(&c, 1);
        let e = explain_han(&han(&vocab), &vocab, &c[0]).unwrap();
        assert_eq!(e.tokens.len(), e.token_scores.len());
        let cats = vec!["a".to_string(), "b".to_string()];
        let h1 = render_explanation_html(&e, &cats);
        assert_eq!(h1, render_explanation_html(&e, &cats));
        assert!(h1.starts_with("<!DOCTYPE html>"));
        let op = opacities(&e.token_scores);
        for i in 0..op.len() {
            for j in 0..op.len() {
                if e.token_scores[i] < e.token_scores[j] {
                    assert!(op[i] <= op[j]);
                }
            }
        }
        assert!(opacities(&[0.0, 0.0, 0.0]).iter().all(|o| *o == MIN_OPACITY));
        let e = explain_cnn(&cnn(&vocab), &vocab, &c[1]).unwrap();
        assert_eq!(e.tokens.len(), c[1].num_tokens());
        assert_eq!(explanation_file_name(&e), "r1.cnn.html");
    }

    #[test]
    fn golden_html() {
        let e = ReportExplanation {
            report_id: "g<1>".into(),
            model: "han".into(),
            probabilities: vec![0.25, 0.75],
            tokens: toks("wet floor ."),
            token_scores: vec![0.5, 0.25, 0.0],
            token_sentence: vec![0, 0, 0],
            sentence_scores: Some(vec![1.0]),
        };
        let html = render_explanation_html(&e, &["x".into(), "y".into()]);
        let golden = include_str!("../tests/fixtures/golden_explanation.html");
        assert_eq!(html, golden);
    }
}

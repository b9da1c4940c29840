//! Normalization, tokenization, vocabulary and fixed-shape encoders.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Field, Report};
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "OOV";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedReport {
    pub report_id: String,
    pub sentences: Vec<Vec<String>>,
    /// Source field of each sentence.
    pub sentence_fields: Vec<Field>,
}

impl TokenizedReport {
    pub fn flat_tokens(&self) -> Vec<&str> {
        self.sentences.iter().flatten().map(String::as_str).collect()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_tokens() == 0
    }

    /// Flat index of the first token of each sentence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.sentences
            .iter()
            .map(|s| {
                let o = off;
                off += s.len();
                o
            })
            .collect()
    }

    /// Field of the token at each flat position.
    pub fn token_fields(&self) -> Vec<Field> {
        self.sentences
            .iter()
            .zip(&self.sentence_fields)
            .flat_map(|(s, f)| std::iter::repeat_n(*f, s.len()))
            .collect()
    }
}

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());
static ENTITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"&(amp|lt|gt|quot|apos|nbsp|#39);").unwrap());

fn normalize(text: &str) -> String {
    let decoded = ENTITY.replace_all(text, |c: &regex::Captures<'_>| match &c[1] {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" | "#39" => "'",
        _ => " ",
    });
    let stripped = TAG.replace_all(&decoded, " ");
    stripped
        .chars()
        .filter(char::is_ascii)
        .map(|c| if c.is_ascii_control() { ' ' } else { c.to_ascii_lowercase() })
        .collect()
}

fn is_punct(c: char) -> bool {
    c.is_ascii_graphic() && !c.is_ascii_alphanumeric()
}

fn is_terminal(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?" | ";")
}

/// Splits a whitespace chunk into leading punctuation, core, trailing punctuation.
fn push_chunk(chunk: &str, out: &mut Vec<String>) {
    let lead = chunk.len() - chunk.trim_start_matches(is_punct).len();
    let rest = &chunk[lead..];
    let core = rest.trim_end_matches(is_punct);
    out.extend(chunk[..lead].chars().map(String::from));
    if !core.is_empty() {
        out.push(core.to_string());
    }
    out.extend(rest[core.len()..].chars().map(String::from));
}

/// Tokenizes one text into sentences. Punctuation at word edges becomes its
/// own token; a sentence ends after a run of `.`, `!`, `?` or `;` tokens.
pub fn preprocess_text(text: &str) -> Vec<Vec<String>> {
    let norm = normalize(text);
    let mut tokens = Vec::new();
    for chunk in norm.split_ascii_whitespace() {
        push_chunk(chunk, &mut tokens);
    }
    let mut sentences = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        cur.push(tok.clone());
        let next_terminal = tokens.get(i + 1).is_some_and(|t| is_terminal(t));
        if is_terminal(tok) && !next_terminal {
            sentences.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        sentences.push(cur);
    }
    sentences
}

/// Tokenizes fields in the fixed order title, description, details, root_cause.
pub fn preprocess(report_id: &str, raw_fields: &[(Field, &str)]) -> TokenizedReport {
    let mut fields: Vec<(Field, &str)> = raw_fields.to_vec();
    fields.sort_by_key(|(f, _)| *f);
    let mut out = TokenizedReport {
        report_id: report_id.to_string(),
        ..Default::default()
    };
    for (field, text) in fields {
        for s in preprocess_text(text) {
            out.sentences.push(s);
            out.sentence_fields.push(field);
        }
    }
    out
}

pub fn preprocess_report(report: &Report) -> TokenizedReport {
    let fields: Vec<(Field, &str)> = report.fields.iter().map(|(f, t)| (*f, t.as_str())).collect();
    preprocess(&report.id, &fields)
}

/// Two-way split of an unknown alphabetic token into two lexicon words,
/// maximizing the shorter part (ties: earliest split point).
pub fn segment_repair(token: &str, lexicon: &HashSet<String>) -> Vec<String> {
    if lexicon.contains(token) || !token.bytes().all(|b| b.is_ascii_alphabetic()) {
        return vec![token.to_string()];
    }
    let mut best: Option<(usize, usize)> = None;
    for i in 1..token.len() {
        let (a, b) = token.split_at(i);
        if lexicon.contains(a) && lexicon.contains(b) {
            let m = a.len().min(b.len());
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((i, m));
            }
        }
    }
    match best {
        Some((i, _)) => vec![token[..i].to_string(), token[i..].to_string()],
        None => vec![token.to_string()],
    }
}

/// Applies [`segment_repair`] to every token in place.
pub fn repair_report(report: &mut TokenizedReport, lexicon: &HashSet<String>) {
    for s in &mut report.sentences {
        *s = s.iter().flat_map(|t| segment_repair(t, lexicon)).collect();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    /// Tokens for ids ≥ 2, in id order.
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    pub min_count: u64,
}

impl Vocabulary {
    fn from_ranked(tokens: Vec<String>, counts: Vec<u64>, min_count: u64) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 2))
            .collect();
        Self { tokens, counts, index, min_count }
    }

    /// Total number of ids including the two reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(OOV_ID)
    }

    pub fn decode(&self, id: u32) -> &str {
        match id {
            PAD_ID => PAD_TOKEN,
            OOV_ID => OOV_TOKEN,
            i => self.tokens.get(i as usize - 2).map_or(OOV_TOKEN, String::as_str),
        }
    }

    pub fn count(&self, id: u32) -> u64 {
        if id < 2 {
            0
        } else {
            self.counts.get(id as usize - 2).copied().unwrap_or(0)
        }
    }

    /// Retained tokens in id order (starting at id 2).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lexicon(&self) -> HashSet<String> {
        self.tokens.iter().cloned().collect()
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut s = format!("# min_count={}\n", self.min_count);
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            s.push_str(&format!("{t}\t{c}\n"));
        }
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let bad = |line: usize, reason: &str| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let min_count = lines
            .next()
            .and_then(|h| h.strip_prefix("# min_count="))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(1, "missing `# min_count=` header"))?;
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let (t, c) = line.split_once('\t').ok_or_else(|| bad(i + 2, "expected token<TAB>count"))?;
            tokens.push(t.to_string());
            counts.push(c.trim().parse().map_err(|_| bad(i + 2, "count is not an integer"))?);
        }
        Ok(Self::from_ranked(tokens, counts, min_count))
    }
}

/// Frequency-ranked vocabulary of tokens occurring at least `min_count` times;
/// ties are broken lexicographically.
pub fn build_vocabulary(corpus: &[TokenizedReport], min_count: u64) -> Vocabulary {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for r in corpus {
        for t in r.sentences.iter().flatten() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (tokens, counts) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Vocabulary::from_ranked(tokens, counts, min_count)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCnnInput {
    pub ids: Vec<u32>,
}

/// Row-major `max_sents × max_words` id matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedHanInput {
    pub ids: Vec<u32>,
    pub max_sents: usize,
    pub max_words: usize,
}

impl EncodedHanInput {
    pub fn sentence(&self, i: usize) -> &[u32] {
        &self.ids[i * self.max_words..(i + 1) * self.max_words]
    }
}

pub fn encode_cnn(report: &TokenizedReport, vocab: &Vocabulary, s: usize) -> EncodedCnnInput {
    let mut ids: Vec<u32> = report
        .sentences
        .iter()
        .flatten()
        .take(s)
        .map(|t| vocab.lookup(t))
        .collect();
    ids.resize(s, PAD_ID);
    EncodedCnnInput { ids }
}

pub fn encode_han(
    report: &TokenizedReport,
    vocab: &Vocabulary,
    max_words: usize,
    max_sents: usize,
) -> EncodedHanInput {
    let mut ids = vec![PAD_ID; max_words * max_sents];
    for (i, sent) in report.sentences.iter().take(max_sents).enumerate() {
        for (j, t) in sent.iter().take(max_words).enumerate() {
            ids[i * max_words + j] = vocab.lookup(t);
        }
    }
    EncodedHanInput { ids, max_sents, max_words }
}

/// Length-distribution summary used to pick `s`, `max_words` and `max_sents`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthStats {
    pub reports: usize,
    pub tokens_per_report: Percentiles,
    pub sentences_per_report: Percentiles,
    pub words_per_sentence: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Percentiles {
    pub mean: f64,
    pub p50: usize,
    pub p90: usize,
    pub p95: usize,
    pub p99: usize,
    pub max: usize,
}

impl Percentiles {
    fn of(mut v: Vec<usize>) -> Self {
        if v.is_empty() {
            return Self { mean: 0.0, p50: 0, p90: 0, p95: 0, p99: 0, max: 0 };
        }
        v.sort_unstable();
        let q = |p: f64| v[((v.len() as f64 * p).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            mean: v.iter().sum::<usize>() as f64 / v.len() as f64,
            p50: q(0.5),
            p90: q(0.9),
            p95: q(0.95),
            p99: q(0.99),
            max: *v.last().unwrap(),
        }
    }
}

pub fn length_stats(corpus: &[TokenizedReport]) -> LengthStats {
    LengthStats {
        reports: corpus.len(),
        tokens_per_report: Percentiles::of(corpus.iter().map(TokenizedReport::num_tokens).collect()),
        sentences_per_report: Percentiles::of(corpus.iter().map(|r| r.sentences.len()).collect()),
        words_per_sentence: Percentiles::of(
            corpus.iter().flat_map(|r| r.sentences.iter().map(Vec::len)).collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(sents: &[&[&str]]) -> TokenizedReport {
        TokenizedReport {
            report_id: "r".into(),
            sentences: sents.iter().map(|s| s.iter().map(|t| t.to_string()).collect()).collect(),
            sentence_fields: vec![Field::Description; sents.len()],
        }
    }

    #[test]
    fn lowercase_and_split() {
        assert_eq!(preprocess_text("Worker FELL."), vec![vec!["worker", "fell", "."]]);
    }

    #[test]
    fn html_and_non_ascii() {
        assert_eq!(preprocess_text("<b>slip</b> on déck"), vec![vec!["slip", "on", "dck"]]);
        assert_eq!(preprocess_text("a &amp; b"), vec![vec!["a", "&", "b"]]);
    }

    #[test]
    fn empty_input() {
        assert!(preprocess("x", &[(Field::Title, "")]).is_empty());
        assert!(preprocess_text("  \n ").is_empty());
    }

    #[test]
    fn sentence_and_punctuation_rules() {
        assert_eq!(
            preprocess_text("Slipped (wet floor)!! Then 3.14 m; done"),
            vec![
                vec!["slipped", "(", "wet", "floor", ")", "!", "!"],
                vec!["then", "3.14", "m", ";"],
                vec!["done"],
            ]
        );
    }

    #[test]
    fn field_order_is_fixed() {
        let t = preprocess("r", &[(Field::RootCause, "cause"), (Field::Title, "title")]);
        assert_eq!(t.flat_tokens(), vec!["title", "cause"]);
        assert_eq!(t.sentence_fields, vec![Field::Title, Field::RootCause]);
        assert_eq!(t.token_fields(), vec![Field::Title, Field::RootCause]);
    }

    #[test]
    fn segment_repair_cases() {
        let lex: HashSet<String> = ["fell", "from", "f", "ellfrom", "xq"].iter().map(|s| s.to_string()).collect();
        assert_eq!(segment_repair("fellfrom", &lex), vec!["fell", "from"]);
        assert_eq!(segment_repair("fell", &lex), vec!["fell"]);
        assert_eq!(segment_repair("xqzt", &lex), vec!["xqzt"]);
        let lex: HashSet<String> = ["ab", "cd", "a", "bcd"].iter().map(|s| s.to_string()).collect();
        assert_eq!(segment_repair("abcd", &lex), vec!["ab", "cd"]);
    }

    #[test]
    fn vocabulary_ranking() {
        let mut sent = Vec::new();
        for (t, n) in [("pipe", 9), ("valve", 9), ("weld", 5), ("rare", 4)] {
            sent.extend(std::iter::repeat_n(t, n));
        }
        let corpus = vec![tok(&[&sent])];
        let v = build_vocabulary(&corpus, 5);
        assert_eq!(v.get("pipe"), Some(2));
        assert_eq!(v.get("valve"), Some(3));
        assert_eq!(v.get("weld"), Some(4));
        assert_eq!(v.get("rare"), None);
        assert_eq!(v.lookup("rare"), OOV_ID);
        assert_eq!(v.len(), 5);

        let empty = build_vocabulary(&[], 5);
        assert_eq!(empty.len(), 2);
    }

    #[test]
    fn vocabulary_tsv_roundtrip() {
        let corpus = vec![tok(&[&["a", "b", "a", "c", "c", "c"]])];
        let v = build_vocabulary(&corpus, 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.tsv");
        v.save_tsv(&p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("# min_count=1\nc\t3\n"));
        assert_eq!(Vocabulary::load_tsv(&p).unwrap(), v);
    }

    #[test]
    fn cnn_encoding() {
        let corpus = vec![tok(&[&["a", "b", "c", "a", "b", "c"]])];
        let v = build_vocabulary(&corpus, 1);
        let e = encode_cnn(&tok(&[&["a", "b"], &["c"]]), &v, 5);
        assert_eq!(e.ids, vec![2, 3, 4, 0, 0]);
        let long: Vec<&str> = std::iter::repeat_n("a", 300).collect();
        let e = encode_cnn(&tok(&[&long]), &v, 200);
        assert_eq!(e.ids, vec![2; 200]);
        let e = encode_cnn(&tok(&[&["zzz", "a"]]), &v, 3);
        assert_eq!(e.ids, vec![1, 2, 0]);
    }

    #[test]
    fn han_encoding() {
        let corpus = vec![tok(&[&["a", "b"]])];
        let v = build_vocabulary(&corpus, 1);
        let e = encode_han(&tok(&[&["a", "b"]]), &v, 50, 14);
        assert_eq!(&e.sentence(0)[..3], &[2, 3, 0]);
        assert!(e.ids[50..].iter().all(|i| *i == 0));

        let sents: Vec<Vec<&str>> = (0..20).map(|_| vec!["a"]).collect();
        let refs: Vec<&[&str]> = sents.iter().map(Vec::as_slice).collect();
        let e = encode_han(&tok(&refs), &v, 50, 14);
        assert_eq!(e.ids.len(), 14 * 50);
        assert!((0..14).all(|i| e.sentence(i)[0] == 2));

        let long: Vec<&str> = std::iter::repeat_n("b", 60).collect();
        let e = encode_han(&tok(&[&long]), &v, 50, 14);
        assert!(e.sentence(0).iter().all(|i| *i == 3));
    }

    #[test]
    fn percentiles() {
        let p = Percentiles::of((1..=100).collect());
        assert_eq!((p.p50, p.p90, p.p99, p.max), (50, 90, 99, 100));
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            "[a-zA-Z]{1,8}",
            "[0-9]{1,3}(\\.[0-9]{1,2})?",
            Just(".".to_string()),
            Just("!".to_string()),
            Just(";".to_string()),
            Just("(".to_string()),
            Just(")".to_string()),
            Just("<i>".to_string()),
            Just("é".to_string()),
        ];
        let sep = prop_oneof![Just(" "), Just(""), Just("\n"), Just("  ")];
        prop::collection::vec((piece, sep), 0..40)
            .prop_map(|v| v.into_iter().map(|(p, s)| format!("{p}{s}")).collect())
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(text in text_strategy()) {
            let once = preprocess_text(&text);
            let joined = once.iter().flatten().cloned().collect::<Vec<_>>().join(" ");
            prop_assert_eq!(preprocess_text(&joined), once);
        }

        #[test]
        fn tokens_are_clean(text in "\\PC{0,80}") {
            for t in preprocess_text(&text).iter().flatten() {
                prop_assert!(!t.is_empty());
                prop_assert!(t.bytes().all(|b| b.is_ascii_graphic() && !b.is_ascii_uppercase()));
            }
        }

        #[test]
        fn vocabulary_invariants(words in prop::collection::vec("[a-e]{1,2}", 0..200), min_count in 1u64..4) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let v = build_vocabulary(&[tok(&[&refs])], min_count);
            for (i, t) in v.tokens().iter().enumerate() {
                let id = i as u32 + 2;
                prop_assert_eq!(v.lookup(t), id);
                prop_assert!(v.count(id) >= min_count);
                if i > 0 {
                    prop_assert!(v.count(id - 1) >= v.count(id));
                }
            }
        }

        #[test]
        fn cnn_roundtrip(words in prop::collection::vec("[a-f]{1,2}", 0..40), s in 1usize..30) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let report = tok(&[&refs]);
            let v = build_vocabulary(&[report.clone()], 2);
            let e = encode_cnn(&report, &v, s);
            prop_assert_eq!(e.ids.len(), s);
            let decoded: Vec<&str> = e.ids.iter().filter(|i| **i != PAD_ID).map(|i| v.decode(*i)).collect();
            let want: Vec<&str> = refs
                .iter()
                .take(s)
                .map(|t| if v.get(t).is_some() { *t } else { OOV_TOKEN })
                .collect();
            prop_assert_eq!(decoded, want);
        }
    }
}

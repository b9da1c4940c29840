//! Report records, outcome schemas, leak-free splits and class weights.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// The four narrative fields of a report, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Title,
    Description,
    Details,
    RootCause,
}

impl Field {
    pub const ALL: [Field; 4] = [
        Field::Title,
        Field::Description,
        Field::Details,
        Field::RootCause,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Description => "description",
            Field::Details => "details",
            Field::RootCause => "root_cause",
        }
    }

    pub fn parse(s: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    #[serde(default)]
    pub fields: BTreeMap<Field, String>,
    #[serde(default)]
    pub labels: BTreeMap<String, BTreeSet<String>>,
}

impl Report {
    pub fn has_text(&self) -> bool {
        self.fields.values().any(|t| !t.trim().is_empty())
    }

    pub fn field(&self, f: Field) -> Option<&str> {
        self.fields.get(&f).map(String::as_str)
    }

    pub fn labels_for(&self, outcome: &str) -> Option<&BTreeSet<String>> {
        self.labels.get(outcome).filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSchema {
    pub name: String,
    pub categories: Vec<String>,
}

impl OutcomeSchema {
    pub fn new(name: &str, categories: &[&str]) -> Result<Self> {
        let s = Self {
            name: name.to_string(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "outcome `{}` needs at least 2 categories",
                self.name
            )));
        }
        let distinct: HashSet<&String> = self.categories.iter().collect();
        if distinct.len() != self.categories.len() {
            return Err(Error::InvalidConfig(format!(
                "outcome `{}` has duplicate categories",
                self.name
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.categories.len()
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }
}

pub fn load_schemas(path: &Path) -> Result<Vec<OutcomeSchema>> {
    let schemas: Vec<OutcomeSchema> = serde_json::from_str(&fs::read_to_string(path)?)?;
    let mut seen = HashSet::new();
    for s in &schemas {
        s.validate()?;
        if !seen.insert(s.name.clone()) {
            return Err(Error::InvalidConfig(format!("outcome `{}` defined twice", s.name)));
        }
    }
    Ok(schemas)
}

pub fn find_schema<'a>(schemas: &'a [OutcomeSchema], outcome: &str) -> Result<&'a OutcomeSchema> {
    schemas
        .iter()
        .find(|s| s.name == outcome)
        .ok_or_else(|| Error::UnknownOutcome(outcome.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

fn validate_record(
    report: &Report,
    schemas: &[OutcomeSchema],
    path: &Path,
    line: usize,
    seen: &mut HashSet<String>,
) -> Result<()> {
    let malformed = |reason: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        reason,
    };
    if report.id.is_empty() {
        return Err(malformed("empty id".into()));
    }
    if !report.has_text() {
        return Err(malformed(format!("report `{}` has no usable text field", report.id)));
    }
    for (outcome, cats) in &report.labels {
        let schema = find_schema(schemas, outcome)?;
        if cats.is_empty() {
            return Err(malformed(format!("empty label set for outcome `{outcome}`")));
        }
        for c in cats {
            if schema.index_of(c).is_none() {
                return Err(Error::UnknownCategory {
                    outcome: outcome.clone(),
                    category: c.clone(),
                });
            }
        }
    }
    if !seen.insert(report.id.clone()) {
        return Err(Error::DuplicateId(report.id.clone()));
    }
    Ok(())
}

/// Loads and validates a corpus. Blank JSONL lines are skipped.
pub fn load_corpus(path: &Path, format: CorpusFormat, schemas: &[OutcomeSchema]) -> Result<Vec<Report>> {
    let text = fs::read_to_string(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let report: Report = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                validate_record(&report, schemas, path, i + 1, &mut seen)?;
                out.push(report);
            }
        }
        CorpusFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
            let headers = rdr.headers()?.clone();
            if headers.get(0) != Some("id") {
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: "first column must be `id`".into(),
                });
            }
            enum Col {
                Field(Field),
                Outcome(String),
            }
            let mut cols = Vec::new();
            for h in headers.iter().skip(1) {
                match Field::parse(h) {
                    Some(f) => cols.push(Col::Field(f)),
                    None => {
                        find_schema(schemas, h)?;
                        cols.push(Col::Outcome(h.to_string()));
                    }
                }
            }
            for rec in rdr.records() {
                let rec = rec?;
                let line = rec.position().map_or(0, |p| p.line() as usize);
                let mut report = Report {
                    id: rec.get(0).unwrap_or_default().to_string(),
                    fields: BTreeMap::new(),
                    labels: BTreeMap::new(),
                };
                for (col, value) in cols.iter().zip(rec.iter().skip(1)) {
                    match col {
                        Col::Field(f) if !value.is_empty() => {
                            report.fields.insert(*f, value.to_string());
                        }
                        Col::Outcome(o) => {
                            let cats: BTreeSet<String> = value
                                .split(';')
                                .map(str::trim)
                                .filter(|c| !c.is_empty())
                                .map(str::to_string)
                                .collect();
                            if !cats.is_empty() {
                                report.labels.insert(o.clone(), cats);
                            }
                        }
                        _ => {}
                    }
                }
                validate_record(&report, schemas, path, line, &mut seen)?;
                out.push(report);
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, reports: &[Report]) -> Result<()> {
    let mut s = String::new();
    for r in reports {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub val_frac_of_train: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.10,
            val_frac_of_train: 0.111,
        }
    }
}

/// A labeled (report, category index) training or evaluation example.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub outcome: String,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub expanded_train: Vec<Example>,
    pub expanded_val: Vec<Example>,
    pub expanded_test: Vec<Example>,
}

fn frac_count(n: usize, frac: f64) -> usize {
    (n as f64 * frac + 1e-9).floor() as usize
}

fn expand(ids: &[String], by_id: &BTreeMap<&str, &Report>, schema: &OutcomeSchema) -> Vec<Example> {
    let mut out = Vec::new();
    for id in ids {
        let labels = by_id[id.as_str()]
            .labels_for(&schema.name)
            .expect("split members are labeled");
        let mut cats: Vec<usize> = labels.iter().filter_map(|c| schema.index_of(c)).collect();
        cats.sort_unstable();
        out.extend(cats.into_iter().map(|category| Example {
            id: id.clone(),
            category,
        }));
    }
    out
}

/// Uniform (unstratified) train/validation/test split on report ids, followed
/// by multi-label expansion inside each split.
///
/// Sizes: `test = ⌊n·test_frac⌋`, `val = ⌊(n − test)·val_frac_of_train⌋`,
/// each at least one.
pub fn make_splits(
    reports: &[Report],
    schema: &OutcomeSchema,
    cfg: &SplitConfig,
    seed: u64,
) -> Result<DatasetSplit> {
    for (name, f) in [("test_frac", cfg.test_frac), ("val_frac_of_train", cfg.val_frac_of_train)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!("{name} = {f} is outside (0, 1)")));
        }
    }
    let mut by_id: BTreeMap<&str, &Report> = BTreeMap::new();
    for r in reports {
        if r.labels_for(&schema.name).is_none() {
            continue;
        }
        if !r.has_text() {
            log::warn!("report `{}` has no text left; excluded from `{}`", r.id, schema.name);
            continue;
        }
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    let n = by_id.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "{n} reports labeled for `{}`, need at least 10",
            schema.name
        )));
    }
    let mut ids: Vec<String> = by_id.keys().map(|s| s.to_string()).collect();
    let mut rng = rng::seeded(seed);
    ids.shuffle(&mut rng);

    let n_test = frac_count(n, cfg.test_frac).max(1);
    let n_val = frac_count(n - n_test, cfg.val_frac_of_train).max(1);
    let mut test_ids = ids[..n_test].to_vec();
    let mut val_ids = ids[n_test..n_test + n_val].to_vec();
    let mut train_ids = ids[n_test + n_val..].to_vec();
    test_ids.sort();
    val_ids.sort();
    train_ids.sort();

    Ok(DatasetSplit {
        outcome: schema.name.clone(),
        expanded_train: expand(&train_ids, &by_id, schema),
        expanded_val: expand(&val_ids, &by_id, schema),
        expanded_test: expand(&test_ids, &by_id, schema),
        train_ids,
        val_ids,
        test_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub outcome: String,
    /// One weight per category, in schema order.
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(schema: &OutcomeSchema) -> Self {
        Self {
            outcome: schema.name.clone(),
            weights: vec![1.0; schema.k()],
        }
    }
}

/// `weight_c = count_max / count_c` over the expanded training pairs.
pub fn class_weights(expanded_train: &[Example], schema: &OutcomeSchema) -> Result<ClassWeights> {
    let mut counts = vec![0usize; schema.k()];
    for e in expanded_train {
        counts[e.category] += 1;
    }
    class_weights_from_counts(&counts, schema)
}

pub fn class_weights_from_counts(counts: &[usize], schema: &OutcomeSchema) -> Result<ClassWeights> {
    if counts.len() != schema.k() {
        return Err(Error::Shape(format!("{} counts for K={}", counts.len(), schema.k())));
    }
    if let Some(c) = counts.iter().position(|c| *c == 0) {
        return Err(Error::InsufficientData(format!(
            "category `{}` has no training examples",
            schema.categories[c]
        )));
    }
    let max = *counts.iter().max().expect("K >= 2") as f64;
    Ok(ClassWeights {
        outcome: schema.name.clone(),
        weights: counts.iter().map(|c| max / *c as f64).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    #[default]
    DropSentence,
    TruncateAfter,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageFilterConfig {
    pub excluded_fields: BTreeSet<Field>,
    pub stop_keywords: Vec<String>,
    pub mode: FilterMode,
}

impl LeakageFilterConfig {
    pub fn is_noop(&self) -> bool {
        self.excluded_fields.is_empty() && self.stop_keywords.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredReport {
    pub report: Report,
    /// True when no text survived filtering.
    pub emptied: bool,
}

/// Splits raw text after `.`, `!`, `?` or `;` when followed by whitespace.
/// Pieces keep their terminator and are trimmed; empty pieces are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?' | b';')
            && bytes.get(i + 1).is_some_and(|b| b.is_ascii_whitespace())
        {
            out.push(&text[start..=i]);
            start = i + 1;
        }
    }
    out.push(&text[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Byte offset of the first word-bounded occurrence of `keyword`, matching
/// ASCII case-insensitively.
pub fn find_keyword(text: &str, keyword: &str) -> Option<usize> {
    if keyword.is_empty() {
        return None;
    }
    let hay = text.to_ascii_lowercase();
    let hb = hay.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(keyword) {
        let at = from + pos;
        let end = at + keyword.len();
        let left_ok = at == 0 || !is_word(hb[at - 1]) || !is_word(keyword.as_bytes()[0]);
        let right_ok = end == hb.len() || !is_word(hb[end]) || !is_word(*keyword.as_bytes().last().unwrap());
        if left_ok && right_ok {
            return Some(at);
        }
        from = at + hay[at..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

fn filter_text(text: &str, cfg: &LeakageFilterConfig) -> String {
    match cfg.mode {
        FilterMode::DropSentence => split_sentences(text)
            .into_iter()
            .filter(|s| cfg.stop_keywords.iter().all(|k| find_keyword(s, k).is_none()))
            .collect::<Vec<_>>()
            .join(" "),
        FilterMode::TruncateAfter => {
            let cut = cfg
                .stop_keywords
                .iter()
                .filter_map(|k| find_keyword(text, k))
                .min()
                .unwrap_or(text.len());
            text[..cut].trim_end().to_string()
        }
    }
}

/// Returns a filtered copy: excluded fields are emptied and keyword-bearing
/// text is removed according to `cfg.mode`.
pub fn apply_leakage_filters(report: &Report, cfg: &LeakageFilterConfig) -> FilteredReport {
    let mut out = report.clone();
    for f in &cfg.excluded_fields {
        if let Some(t) = out.fields.get_mut(f) {
            t.clear();
        }
    }
    if !cfg.stop_keywords.is_empty() {
        for text in out.fields.values_mut() {
            *text = filter_text(text, cfg);
        }
    }
    let emptied = !out.has_text();
    FilteredReport { report: out, emptied }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> Vec<OutcomeSchema> {
        vec![
            OutcomeSchema::new("severity", &["1st aid", "med./restr."]).unwrap(),
            OutcomeSchema::new("bodypart", &["hand", "finger", "head"]).unwrap(),
        ]
    }

    fn report(id: &str, text: &str, outcome: &str, cats: &[&str]) -> Report {
        Report {
            id: id.into(),
            fields: BTreeMap::from([(Field::Description, text.into())]),
            labels: BTreeMap::from([(outcome.into(), cats.iter().map(|c| c.to_string()).collect())]),
        }
    }

    fn write_tmp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let f = write_tmp("", ".jsonl");
        assert!(load_corpus(f.path(), CorpusFormat::Jsonl, &schema()).unwrap().is_empty());
    }

    #[test]
    fn minimal_record() {
        let f = write_tmp(
            r#"{"id":"r1","fields":{"title":"fell off ladder"},"labels":{"severity":["1st aid"]}}"#,
            ".jsonl",
        );
        let c = load_corpus(f.path(), CorpusFormat::Jsonl, &schema()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].fields.len(), 1);
        assert_eq!(c[0].field(Field::Title), Some("fell off ladder"));
    }

    #[test]
    fn unknown_category_is_named() {
        let f = write_tmp(
            r#"{"id":"r1","fields":{"title":"x"},"labels":{"severity":["fatal"]}}"#,
            ".jsonl",
        );
        let err = load_corpus(f.path(), CorpusFormat::Jsonl, &schema()).unwrap_err();
        assert!(err.to_string().contains("fatal"), "{err}");
    }

    #[test]
    fn rejects_bad_records_with_line_numbers() {
        let f = write_tmp(
            "{\"id\":\"a\",\"fields\":{\"title\":\"x\"}}\n\n{\"id\":\"b\",\"fields\":{\"title\":\"  \"}}\n",
            ".jsonl",
        );
        match load_corpus(f.path(), CorpusFormat::Jsonl, &schema()).unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let f = write_tmp("{\"id\":\"a\",\"fields\":{\"title\":\"x\"}}\n{not json\n", ".jsonl");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl, &schema()),
            Err(Error::MalformedRecord { line: 2, .. })
        ));
        let f = write_tmp(
            "{\"id\":\"a\",\"fields\":{\"title\":\"x\"}}\n{\"id\":\"a\",\"fields\":{\"title\":\"y\"}}\n",
            ".jsonl",
        );
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl, &schema()),
            Err(Error::DuplicateId(_))
        ));
        let f = write_tmp(
            r#"{"id":"a","fields":{"title":"x"},"labels":{"weather":["rain"]}}"#,
            ".jsonl",
        );
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl, &schema()),
            Err(Error::UnknownOutcome(_))
        ));
    }

    #[test]
    fn csv_with_multilabels() {
        let f = write_tmp(
            "id,title,description,details,root_cause,bodypart,severity\n\
             r1,cut,,,,hand;finger,1st aid\n\
             r2,,bumped head,,,head,\n",
            ".csv",
        );
        let c = load_corpus(f.path(), CorpusFormat::from_path(f.path()), &schema()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].labels["bodypart"].len(), 2);
        assert!(c[1].labels.get("severity").is_none());
        assert_eq!(c[1].field(Field::Description), Some("bumped head"));
    }

    #[test]
    fn split_counts_for_100_reports() {
        let s = &schema()[0];
        let reports: Vec<Report> = (0..100)
            .map(|i| report(&format!("r{i:03}"), "text", "severity", &["1st aid"]))
            .collect();
        let split = make_splits(&reports, s, &SplitConfig::default(), 7).unwrap();
        assert_eq!(
            (split.train_ids.len(), split.val_ids.len(), split.test_ids.len()),
            (81, 9, 10)
        );
        let again = make_splits(&reports, s, &SplitConfig::default(), 7).unwrap();
        assert_eq!(split, again);
        let other = make_splits(&reports, s, &SplitConfig::default(), 8).unwrap();
        assert_ne!(split.test_ids, other.test_ids);
    }

    #[test]
    fn multilabel_expands_within_split() {
        let s = &schema()[1];
        let mut reports: Vec<Report> = (0..30)
            .map(|i| report(&format!("r{i:02}"), "text", "bodypart", &["head"]))
            .collect();
        reports.push(report("multi", "text", "bodypart", &["finger", "hand"]));
        for seed in 0..20 {
            let split = make_splits(&reports, s, &SplitConfig::default(), seed).unwrap();
            let in_train = split.train_ids.iter().any(|i| i == "multi");
            let n_train = split.expanded_train.iter().filter(|e| e.id == "multi").count();
            let n_other = split
                .expanded_val
                .iter()
                .chain(&split.expanded_test)
                .filter(|e| e.id == "multi")
                .count();
            if in_train {
                assert_eq!((n_train, n_other), (2, 0));
            } else {
                assert_eq!((n_train, n_other), (0, 2));
            }
        }
    }

    #[test]
    fn split_errors() {
        let s = &schema()[0];
        let few: Vec<Report> = (0..9).map(|i| report(&format!("{i}"), "t", "severity", &["1st aid"])).collect();
        assert!(matches!(
            make_splits(&few, s, &SplitConfig::default(), 0),
            Err(Error::InsufficientData(_))
        ));
        let bad = SplitConfig { test_frac: 1.5, ..Default::default() };
        assert!(make_splits(&few, s, &bad, 0).is_err());
    }

    #[test]
    fn published_class_weights() {
        let it = OutcomeSchema::new(
            "incident_type",
            &["eq./tools", "access", "dropped", "PPE", "slips", "rules"],
        )
        .unwrap();
        let w = class_weights_from_counts(&[26167, 9300, 7619, 8078, 18432, 12878], &it).unwrap();
        let rounded: Vec<f64> = w.weights.iter().map(|v| (v * 10.0).round() / 10.0).collect();
        assert_eq!(rounded, vec![1.0, 2.8, 3.4, 3.2, 1.4, 2.0]);

        let sev = &schema()[0];
        let w = class_weights_from_counts(&[14860, 2587], sev).unwrap();
        let rounded: Vec<f64> = w.weights.iter().map(|v| (v * 10.0).round() / 10.0).collect();
        assert_eq!(rounded, vec![1.0, 5.7]);

        let w = class_weights_from_counts(&[5, 5], sev).unwrap();
        assert_eq!(w.weights, vec![1.0, 1.0]);
        assert!(class_weights_from_counts(&[5, 0], sev).is_err());
    }

    #[test]
    fn drop_sentence_filter() {
        let r = report("a", "worker slipped on oil. he was taken to hospital.", "severity", &["1st aid"]);
        let cfg = LeakageFilterConfig {
            stop_keywords: vec!["taken to".into()],
            ..Default::default()
        };
        let out = apply_leakage_filters(&r, &cfg);
        assert_eq!(out.report.field(Field::Description), Some("worker slipped on oil."));
        assert!(!out.emptied);
        assert_eq!(r.field(Field::Description), Some("worker slipped on oil. he was taken to hospital."));
    }

    #[test]
    fn truncate_and_exclusion() {
        let mut r = report("a", "slipped on oil and was Taken to hospital", "severity", &["1st aid"]);
        r.fields.insert(Field::Title, "slip".into());
        let cfg = LeakageFilterConfig {
            excluded_fields: BTreeSet::from([Field::Title]),
            stop_keywords: vec!["taken to".into()],
            mode: FilterMode::TruncateAfter,
        };
        let out = apply_leakage_filters(&r, &cfg);
        assert_eq!(out.report.field(Field::Title), Some(""));
        assert_eq!(out.report.field(Field::Description), Some("slipped on oil and was"));

        let noop = apply_leakage_filters(&r, &LeakageFilterConfig::default());
        assert_eq!(noop.report, r);
    }

    #[test]
    fn keywords_respect_word_boundaries() {
        assert_eq!(find_keyword("mistaken to", "taken to"), None);
        assert_eq!(find_keyword("was taken to", "taken to"), Some(4));
        let r = report("a", "he was taken to hospital.", "severity", &["1st aid"]);
        let cfg = LeakageFilterConfig {
            stop_keywords: vec!["hospital".into()],
            ..Default::default()
        };
        assert!(apply_leakage_filters(&r, &cfg).emptied);
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(split_sentences("a b. c d! e? f; g"), vec!["a b.", "c d!", "e?", "f;", "g"]);
        assert_eq!(split_sentences("pi is 3.14 ok."), vec!["pi is 3.14 ok."]);
        assert!(split_sentences("   ").is_empty());
    }
}

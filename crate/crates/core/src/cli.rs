//! Pipeline commands behind the `precursors` binary. Each command reads one
//! JSON run config, rebuilds the prepared data deterministically from it and
//! writes its outputs (plus the effective config) into `paths.output_dir`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::cnn::{CnnConfig, CnnModel};
use crate::corpus::{
    self, ClassWeights, CorpusFormat, DatasetSplit, Example, LeakageFilterConfig, OutcomeSchema, SplitConfig,
};
use crate::embeddings::{self, EmbeddingMatrix, SkipGramConfig};
use crate::error::{Error, Result};
use crate::evaluation::{self, ConfusionMatrix, Metrics};
use crate::extraction::{self, MergeRule, Method, PrecursorRanking};
use crate::han::{HanConfig, HanModel};
use crate::model::Classifier;
use crate::rng::{component_rng, derive_seed};
use crate::synthcorpus::{self, SynthConfig};
use crate::textprep::{self, TokenizedReport, Vocabulary};
use crate::tfidf_svm::{LinearSvmOvR, SparseVec, SvmConfig, TfidfConfig, TfidfVectorizer, fit_with_selection};
use crate::trainer::{self, Labeled, RangeTestConfig, StopOn, TrainConfig, TrainHistory};

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    Han,
    Svm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Han => "han",
            ModelKind::Svm => "svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub schema: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub min_count: u64,
    /// Split run-together tokens against the vocabulary, then rebuild it.
    pub repair_tokens: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self { min_count: 5, repair_tokens: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub pretrain: bool,
    pub skipgram: SkipGramConfig,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { pretrain: true, skipgram: SkipGramConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Truth,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub top_k: usize,
    pub regions_per_report: usize,
    pub merge: MergeRule,
    pub group_by: GroupBy,
    pub reports: SplitPart,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self { top_k: 20, regions_per_report: 3, merge: MergeRule::default(), group_by: GroupBy::Truth, reports: SplitPart::Train }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub baseline_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { baseline_trials: 1000 }
    }
}

/// Everything a run needs. Optional sections are resolved against the
/// outcome, model and corpus before use; the resolved form is what gets
/// written as the effective config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub outcome: String,
    pub model: ModelKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub filters: LeakageFilterConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub text: TextConfig,
    #[serde(default)]
    pub embeddings: EmbeddingConfig,
    #[serde(default)]
    pub cnn: Option<CnnConfig>,
    #[serde(default)]
    pub han: Option<HanConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub range_test: RangeTestConfig,
    #[serde(default)]
    pub tfidf: Option<TfidfConfig>,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_seed() -> u64 {
    42
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn check_paths(&self) -> Result<()> {
        for (name, p) in [("corpus", &self.paths.corpus), ("schema", &self.paths.schema)] {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("paths.{name} `{}` does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Fills every optional section. Idempotent.
    pub fn resolve(&mut self, vocab_size: usize, k: usize) {
        let mut cnn = self.cnn.clone().unwrap_or_else(|| CnnConfig {
            n_filters: CnnConfig::filters_for_outcome(&self.outcome),
            ..CnnConfig::default()
        });
        cnn.vocab_size = vocab_size;
        cnn.num_classes = k;
        self.cnn = Some(cnn);
        let mut han = self.han.clone().unwrap_or_default();
        han.vocab_size = vocab_size;
        han.num_classes = k;
        self.han = Some(han);
        if self.train.is_none() {
            self.train = Some(TrainConfig::for_model(self.model.as_str()));
        }
        if self.tfidf.is_none() {
            self.tfidf = Some(TfidfConfig::with_vocab_budget(vocab_size));
        }
    }

    fn cnn_config(&self) -> CnnConfig {
        self.cnn.clone().expect("resolved")
    }

    fn han_config(&self) -> HanConfig {
        self.han.clone().expect("resolved")
    }

    fn train_config(&self) -> TrainConfig {
        self.train.clone().expect("resolved")
    }

    pub fn write_effective(&self) -> Result<()> {
        fs::create_dir_all(&self.paths.output_dir)?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(self.paths.output_dir.join(EFFECTIVE_CONFIG), s)?;
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out(&format!("{}.ckpt", self.model.as_str()))
    }
}

/// Tokenized, filtered corpus with its split, vocabulary and optional
/// pre-trained embeddings.
pub struct Prepared {
    pub schema: OutcomeSchema,
    pub categories: Vec<String>,
    pub reports: Vec<TokenizedReport>,
    index: BTreeMap<String, usize>,
    pub split: DatasetSplit,
    pub vocab: Vocabulary,
    pub embeddings: Option<EmbeddingMatrix>,
    pub class_weights: ClassWeights,
}

impl Prepared {
    pub fn report(&self, id: &str) -> Option<&TokenizedReport> {
        self.index.get(id).map(|i| &self.reports[*i])
    }

    fn reports_of(&self, ids: &[String]) -> Vec<&TokenizedReport> {
        ids.iter().filter_map(|id| self.report(id)).collect()
    }

    /// Expanded (report, category) pairs of one split part.
    pub fn examples(&self, part: &[Example]) -> (Vec<&TokenizedReport>, Vec<usize>) {
        part.iter().map(|e| (self.report(&e.id).expect("split ids are indexed"), e.category)).unzip()
    }

    pub fn k(&self) -> usize {
        self.categories.len()
    }
}

pub fn prepare_data(cfg: &mut RunConfig) -> Result<Prepared> {
    cfg.check_paths()?;
    let schemas = corpus::load_schemas(&cfg.paths.schema)?;
    let schema = corpus::find_schema(&schemas, &cfg.outcome)?.clone();
    let raw = corpus::load_corpus(&cfg.paths.corpus, CorpusFormat::from_path(&cfg.paths.corpus), &schemas)?;
    let filtered: Vec<corpus::Report> = raw
        .iter()
        .map(|r| corpus::apply_leakage_filters(r, &cfg.filters))
        .filter(|f| !f.emptied)
        .map(|f| f.report)
        .collect();
    let split = corpus::make_splits(&filtered, &schema, &cfg.split, derive_seed(cfg.seed, "split"))?;
    let mut reports: Vec<TokenizedReport> = filtered
        .iter()
        .filter(|r| r.labels_for(&schema.name).is_some())
        .map(textprep::preprocess_report)
        .collect();
    let index: BTreeMap<String, usize> = reports.iter().enumerate().map(|(i, r)| (r.report_id.clone(), i)).collect();

    let non_test = |reports: &[TokenizedReport]| -> Vec<TokenizedReport> {
        split.train_ids.iter().chain(&split.val_ids).map(|id| reports[index[id]].clone()).collect()
    };
    let mut vocab = textprep::build_vocabulary(&non_test(&reports), cfg.text.min_count);
    if cfg.text.repair_tokens {
        let lexicon = vocab.lexicon();
        for r in &mut reports {
            textprep::repair_report(r, &lexicon);
        }
        vocab = textprep::build_vocabulary(&non_test(&reports), cfg.text.min_count);
    }
    cfg.resolve(vocab.len(), schema.k());

    let embeddings = if cfg.embeddings.pretrain && cfg.model != ModelKind::Svm {
        let dim = if cfg.model == ModelKind::Cnn { cfg.cnn_config().dim } else { cfg.han_config().dim };
        let sg = SkipGramConfig { dim, ..cfg.embeddings.skipgram.clone() };
        Some(embeddings::train_skipgram(&non_test(&reports), &vocab, &sg, derive_seed(cfg.seed, "skipgram"))?)
    } else {
        None
    };
    let class_weights = corpus::class_weights(&split.expanded_train, &schema)?;
    Ok(Prepared {
        categories: schema.categories.clone(),
        schema,
        reports,
        index,
        split,
        vocab,
        embeddings,
        class_weights,
    })
}

// ---- stats / prepare -------------------------------------------------------

pub fn cmd_stats(corpus_path: &Path, schema_path: &Path) -> Result<textprep::LengthStats> {
    let schemas = corpus::load_schemas(schema_path)?;
    let raw = corpus::load_corpus(corpus_path, CorpusFormat::from_path(corpus_path), &schemas)?;
    let tokenized: Vec<TokenizedReport> = raw.iter().map(textprep::preprocess_report).collect();
    Ok(textprep::length_stats(&tokenized))
}

pub fn cmd_prepare(cfg: &mut RunConfig) -> Result<Prepared> {
    let p = prepare_data(cfg)?;
    cfg.write_effective()?;
    p.vocab.save_tsv(&cfg.out("vocab.tsv"))?;
    fs::write(cfg.out("splits.json"), serde_json::to_string_pretty(&p.split)? + "\n")?;
    fs::write(cfg.out("class_weights.json"), serde_json::to_string_pretty(&p.class_weights)? + "\n")?;
    if let Some(e) = &p.embeddings {
        e.save_text(&cfg.out("embeddings.txt"))?;
    }
    log::info!(
        "{} reports, split {}/{}/{}, vocabulary {}",
        p.reports.len(),
        p.split.train_ids.len(),
        p.split.val_ids.len(),
        p.split.test_ids.len(),
        p.vocab.len()
    );
    Ok(p)
}

// ---- models ----------------------------------------------------------------

fn new_cnn(cfg: &RunConfig, p: &Prepared) -> Result<CnnModel<f32>> {
    let mut m = CnnModel::new(cfg.cnn_config(), &mut component_rng(cfg.seed, "cnn.init"))?;
    if let Some(e) = &p.embeddings {
        m.set_embeddings(e)?;
    }
    Ok(m)
}

fn new_han(cfg: &RunConfig, p: &Prepared) -> Result<HanModel<f32>> {
    let mut m = HanModel::new(cfg.han_config(), &mut component_rng(cfg.seed, "han.init"))?;
    if let Some(e) = &p.embeddings {
        m.set_embeddings(e)?;
    }
    Ok(m)
}

fn held_out<'a>(cfg: &RunConfig, p: &'a Prepared) -> &'a [Example] {
    match cfg.train_config().stop_on {
        StopOn::Validation => &p.split.expanded_val,
        StopOn::Test => &p.split.expanded_test,
    }
}

fn encode_all<I>(reports: &[&TokenizedReport], f: impl Fn(&TokenizedReport) -> I) -> Vec<I> {
    reports.iter().map(|r| f(r)).collect()
}

fn cnn_inputs(m: &CnnModel<f32>, p: &Prepared, part: &[Example]) -> (Vec<textprep::EncodedCnnInput>, Vec<usize>) {
    let (r, y) = p.examples(part);
    (encode_all(&r, |r| textprep::encode_cnn(r, &p.vocab, m.config.s)), y)
}

fn han_inputs(m: &HanModel<f32>, p: &Prepared, part: &[Example]) -> (Vec<textprep::EncodedHanInput>, Vec<usize>) {
    let (r, y) = p.examples(part);
    (encode_all(&r, |r| textprep::encode_han(r, &p.vocab, m.config.max_words, m.config.max_sents)), y)
}

fn svm_docs(v: &TfidfVectorizer, p: &Prepared, part: &[Example]) -> (Vec<SparseVec>, Vec<usize>) {
    let (r, y) = p.examples(part);
    (r.iter().map(|r| v.transform(&r.flat_tokens())).collect(), y)
}

fn fit_vectorizer(cfg: &RunConfig, p: &Prepared) -> Result<TfidfVectorizer> {
    let docs: Vec<Vec<&str>> = p.reports_of(&p.split.train_ids).iter().map(|r| r.flat_tokens()).collect();
    TfidfVectorizer::fit(&docs, cfg.tfidf.clone().expect("resolved"))
}

pub fn tfidf_path_for(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("tfidf.tsv")
}

// ---- lr-range --------------------------------------------------------------

pub fn cmd_lr_range(cfg: &mut RunConfig) -> Result<trainer::RangeTestResult> {
    let p = prepare_data(cfg)?;
    cfg.write_effective()?;
    let seed = derive_seed(cfg.seed, "range");
    let w = &p.class_weights.weights;
    let result = match cfg.model {
        ModelKind::Cnn => {
            let mut m = new_cnn(cfg, &p)?;
            let (xt, yt) = cnn_inputs(&m, &p, &p.split.expanded_train);
            let (xv, yv) = cnn_inputs(&m, &p, &p.split.expanded_val);
            trainer::lr_range_test(&mut m, Labeled { inputs: &xt, labels: &yt }, Labeled { inputs: &xv, labels: &yv }, w, &cfg.range_test, seed)?
        }
        ModelKind::Han => {
            let mut m = new_han(cfg, &p)?;
            let (xt, yt) = han_inputs(&m, &p, &p.split.expanded_train);
            let (xv, yv) = han_inputs(&m, &p, &p.split.expanded_val);
            trainer::lr_range_test(&mut m, Labeled { inputs: &xt, labels: &yt }, Labeled { inputs: &xv, labels: &yv }, w, &cfg.range_test, seed)?
        }
        ModelKind::Svm => return Err(Error::InvalidConfig("the range test applies to cnn and han only".into())),
    };
    let name = cfg.model.as_str();
    fs::write(cfg.out(&format!("lr_range_{name}.csv")), result.to_csv())?;
    fs::write(cfg.out(&format!("lr_range_{name}.json")), serde_json::to_string_pretty(&result.suggestion)? + "\n")?;
    Ok(result)
}

// ---- train -----------------------------------------------------------------

pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub history: Option<TrainHistory>,
}

pub fn cmd_train(cfg: &mut RunConfig) -> Result<TrainReport> {
    let p = prepare_data(cfg)?;
    cfg.write_effective()?;
    let seed = derive_seed(cfg.seed, "train");
    let tcfg = cfg.train_config();
    let w = &p.class_weights.weights;
    let ck_path = cfg.checkpoint_path();
    let name = cfg.model.as_str();
    let history = match cfg.model {
        ModelKind::Cnn => {
            let mut m = new_cnn(cfg, &p)?;
            let (xt, yt) = cnn_inputs(&m, &p, &p.split.expanded_train);
            let (xv, yv) = cnn_inputs(&m, &p, held_out(cfg, &p));
            let out = trainer::train(&mut m, Labeled { inputs: &xt, labels: &yt }, Labeled { inputs: &xv, labels: &yv }, w, &tcfg, seed)?;
            Checkpoint::from_cnn(&m, &cfg.outcome, &p.categories).save(&ck_path)?;
            Some(out.history)
        }
        ModelKind::Han => {
            let mut m = new_han(cfg, &p)?;
            let (xt, yt) = han_inputs(&m, &p, &p.split.expanded_train);
            let (xv, yv) = han_inputs(&m, &p, held_out(cfg, &p));
            let out = trainer::train(&mut m, Labeled { inputs: &xt, labels: &yt }, Labeled { inputs: &xv, labels: &yv }, w, &tcfg, seed)?;
            Checkpoint::from_han(&m, &cfg.outcome, &p.categories).save(&ck_path)?;
            Some(out.history)
        }
        ModelKind::Svm => {
            let v = fit_vectorizer(cfg, &p)?;
            let (xt, yt) = svm_docs(&v, &p, &p.split.expanded_train);
            let (xv, yv) = svm_docs(&v, &p, &p.split.expanded_val);
            let (m, grid) = fit_with_selection((&xt, &yt), (&xv, &yv), v.len(), p.k(), &cfg.svm)?;
            if let Some(g) = grid {
                let mut s = String::from("C,val_macro_F1\n");
                for (c, f) in &g.scores {
                    s.push_str(&format!("{c:e},{f}\n"));
                }
                fs::write(cfg.out("svm_grid.csv"), s)?;
            }
            v.save_tsv(&tfidf_path_for(&ck_path))?;
            Checkpoint::from_svm(&m, &cfg.outcome, &p.categories).save(&ck_path)?;
            None
        }
    };
    if let Some(h) = &history {
        h.write_csv(&cfg.out(&format!("history_{name}.csv")))?;
    }
    Ok(TrainReport { checkpoint: ck_path, history })
}

// ---- loading trained models -------------------------------------------------

pub enum Trained {
    Cnn(CnnModel<f32>),
    Han(HanModel<f32>),
    Svm(LinearSvmOvR, TfidfVectorizer),
}

pub fn load_trained(path: &Path, p: &Prepared, outcome: &str) -> Result<Trained> {
    let ck = Checkpoint::load(path)?;
    if ck.outcome != outcome || ck.categories != p.categories {
        return Err(Error::Checkpoint(format!("checkpoint is for `{}` with different categories", ck.outcome)));
    }
    Ok(match ck.architecture.kind() {
        "cnn" => Trained::Cnn(ck.to_cnn()?),
        "han" => Trained::Han(ck.to_han()?),
        _ => Trained::Svm(ck.to_svm()?, TfidfVectorizer::load_tsv(&tfidf_path_for(path))?),
    })
}

impl Trained {
    pub fn kind(&self) -> ModelKind {
        match self {
            Trained::Cnn(_) => ModelKind::Cnn,
            Trained::Han(_) => ModelKind::Han,
            Trained::Svm(..) => ModelKind::Svm,
        }
    }

    pub fn predict(&self, p: &Prepared, reports: &[&TokenizedReport]) -> Result<Vec<usize>> {
        let out: Vec<Result<usize>> = match self {
            Trained::Cnn(m) => crate::parallel::par_map(reports, |r| {
                m.predict_proba(&textprep::encode_cnn(r, &p.vocab, m.config.s)).map(|pr| crate::cnn::argmax(&pr))
            }),
            Trained::Han(m) => crate::parallel::par_map(reports, |r| {
                let x = textprep::encode_han(r, &p.vocab, m.config.max_words, m.config.max_sents);
                m.predict_proba(&x).map(|pr| crate::cnn::argmax(&pr))
            }),
            Trained::Svm(m, v) => reports.iter().map(|r| Ok(m.predict(&v.transform(&r.flat_tokens())))).collect(),
        };
        out.into_iter().collect()
    }
}

// ---- eval ------------------------------------------------------------------

pub struct EvalReport {
    pub metrics: Metrics,
    pub baseline: evaluation::BaselineMetrics,
    pub confusion: ConfusionMatrix,
}

pub fn cmd_eval(cfg: &mut RunConfig, checkpoint: Option<&Path>) -> Result<EvalReport> {
    let p = prepare_data(cfg)?;
    cfg.write_effective()?;
    let path = checkpoint.map_or_else(|| cfg.checkpoint_path(), Path::to_path_buf);
    let model = load_trained(&path, &p, &cfg.outcome)?;
    let (reports, truth) = p.examples(&p.split.expanded_test);
    let pred = model.predict(&p, &reports)?;
    let confusion = ConfusionMatrix::from_pairs(p.k(), &truth, &pred)?;
    let metrics = confusion.prf1();
    let mut counts = vec![0u64; p.k()];
    for e in &p.split.expanded_train {
        counts[e.category] += 1;
    }
    let baseline = evaluation::random_baseline(&counts, &truth, derive_seed(cfg.seed, "baseline"), cfg.eval.baseline_trials)?;
    let name = model.kind().as_str();
    evaluation::write_metrics_csv(
        &cfg.out(&format!("metrics_{name}.csv")),
        &p.categories,
        &[(name.to_string(), metrics.clone()), ("random".to_string(), baseline.mean.clone())],
    )?;
    evaluation::write_confusion_csv(&cfg.out(&format!("confusion_{name}.csv")), &p.categories, &confusion)?;
    log::info!("{name}: test macro-F1 {:.4} (random {:.4})", metrics.macro_f1, baseline.mean.macro_f1);
    Ok(EvalReport { metrics, baseline, confusion })
}

// ---- extract ---------------------------------------------------------------

fn method_fits(method: Method, kind: ModelKind) -> bool {
    matches!(
        (method, kind),
        (Method::Regions | Method::Saliency, ModelKind::Cnn) | (Method::Attention, ModelKind::Han) | (Method::Svm, ModelKind::Svm)
    )
}

/// Rankings for one method, one per category, written as
/// `rankings/<method>_<category>.tsv`.
pub fn cmd_extract(cfg: &mut RunConfig, checkpoint: Option<&Path>, method: Method) -> Result<Vec<PrecursorRanking>> {
    let p = prepare_data(cfg)?;
    cfg.write_effective()?;
    let path = checkpoint.map_or_else(|| cfg.checkpoint_path(), Path::to_path_buf);
    let model = load_trained(&path, &p, &cfg.outcome)?;
    if !method_fits(method, model.kind()) {
        return Err(Error::InvalidConfig(format!("method `{}` does not apply to a {} model", method.as_str(), model.kind().as_str())));
    }
    let ex = &cfg.extraction;
    extraction::check_top_k(ex.top_k)?;
    let ids: Vec<String> = match ex.reports {
        SplitPart::Train => p.split.train_ids.clone(),
        SplitPart::Test => p.split.test_ids.clone(),
        SplitPart::All => p.reports.iter().map(|r| r.report_id.clone()).collect(),
    };
    let part: Vec<Example> = {
        let keep: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let all = p.split.expanded_train.iter().chain(&p.split.expanded_val).chain(&p.split.expanded_test);
        let mut v: Vec<Example> = all.filter(|e| keep.contains(e.id.as_str())).cloned().collect();
        v.sort();
        v
    };
    let (reports, truth) = p.examples(&part);
    let groups_of = match ex.group_by {
        GroupBy::Truth => truth,
        GroupBy::Predicted => model.predict(&p, &reports)?,
    };
    // With predicted grouping a report appears once, under its prediction.
    let (reports, groups_of) = if ex.group_by == GroupBy::Predicted {
        let mut seen = std::collections::BTreeSet::new();
        reports.into_iter().zip(groups_of).filter(|(r, _)| seen.insert(r.report_id.clone())).unzip()
    } else {
        (reports, groups_of)
    };
    let groups = extraction::group_by_category(&reports, &groups_of, p.k());
    let dir = cfg.out("rankings");
    fs::create_dir_all(&dir)?;
    let mut out = Vec::with_capacity(p.k());
    for (c, group) in groups.iter().enumerate() {
        let entries = match (&model, method) {
            (Trained::Cnn(m), Method::Regions) => extraction::aggregate_regions(m, &p.vocab, group, ex.regions_per_report)?.ranking(ex.top_k),
            (Trained::Cnn(m), Method::Saliency) => extraction::aggregate_saliency(m, &p.vocab, group, ex.merge)?.ranking(ex.top_k),
            (Trained::Han(m), Method::Attention) => extraction::aggregate_attention(m, &p.vocab, group, ex.merge)?.ranking(ex.top_k),
            (Trained::Svm(m, v), Method::Svm) => extraction::aggregate_svm(m, v, c, ex.top_k),
            _ => unreachable!("checked by method_fits"),
        };
        let r = extraction::ranking(method, &cfg.outcome, &p.categories[c], entries);
        r.write_tsv(&dir.join(format!("{}_{}.tsv", method.as_str(), p.categories[c])))?;
        out.push(r);
    }
    Ok(out)
}

// ---- explain ---------------------------------------------------------------

pub fn cmd_explain(cfg: &mut RunConfig, checkpoint: Option<&Path>, report_id: &str) -> Result<PathBuf> {
    let p = prepare_data(cfg)?;
    cfg.write_effective()?;
    let path = checkpoint.map_or_else(|| cfg.checkpoint_path(), Path::to_path_buf);
    let report = p.report(report_id).ok_or_else(|| Error::InvalidConfig(format!("no report `{report_id}` for this outcome")))?;
    let e = match load_trained(&path, &p, &cfg.outcome)? {
        Trained::Cnn(m) => extraction::explain_cnn(&m, &p.vocab, report)?,
        Trained::Han(m) => extraction::explain_han(&m, &p.vocab, report)?,
        Trained::Svm(..) => return Err(Error::InvalidConfig("explanations need a cnn or han checkpoint".into())),
    };
    let dir = cfg.out("explain");
    fs::create_dir_all(&dir)?;
    let file = dir.join(extraction::explanation_file_name(&e));
    fs::write(&file, extraction::render_explanation_html(&e, &p.categories))?;
    Ok(file)
}

// ---- synth / neighbors -----------------------------------------------------

/// Writes `corpus.jsonl`, `schema.json`, `ground_truth.json` and the
/// effective synth config into `out_dir`.
pub fn cmd_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<synthcorpus::GroundTruth> {
    let (reports, truth) = synthcorpus::generate(cfg)?;
    fs::create_dir_all(out_dir)?;
    corpus::write_jsonl(&out_dir.join("corpus.jsonl"), &reports)?;
    fs::write(out_dir.join("schema.json"), serde_json::to_string_pretty(&[cfg.schema()?])? + "\n")?;
    fs::write(out_dir.join("ground_truth.json"), serde_json::to_string_pretty(&truth)? + "\n")?;
    fs::write(out_dir.join("synth_config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    Ok(truth)
}

pub fn cmd_neighbors(embeddings_path: &Path, vocab_path: &Path, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let m = EmbeddingMatrix::load_text(embeddings_path)?;
    let v = Vocabulary::load_tsv(vocab_path)?;
    if m.rows() != v.len() {
        return Err(Error::Shape(format!("{} embedding rows for a vocabulary of {}", m.rows(), v.len())));
    }
    embeddings::nearest_neighbors(&m, &v, word, k)
}

/// 0 on success, 1 for validation errors, 2 for runtime failures.
pub fn exit_code(r: &Result<()>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let good = r#"{"paths":{"corpus":"c","schema":"s","output_dir":"o"},"outcome":"x","model":"svm"}"#;
        let cfg: RunConfig = serde_json::from_str(good).unwrap();
        assert_eq!(cfg.seed, 42);
        let bad = r#"{"paths":{"corpus":"c","schema":"s","output_dir":"o"},"outcome":"x","model":"svm","lr":1}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
        let nested = r#"{"paths":{"corpus":"c","schema":"s","output_dir":"o"},"outcome":"x","model":"cnn","cnn":{"filters":3}}"#;
        assert!(serde_json::from_str::<RunConfig>(nested).is_err());
    }

    #[test]
    fn resolve_is_idempotent() {
        let mut cfg: RunConfig =
            serde_json::from_str(r#"{"paths":{"corpus":"c","schema":"s","output_dir":"o"},"outcome":"incident_type","model":"han"}"#).unwrap();
        cfg.resolve(100, 6);
        assert_eq!(cfg.cnn.as_ref().unwrap().n_filters, 300);
        assert_eq!(cfg.train.as_ref().unwrap().lr_max, 6.29e-2);
        let once = cfg.clone();
        let mut again: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        again.resolve(100, 6);
        assert_eq!(again, once);
    }

    #[test]
    fn missing_paths_are_validation_errors() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"paths":{"corpus":"/nonexistent/c","schema":"s","output_dir":"o"},"outcome":"x","model":"svm"}"#).unwrap();
        let e = cfg.check_paths().unwrap_err();
        assert!(e.is_validation());
        assert_eq!(exit_code(&Err(e)), 1);
        assert_eq!(exit_code(&Err(Error::Diverged { epoch: 1, step: 2 })), 2);
    }

    #[test]
    fn method_model_pairs() {
        assert!(method_fits(Method::Regions, ModelKind::Cnn));
        assert!(!method_fits(Method::Attention, ModelKind::Cnn));
        assert!(method_fits(Method::Svm, ModelKind::Svm));
    }
}

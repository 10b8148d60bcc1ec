use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use log::info;
use nelec_core::corpus::{dataset_stats, parse_dataset, Conversation, Label};
use nelec_core::eval::{
    ablate, apply_thresholds, argmax_label, micro_f1, thresholds_f1, tune_thresholds, EvalReport, Thresholds,
};
use nelec_core::features::FeatureSpace;
use nelec_core::lexicons::{load_emolex, load_vad, EmoCategory, EmoLexicon, VadLexicon};
use nelec_core::model::{Classifier, NUM_CLASSES};
use nelec_core::pipeline::{labels, Pipeline};
use nelec_core::preprocess::{load_word_set, Preprocessor, SlangTable, Tokenizer};
use nelec_core::providers::{ConstantProvider, FileProvider, HttpProvider, ScoreProvider, StubProvider};
use serde::Serialize;

use crate::config::{ModelKind, RunConfig, ScoreKind};
use crate::error::CliError;
use crate::manifest::Manifest;

pub const CONFIG_FILE: &str = "config.toml";
pub const MODEL_FILE: &str = "model.json";
pub const SPACE_FILE: &str = "space.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const THRESHOLDS_FILE: &str = "thresholds.json";

/// Config file plus the flags that override it.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Training file (repeatable; replaces the configured list, files are concatenated).
    #[arg(long = "train")]
    pub train: Vec<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub vad: Option<PathBuf>,
    #[arg(long)]
    pub emolex: Option<PathBuf>,
    /// Neural score source.
    #[arg(long, value_enum)]
    pub score_source: Option<ScoreKind>,
    /// Precomputed score file (repeatable; implies `--score-source file`).
    #[arg(long = "scores")]
    pub scores: Vec<PathBuf>,
    /// Boosting rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub min_doc_freq: Option<usize>,
}

fn cwd_absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::usage(e.to_string()).context(p.display()))
}

impl ConfigArgs {
    /// Load, apply overrides and validate.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if !self.train.is_empty() {
            cfg.data.train = self.train.iter().map(|p| cwd_absolute(p)).collect::<Result<_, _>>()?;
        }
        if let Some(p) = &self.dev {
            cfg.data.dev = Some(cwd_absolute(p)?);
        }
        if let Some(p) = &self.vad {
            cfg.resources.vad = Some(cwd_absolute(p)?);
        }
        if let Some(p) = &self.emolex {
            cfg.resources.emolex = Some(cwd_absolute(p)?);
        }
        apply_score_overrides(&mut cfg, self.score_source, &self.scores)?;
        if let Some(r) = self.rounds {
            cfg.gbdt.rounds = r;
        }
        if let Some(m) = self.min_doc_freq {
            cfg.features.min_doc_freq = m;
        }
        cfg.sync_seed();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_score_overrides(cfg: &mut RunConfig, source: Option<ScoreKind>, files: &[PathBuf]) -> Result<(), CliError> {
    if !files.is_empty() {
        cfg.scores.source = ScoreKind::File;
        cfg.scores.files = files.iter().map(|p| cwd_absolute(p)).collect::<Result<_, _>>()?;
    }
    if let Some(s) = source {
        cfg.scores.source = s;
    }
    Ok(())
}

pub fn create_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::internal(e.to_string()).context(out.display()))
}

pub fn write_output(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::internal(e.to_string()).context(path.display()))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    write_output(out, name, &(text + "\n"))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(e.to_string()).context(path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(e.to_string()).context(path.display()))
}

fn first_row_width(text: &str) -> usize {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .find(|l| !l.is_empty())
        .map_or(0, |l| l.split('\t').count())
}

/// Read a conversation file; five columns means labelled, four unlabelled.
pub fn read_dataset(path: &Path) -> Result<Vec<Conversation>, CliError> {
    let text = read_text(path)?;
    let has_labels = match first_row_width(&text) {
        5 => true,
        4 => false,
        n => {
            return Err(CliError::data(format!("expected 4 or 5 tab-separated columns, found {n}")).context(path.display()))
        }
    };
    parse_dataset(text.as_bytes(), has_labels).map_err(|e| CliError::from(e).context(path.display()))
}

/// Concatenate datasets, rejecting ids that repeat across files.
fn concat_datasets(parts: Vec<Vec<Conversation>>) -> Result<Vec<Conversation>, CliError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for conv in parts.into_iter().flatten() {
        if !seen.insert(conv.id.clone()) {
            return Err(CliError::data(format!("conversation id {:?} appears in more than one input file", conv.id)));
        }
        out.push(conv);
    }
    Ok(out)
}

/// `id\tlabel` rows, or the labels of a five-column conversation file.
pub fn read_labels(path: &Path) -> Result<Vec<(String, Label)>, CliError> {
    let text = read_text(path)?;
    if first_row_width(&text) == 5 {
        return Ok(read_dataset(path)?
            .into_iter()
            .map(|c| (c.id, c.label.expect("labelled file")))
            .collect());
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 2 {
            return Err(CliError::data(format!("line {}: expected 2 columns, found {}", i + 1, cells.len())).context(path.display()));
        }
        if i == 0 && cells[0].eq_ignore_ascii_case("id") {
            continue;
        }
        let label: Label = cells[1]
            .parse()
            .map_err(|e| CliError::data(format!("line {}: {e}", i + 1)).context(path.display()))?;
        if !seen.insert(cells[0].to_string()) {
            return Err(CliError::data(format!("duplicate id {:?}", cells[0])).context(path.display()));
        }
        out.push((cells[0].to_string(), label));
    }
    Ok(out)
}

pub fn build_tokenizer(cfg: &RunConfig) -> Result<Tokenizer, CliError> {
    match &cfg.resources.emoticons {
        Some(p) => Tokenizer::from_emoticon_file(open(p)?).map_err(|e| CliError::from(e).context(p.display())),
        None => Ok(Tokenizer::default()),
    }
}

fn load_emo(cfg: &RunConfig) -> Result<EmoLexicon, CliError> {
    match &cfg.resources.emolex {
        Some(p) => load_emolex(open(p)?).map_err(|e| CliError::from(e).context(p.display())),
        None => Ok(EmoLexicon::default()),
    }
}

pub fn build_pipeline(cfg: &RunConfig) -> Result<Pipeline, CliError> {
    let mut preprocessor = Preprocessor::new(cfg.preprocess);
    preprocessor.tokenizer = build_tokenizer(cfg)?;
    if let Some(p) = &cfg.resources.slang {
        preprocessor.slang = SlangTable::from_tsv(open(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
    }
    if let Some(p) = &cfg.resources.stopwords {
        preprocessor.stopwords = load_word_set(open(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
    }
    let vad = match &cfg.resources.vad {
        Some(p) => load_vad(open(p)?).map_err(|e| CliError::from(e).context(p.display()))?,
        None => VadLexicon::default(),
    };
    Ok(Pipeline {
        preprocessor,
        vad,
        emo: load_emo(cfg)?,
    })
}

fn owned_set(words: Vec<&str>) -> HashSet<String> {
    words.into_iter().map(String::from).collect()
}

/// Score provider for the configured source; the HTTP cache defaults to `<out>/score-cache`.
pub fn build_provider(cfg: &RunConfig, out: &Path) -> Result<Box<dyn ScoreProvider>, CliError> {
    let s = &cfg.scores;
    Ok(match s.source {
        ScoreKind::Zeros => Box::new(ConstantProvider::zeros()),
        ScoreKind::File => {
            let mut provider = FileProvider::default();
            for p in &s.files {
                provider
                    .extend_from_reader(open(p)?)
                    .map_err(|e| CliError::from(e).context(p.display()))?;
            }
            Box::new(provider)
        }
        ScoreKind::Stub => {
            let emo = load_emo(cfg)?;
            let anger = owned_set(emo.words_with(EmoCategory::Anger));
            let disgust = owned_set(emo.words_with(EmoCategory::Disgust));
            Box::new(StubProvider::new(
                owned_set(emo.words_with(EmoCategory::Positive)),
                owned_set(emo.words_with(EmoCategory::Negative)),
                anger.intersection(&disgust).cloned().collect(),
            ))
        }
        ScoreKind::Http => {
            let endpoint = s.endpoint.clone().ok_or_else(|| CliError::usage("scores.endpoint is required"))?;
            let cache = s.cache_dir.clone().unwrap_or_else(|| out.join("score-cache"));
            Box::new(HttpProvider::new(endpoint, Duration::from_secs_f64(s.timeout_secs), cache)?)
        }
    })
}

fn counts_by_label(convs: &[Conversation]) -> BTreeMap<Label, usize> {
    let mut m = BTreeMap::new();
    for c in convs {
        if let Some(l) = c.label {
            *m.entry(l).or_insert(0) += 1;
        }
    }
    m
}

fn report_files(out: &Path, stem: &str, report: &EvalReport) -> Result<(), CliError> {
    write_json(out, &format!("{stem}.json"), report)?;
    write_output(out, &format!("{stem}.txt"), &report.to_text())
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Dataset to describe (repeatable); defaults to the configured train, dev and test files.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Vocabulary for the OOV rate (one word per line).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct StatsEntry {
    path: PathBuf,
    stats: nelec_core::corpus::DatasetStats,
}

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let mut cfg = args.cfg.resolve()?;
    if let Some(v) = &args.vocab {
        cfg.resources.vocab = Some(cwd_absolute(v)?);
        cfg.validate()?;
    }
    let inputs: Vec<PathBuf> = if args.inputs.is_empty() {
        cfg.data.train.iter().chain(&cfg.data.dev).chain(&cfg.data.test).cloned().collect()
    } else {
        args.inputs.iter().map(|p| cwd_absolute(p)).collect::<Result<_, _>>()?
    };
    if inputs.is_empty() {
        return Err(CliError::usage("no input files: pass --input or configure data files"));
    }
    create_out_dir(&args.out)?;
    let mut manifest = Manifest::start("stats");
    let tokenizer = build_tokenizer(&cfg)?;
    let vocab = match &cfg.resources.vocab {
        Some(p) => {
            manifest.input("vocab", p, None)?;
            Some(load_word_set(open(p)?).map_err(|e| CliError::from(e).context(p.display()))?)
        }
        None => None,
    };
    let mut entries = Vec::new();
    let mut text = String::new();
    for path in &inputs {
        let convs = read_dataset(path)?;
        manifest.input("dataset", path, Some(convs.len()))?;
        let stats = dataset_stats(&convs, vocab.as_ref(), &tokenizer).map_err(|e| CliError::from(e).context(path.display()))?;
        text.push_str(&format!("# {}\n{}\n", path.display(), stats.to_text()));
        entries.push(StatsEntry {
            path: path.clone(),
            stats,
        });
    }
    write_json(&args.out, "stats.json", &entries)?;
    write_output(&args.out, "stats.txt", &text)?;
    manifest.finish(&args.out, &["stats.json", "stats.txt"])
}

// ---------------------------------------------------------------- train

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Append the dev file to the training data (final-model recipe).
    #[arg(long)]
    pub include_dev: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = args.cfg.resolve()?;
    if cfg.data.train.is_empty() {
        return Err(CliError::usage("no training files: pass --train or set data.train"));
    }
    if args.include_dev && cfg.data.dev.is_none() {
        return Err(CliError::usage("--include-dev needs a dev file"));
    }
    let pipeline = build_pipeline(&cfg)?;
    create_out_dir(&args.out)?;
    let provider = build_provider(&cfg, &args.out)?;
    let mut manifest = Manifest::start("train");
    manifest.seed = Some(cfg.seed);

    let mut parts = Vec::new();
    for p in &cfg.data.train {
        let convs = read_dataset(p)?;
        manifest.input("train", p, Some(convs.len()))?;
        parts.push(convs);
    }
    let dev = match &cfg.data.dev {
        Some(p) => {
            let convs = read_dataset(p)?;
            manifest.input("dev", p, Some(convs.len()))?;
            Some(convs)
        }
        None => None,
    };
    let held_out = if args.include_dev {
        parts.push(dev.expect("checked above"));
        None
    } else {
        dev
    };
    let train = concat_datasets(parts)?;
    manifest.total_rows = Some(train.len());
    for (role, p) in [("vad", &cfg.resources.vad), ("emolex", &cfg.resources.emolex)]
        .into_iter()
        .chain([("slang", &cfg.resources.slang), ("stopwords", &cfg.resources.stopwords)])
        .chain([("emoticons", &cfg.resources.emoticons)])
    {
        if let Some(p) = p {
            manifest.input(role, p, None)?;
        }
    }
    for p in &cfg.scores.files {
        manifest.input("scores", p, None)?;
    }
    info!("training on {} conversations {:?}", train.len(), counts_by_label(&train));

    let (space, model) = pipeline.fit(&train, &cfg.features, &cfg.model_spec(), provider.as_ref())?;
    info!("feature space: {} columns ({} sparse)", space.dimension(), space.sparse_count());

    write_output(&args.out, CONFIG_FILE, &cfg.to_toml())?;
    write_output(&args.out, MODEL_FILE, &model.to_json())?;
    let mut buf = Vec::new();
    space.save(&mut buf).map_err(|e| CliError::internal(e.to_string()))?;
    write_output(&args.out, SPACE_FILE, &String::from_utf8(buf).map_err(|e| CliError::internal(e.to_string()))?)?;
    let mut files = vec![CONFIG_FILE, MODEL_FILE, SPACE_FILE];

    if let Some(dev) = held_out.filter(|d| d.iter().all(|c| c.label.is_some())) {
        let probas = pipeline.predict_probas(&model, &space, &dev, provider.as_ref())?;
        let preds: Vec<Label> = probas.iter().map(argmax_label).collect();
        let report = micro_f1(&labels(&dev)?, &preds)?;
        info!("dev micro F1 {:.4}", report.micro.f1);
        report_files(&args.out, "dev_report", &report)?;
        files.extend(["dev_report.json", "dev_report.txt"]);
    }
    manifest.finish(&args.out, &files)
}

// ---------------------------------------------------------------- trained model directories

/// A `train` output directory loaded back.
pub struct TrainedModel {
    pub cfg: RunConfig,
    pub model: Classifier,
    pub space: FeatureSpace,
}

impl TrainedModel {
    pub fn load(dir: &Path, manifest: &mut Manifest) -> Result<Self, CliError> {
        let cfg_path = dir.join(CONFIG_FILE);
        let model_path = dir.join(MODEL_FILE);
        let space_path = dir.join(SPACE_FILE);
        for p in [&cfg_path, &model_path, &space_path] {
            if !p.exists() {
                return Err(CliError::usage(format!("model directory is missing {}", p.display())));
            }
        }
        let cfg = RunConfig::load(&cfg_path)?;
        let model = Classifier::from_json(&read_text(&model_path)?).map_err(|e| CliError::from(e).context(model_path.display()))?;
        let space = FeatureSpace::load(open(&space_path)?).map_err(|e| CliError::from(e).context(space_path.display()))?;
        for (role, p) in [("config", &cfg_path), ("model", &model_path), ("space", &space_path)] {
            manifest.input(role, p, None)?;
        }
        Ok(Self { cfg, model, space })
    }

    fn probas(
        &self,
        convs: &[Conversation],
        scores: &[PathBuf],
        out: &Path,
    ) -> Result<Vec<[f64; NUM_CLASSES]>, CliError> {
        let mut cfg = self.cfg.clone();
        apply_score_overrides(&mut cfg, None, scores)?;
        cfg.validate()?;
        let pipeline = build_pipeline(&cfg)?;
        let provider = build_provider(&cfg, out)?;
        Ok(pipeline.predict_probas(&self.model, &self.space, convs, provider.as_ref())?)
    }
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Conversations to label (4 or 5 columns).
    #[arg(long)]
    pub input: PathBuf,
    /// Thresholds from `tune-thresholds`; without it the most probable of the four classes wins.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Score file(s) for the input conversations, replacing the trained configuration's source.
    #[arg(long = "scores")]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    for p in std::iter::once(&args.input).chain(&args.thresholds).chain(&args.scores) {
        if !p.exists() {
            return Err(CliError::usage(format!("path does not exist: {}", p.display())));
        }
    }
    let mut manifest = Manifest::start("predict");
    let trained = TrainedModel::load(&args.model_dir, &mut manifest)?;
    manifest.seed = Some(trained.cfg.seed);
    let thresholds = match &args.thresholds {
        Some(p) => {
            manifest.input("thresholds", p, None)?;
            Some(Thresholds::from_json(&read_text(p)?).map_err(|e| CliError::from(e).context(p.display()))?)
        }
        None => None,
    };
    let convs = read_dataset(&args.input)?;
    manifest.input("input", &args.input, Some(convs.len()))?;
    for p in &args.scores {
        manifest.input("scores", p, None)?;
    }
    create_out_dir(&args.out)?;
    let probas = trained.probas(&convs, &args.scores, &args.out)?;
    let mut text = String::from("id\tlabel\n");
    for (conv, p) in convs.iter().zip(&probas) {
        let label = match &thresholds {
            Some(th) => apply_thresholds(p, th),
            None => argmax_label(p),
        };
        text.push_str(&format!("{}\t{}\n", conv.id, label));
    }
    write_output(&args.out, PREDICTIONS_FILE, &text)?;
    manifest.finish(&args.out, &[PREDICTIONS_FILE])
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold labels: a labelled conversation file or `id\tlabel` rows.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions as `id\tlabel` rows.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    for p in [&args.gold, &args.pred] {
        if !p.exists() {
            return Err(CliError::usage(format!("path does not exist: {}", p.display())));
        }
    }
    let mut manifest = Manifest::start("evaluate");
    let gold = read_labels(&args.gold)?;
    let pred: HashMap<String, Label> = read_labels(&args.pred)?.into_iter().collect();
    manifest.input("gold", &args.gold, Some(gold.len()))?;
    manifest.input("pred", &args.pred, Some(pred.len()))?;
    if pred.len() != gold.len() {
        return Err(CliError::data(format!("{} gold rows but {} predictions", gold.len(), pred.len())));
    }
    let mut golds = Vec::with_capacity(gold.len());
    let mut preds = Vec::with_capacity(gold.len());
    for (id, g) in &gold {
        let p = pred
            .get(id)
            .ok_or_else(|| CliError::data(format!("no prediction for conversation {id:?}")))?;
        golds.push(*g);
        preds.push(*p);
    }
    let report = micro_f1(&golds, &preds)?;
    create_out_dir(&args.out)?;
    report_files(&args.out, "report", &report)?;
    println!("micro F1 {:.4}", report.micro.f1);
    manifest.finish(&args.out, &["report.json", "report.txt"])
}

// ---------------------------------------------------------------- tune-thresholds

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Held-out labelled conversations; defaults to the trained configuration's dev file.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Grid step in (0, 1].
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long = "scores")]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct TuneReport {
    step: f64,
    examples: usize,
    thresholds: Thresholds,
    /// Most probable of the four classes.
    argmax_f1: f64,
    /// All-zero thresholds: most probable emotion, never Others.
    zero_thresholds_f1: f64,
    tuned_f1: f64,
}

pub fn tune(args: &TuneArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::start("tune-thresholds");
    let trained = TrainedModel::load(&args.model_dir, &mut manifest)?;
    manifest.seed = Some(trained.cfg.seed);
    let dev_path = match &args.dev {
        Some(p) => cwd_absolute(p)?,
        None => trained
            .cfg
            .data
            .dev
            .clone()
            .ok_or_else(|| CliError::usage("no dev file: pass --dev or train with data.dev set"))?,
    };
    if !dev_path.exists() {
        return Err(CliError::usage(format!("path does not exist: {}", dev_path.display())));
    }
    let dev = read_dataset(&dev_path)?;
    manifest.input("dev", &dev_path, Some(dev.len()))?;
    for p in &args.scores {
        manifest.input("scores", p, None)?;
    }
    let golds = labels(&dev)?;
    create_out_dir(&args.out)?;
    let probas = trained.probas(&dev, &args.scores, &args.out)?;
    let th = tune_thresholds(&probas, &golds, args.step).map_err(|e| match e {
        nelec_core::eval::EvalError::InvalidStep(_) => CliError::usage(e.to_string()),
        other => other.into(),
    })?;
    let argmax: Vec<Label> = probas.iter().map(argmax_label).collect();
    let report = TuneReport {
        step: args.step,
        examples: dev.len(),
        thresholds: th,
        argmax_f1: micro_f1(&golds, &argmax)?.micro.f1,
        zero_thresholds_f1: thresholds_f1(&probas, &golds, &Thresholds::default()),
        tuned_f1: thresholds_f1(&probas, &golds, &th),
    };
    info!("tuned {:?}: micro F1 {:.4} (argmax {:.4})", th.as_array(), report.tuned_f1, report.argmax_f1);
    write_output(&args.out, THRESHOLDS_FILE, &th.to_json())?;
    write_json(&args.out, "tune_report.json", &report)?;
    manifest.finish(&args.out, &[THRESHOLDS_FILE, "tune_report.json"])
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Labelled evaluation file; defaults to the dev file.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<(), CliError> {
    let cfg = args.cfg.resolve()?;
    if cfg.data.train.is_empty() {
        return Err(CliError::usage("no training files: pass --train or set data.train"));
    }
    let eval_path = match &args.eval {
        Some(p) => cwd_absolute(p)?,
        None => cfg
            .data
            .dev
            .clone()
            .ok_or_else(|| CliError::usage("no evaluation file: pass --eval or set data.dev"))?,
    };
    if !eval_path.exists() {
        return Err(CliError::usage(format!("path does not exist: {}", eval_path.display())));
    }
    let pipeline = build_pipeline(&cfg)?;
    create_out_dir(&args.out)?;
    let provider = build_provider(&cfg, &args.out)?;
    let mut manifest = Manifest::start("ablate");
    manifest.seed = Some(cfg.seed);
    let mut parts = Vec::new();
    for p in &cfg.data.train {
        let convs = read_dataset(p)?;
        manifest.input("train", p, Some(convs.len()))?;
        parts.push(convs);
    }
    let train = concat_datasets(parts)?;
    manifest.total_rows = Some(train.len());
    let eval = read_dataset(&eval_path)?;
    manifest.input("eval", &eval_path, Some(eval.len()))?;

    let (train_labels, eval_labels) = (labels(&train)?, labels(&eval)?);
    let tokenized = pipeline.prepare(&train);
    let space = pipeline.build_space(&tokenized, &cfg.features)?;
    let train_rows = pipeline.featurize(&space, &train, &tokenized, provider.as_ref())?;
    let eval_rows = pipeline.featurize(&space, &eval, &pipeline.prepare(&eval), provider.as_ref())?;
    let table = ablate(
        &space,
        (&train_rows, &train_labels),
        (&eval_rows, &eval_labels),
        &cfg.model_spec(),
    )?;
    write_output(&args.out, CONFIG_FILE, &cfg.to_toml())?;
    write_json(&args.out, "ablation.json", &table)?;
    write_output(&args.out, "ablation.txt", &table.to_text())?;
    print!("{}", table.to_text());
    manifest.finish(&args.out, &[CONFIG_FILE, "ablation.json", "ablation.txt"])
}

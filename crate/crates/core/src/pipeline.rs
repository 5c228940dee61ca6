//! Artifact layout, stage caching and the end-to-end run.
//!
//! A run directory looks like this:
//!
//! ```text
//! config.json            resolved copy of the run config
//! stages/<stage>.json    cache record: key, input hashes, output hashes
//! split/                 train.tsv valid.tsv test.tsv manifest.json
//! negatives/             {valid,test}.json + positives and candidates TSVs
//! models/<name>/         KGE manifest and f32 blocks (imputed/ when inductive)
//! scores/                <name>.{valid,test}.json + TSV
//! features/              {valid,test}.json + TSV
//! integrator/            fitted global weights, router or weighter
//! integrated/            ensemble test scores and alphas.tsv
//! ranks/                 <name>.tsv per model, ensemble and oracle
//! report.json report.txt events.jsonl
//! ```
//!
//! Each stage is keyed by the hash of its parameters and of the cache
//! records of the stages it reads. A stage is skipped when its record has the
//! same key and every output still hashes to the recorded value; a changed
//! output is a [`Error::HashMismatch`].

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    self, fit_global_average, fit_router, format_alphas, integrate, load_global_weights, load_router, load_weighter,
    save_global_weights, save_router, save_weighter, train_weighter, IntegrationMethod, Integrator, RouterKind,
};
use crate::error::{Error, Result};
use crate::evaluate::{format_table, query_rank, ranks, Metrics};
use crate::features::{read_features, write_features, FeatureContext, FeatureMatrix, Vocab};
use crate::graph::{load_graph, KnowledgeGraph, Triple};
use crate::inductive::{impute_embeddings, read_text_embeddings, seen_unseen, ImputationReport};
use crate::io;
use crate::kge::{load_model, save_model, score_queries, train_kge, KgeConfig};
use crate::rng;
use crate::scores::{read_score_set, write_score_set, ScoreSet};
use crate::splits::{
    generate_negatives, make_inductive_split, make_transductive_split, parse_negatives, read_negatives, read_split,
    write_negatives, write_split, EvalNegatives, NegativesManifest, QuerySet, Side, SplitMode,
};

pub const CONFIG_SCHEMA: &str = "kgc-run/1";
pub const REPORT_SCHEMA: &str = "kgc-report/1";
/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "KGC_OUT";
pub const ENSEMBLE: &str = "ensemble";
pub const ORACLE: &str = "oracle";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub triples: PathBuf,
    pub entities: PathBuf,
    #[serde(default)]
    pub vocab: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub m_eval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    /// The run seed replaces `config.seed`.
    pub config: KgeConfig,
}

/// Score sets produced outside the pipeline against its negatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScores {
    pub name: String,
    pub valid: PathBuf,
    pub test: PathBuf,
}

fn default_margin() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub method: IntegrationMethod,
    #[serde(default)]
    pub router_kind: Option<RouterKind>,
    #[serde(default = "default_margin")]
    pub weighter_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub external_scores: Vec<ExternalScores>,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub text_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

/// `$KGC_OUT`, or `kgc-out` in the working directory.
pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("kgc-out"), PathBuf::from)
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !s.starts_with('.')
}

impl RunConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut c: RunConfig = io::read_json(path)?;
        c.resolve(path.parent().unwrap_or(Path::new(".")));
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.triples);
        fix(&mut self.dataset.entities);
        if let Some(v) = &mut self.dataset.vocab {
            fix(v);
        }
        for e in &mut self.external_scores {
            fix(&mut e.valid);
            fix(&mut e.test);
        }
        if let Some(t) = &mut self.text_embeddings {
            fix(t);
        }
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models
            .iter()
            .map(|m| m.name.clone())
            .chain(self.external_scores.iter().map(|e| e.name.clone()))
            .collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| default_out_root().join("run"))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("run config: {m}")));
        if self.schema != CONFIG_SCHEMA {
            return bad(format!("schema `{}` is not {CONFIG_SCHEMA}", self.schema));
        }
        let mut files = vec![&self.dataset.triples, &self.dataset.entities];
        files.extend(&self.dataset.vocab);
        files.extend(&self.text_embeddings);
        for e in &self.external_scores {
            files.push(&e.valid);
            files.push(&e.test);
        }
        if let Some(missing) = files.iter().find(|p| !p.is_file()) {
            return bad(format!("{} does not exist", missing.display()));
        }
        let names = self.model_names();
        if names.is_empty() {
            return bad("no models".into());
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !valid_name(n) || n == ENSEMBLE || n == ORACLE {
                return bad(format!("model name `{n}` is not a usable file name"));
            }
            if !seen.insert(n) {
                return bad(format!("model name `{n}` appears twice"));
            }
        }
        for m in &self.models {
            m.config.validate()?;
        }
        if self.split.m_eval == 0 {
            return bad("m_eval must be positive".into());
        }
        if self.integration.method == IntegrationMethod::GlobalAverage && names.len() < 2 {
            return bad("a global average needs at least two models".into());
        }
        if !(self.integration.weighter_margin > 0.0 && self.integration.weighter_margin.is_finite()) {
            return bad("weighter margin must be positive".into());
        }
        Ok(())
    }
}

/// A 200-triple config for the bundled synthetic dataset.
pub fn synthetic_config(data_dir: &Path, seed: u64) -> RunConfig {
    let model = |kind: crate::kge::ModelKind| {
        let mut c = KgeConfig::new(kind);
        c.dim = 16;
        c.lr = 1e-2;
        c.negatives = 16;
        c.batch_size = 64;
        c.max_steps = 300;
        c.eval_every = 50;
        ModelSpec {
            name: kind.name().to_string(),
            config: c,
        }
    };
    RunConfig {
        schema: CONFIG_SCHEMA.into(),
        dataset: DatasetConfig {
            triples: data_dir.join("triples.tsv"),
            entities: data_dir.join("entities.tsv"),
            vocab: None,
        },
        split: SplitConfig {
            mode: SplitMode::Transductive,
            valid_frac: 0.1,
            test_frac: 0.1,
            m_eval: 500,
        },
        models: vec![model(crate::kge::ModelKind::ComplEx), model(crate::kge::ModelKind::TransE)],
        external_scores: Vec::new(),
        integration: IntegrationConfig {
            method: IntegrationMethod::Router,
            router_kind: Some(RouterKind::Gbdt),
            weighter_margin: 1.0,
        },
        text_embeddings: None,
        output_dir: None,
        seed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the run directory, and its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: String,
    pub status: StageStatus,
    pub key: String,
}

struct Stages {
    out: PathBuf,
    events: Vec<StageEvent>,
}

impl Stages {
    fn record_path(&self, stage: &str) -> PathBuf {
        self.out.join("stages").join(format!("{stage}.json"))
    }

    /// Hash of a finished stage's record, used as input to later stages.
    fn hash_of(&self, stage: &str) -> Result<String> {
        io::sha256_file(&self.record_path(stage))
    }

    fn run<P: Serialize>(
        &mut self,
        stage: &str,
        params: &P,
        upstream: &[&str],
        body: impl FnOnce(&Path) -> Result<Vec<PathBuf>>,
    ) -> Result<()> {
        let mut inputs = BTreeMap::new();
        for u in upstream {
            inputs.insert(u.to_string(), self.hash_of(u)?);
        }
        let mut keyed = serde_json::to_vec(&serde_json::json!({ "stage": stage, "inputs": &inputs })).expect("json");
        keyed.extend(io::to_json_bytes(params));
        let key = io::sha256_hex(&keyed);
        let rp = self.record_path(stage);
        if rp.is_file() {
            let rec: StageRecord = io::read_json(&rp)?;
            if rec.key == key {
                for (rel, expected) in &rec.outputs {
                    let path = self.out.join(rel);
                    let found = if path.is_file() { io::sha256_file(&path)? } else { "missing".to_string() };
                    if &found != expected {
                        return Err(Error::HashMismatch {
                            artifact: path.display().to_string(),
                            expected: expected.clone(),
                            found,
                        });
                    }
                }
                log::info!("{}", serde_json::json!({ "stage": stage, "status": "skipped" }));
                self.events.push(StageEvent {
                    stage: stage.into(),
                    status: StageStatus::Skipped,
                    key,
                });
                return Ok(());
            }
        }
        let written = body(&self.out).map_err(|e| match e {
            e @ Error::HashMismatch { .. } => e,
            e => Error::StageFailure {
                stage: stage.into(),
                source: Box::new(e),
            },
        })?;
        let mut outputs = BTreeMap::new();
        for p in written {
            let rel = p.strip_prefix(&self.out).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            outputs.insert(rel, io::sha256_file(&p)?);
        }
        io::write_json(
            &rp,
            &StageRecord {
                stage: stage.into(),
                key: key.clone(),
                inputs,
                outputs,
            },
        )?;
        log::info!("{}", serde_json::json!({ "stage": stage, "status": "ran" }));
        self.events.push(StageEvent {
            stage: stage.into(),
            status: StageStatus::Ran,
            key,
        });
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub valid: Metrics,
    pub test: Metrics,
    /// Training step of the kept checkpoint (none for external scores).
    pub best_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationSummary {
    pub n_imputed: usize,
    pub mean_similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub mode: SplitMode,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub seed: u64,
    pub split: SplitSizes,
    pub models: Vec<ModelReport>,
    pub method: IntegrationMethod,
    /// Integrator summary: global α, router kind and CV accuracy, or the
    /// weighter's hold-out MRR.
    pub integrator: serde_json::Value,
    pub ensemble: Metrics,
    /// Per-query best single model on the test set.
    pub oracle: Metrics,
    pub imputation: BTreeMap<String, ImputationSummary>,
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, Metrics)> = self.models.iter().map(|m| (m.name.clone(), m.test)).collect();
        rows.push((ENSEMBLE.into(), self.ensemble));
        rows.push((ORACLE.into(), self.oracle));
        let mut s = format!(
            "split {:?}: {} train / {} valid / {} test, seed {}\nintegration: {}\n\ntest\n",
            self.split.mode,
            self.split.train,
            self.split.valid,
            self.split.test,
            self.seed,
            serde_json::to_string(&self.method).unwrap_or_default().trim_matches('"'),
        );
        s.push_str(&format_table(&rows));
        s.push_str("\nvalid\n");
        let valid: Vec<(String, Metrics)> = self.models.iter().map(|m| (m.name.clone(), m.valid)).collect();
        s.push_str(&format_table(&valid));
        for (name, imp) in &self.imputation {
            let _ = writeln!(
                s,
                "\n{name}: {} unseen entities imputed, mean cosine {:.4}",
                imp.n_imputed, imp.mean_similarity
            );
        }
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Run every stage on one thread.
    pub deterministic: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: Report,
    pub events: Vec<StageEvent>,
}

pub fn run_pipeline(config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    if opts.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        return pool.install(|| run_stages(config));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = opts;
    run_stages(config)
}

fn score_paths(out: &Path, name: &str, part: &str) -> PathBuf {
    out.join("scores").join(format!("{name}.{part}.json"))
}

fn negatives_path(out: &Path, part: &str) -> PathBuf {
    out.join("negatives").join(format!("{part}.json"))
}

/// Writes `valid.json` and `test.json` with their positives and candidate
/// TSVs into `dir`; returns every file written.
pub fn write_negative_sets(kg: &KnowledgeGraph, negs: &EvalNegatives, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (part, set) in [("valid", &negs.valid), ("test", &negs.test)] {
        let pos = format!("{part}_positives.tsv");
        let cand = format!("{part}_candidates.tsv");
        let manifest = dir.join(format!("{part}.json"));
        kg.write_triples(&set.positives, &dir.join(&pos))?;
        write_negatives(kg, set, &manifest, &pos, &cand)?;
        written.extend([manifest, dir.join(pos), dir.join(cand)]);
    }
    Ok(written)
}

fn with_tsv(manifest: &Path) -> Vec<PathBuf> {
    let tsv = manifest.with_extension("tsv");
    vec![manifest.to_path_buf(), tsv]
}

fn run_stages(config: &RunConfig) -> Result<RunOutcome> {
    let out = config.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    config.save(&out.join("config.json"))?;
    let kg = load_graph(&config.dataset.triples, &config.dataset.entities)?;
    let seed = config.seed;
    let mut st = Stages {
        out: out.clone(),
        events: Vec::new(),
    };

    let data_hashes = (
        io::sha256_file(&config.dataset.triples)?,
        io::sha256_file(&config.dataset.entities)?,
    );
    st.run("split", &(&config.split, seed, &data_hashes), &[], |out| {
        let sc = &config.split;
        let split = match sc.mode {
            SplitMode::Transductive => make_transductive_split(&kg, sc.valid_frac, sc.test_frac, seed)?,
            SplitMode::Inductive => make_inductive_split(&kg, sc.valid_frac, sc.test_frac, seed)?,
        };
        let dir = out.join("split");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_split(&kg, &split, &dir)?;
        Ok(["train.tsv", "valid.tsv", "test.tsv", "manifest.json"].iter().map(|f| dir.join(f)).collect())
    })?;
    let split = read_split(&kg, &out.join("split"))?;

    st.run("negatives", &(config.split.m_eval, seed), &["split"], |out| {
        let negs = generate_negatives(&kg, &split, config.split.m_eval, seed)?;
        write_negative_sets(&kg, &negs, &out.join("negatives"))
    })?;
    let valid_negs = read_negatives(&kg, &negatives_path(&out, "valid"))?;
    let test_negs = read_negatives(&kg, &negatives_path(&out, "test"))?;
    let valid_q = valid_negs.sets.queries();
    let test_q = test_negs.sets.queries();
    let kg_train = kg.with_triples(split.train.iter().copied());

    let text = match &config.text_embeddings {
        Some(p) => Some((read_text_embeddings(p)?, io::sha256_file(p)?)),
        None => None,
    };
    let mut best_steps = BTreeMap::new();
    let mut imputation = BTreeMap::new();
    for spec in &config.models {
        let mut cfg = spec.config.clone();
        cfg.seed = seed;
        let train_stage = format!("train-{}", spec.name);
        st.run(&train_stage, &cfg, &["split", "negatives"], |out| {
            let o = train_kge(&kg_train, Some(&valid_q), &cfg)?;
            let dir = out.join("models").join(&spec.name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            save_model(&o.model, &kg, &dir, o.best_valid_mrr, o.best_step)?;
            io::write_json(&dir.join("history.json"), &o.history)?;
            Ok(["manifest.json", "entities.f32", "relations.f32", "history.json"].iter().map(|f| dir.join(f)).collect())
        })?;
        let model_dir = out.join("models").join(&spec.name);
        let (mut model, manifest) = load_model(&model_dir, &kg)?;
        best_steps.insert(spec.name.clone(), manifest.step);
        let mut upstream = train_stage.clone();

        if let Some((text, text_hash)) = &text {
            let stage = format!("impute-{}", spec.name);
            st.run(&stage, text_hash, &[&train_stage], |out| {
                let (seen, unseen) = seen_unseen(&kg, &split);
                let (imputed, report) = impute_embeddings(&model, &kg, text, &seen, &unseen)?;
                let dir = out.join("models").join(&spec.name).join("imputed");
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                save_model(&imputed, &kg, &dir, manifest.best_valid_mrr, manifest.step)?;
                io::write_json(&dir.join("imputation.json"), &report)?;
                Ok(["manifest.json", "entities.f32", "relations.f32", "imputation.json"].iter().map(|f| dir.join(f)).collect())
            })?;
            let dir = model_dir.join("imputed");
            model = load_model(&dir, &kg)?.0;
            let report: ImputationReport = io::read_json(&dir.join("imputation.json"))?;
            let n = report.imputed.len();
            let mean = if n == 0 {
                0.0
            } else {
                io::pairwise_sum(&report.imputed.iter().map(|i| i.similarity).collect::<Vec<_>>()) / n as f64
            };
            imputation.insert(
                spec.name.clone(),
                ImputationSummary {
                    n_imputed: n,
                    mean_similarity: mean,
                },
            );
            upstream = stage;
        }

        let score_stage = format!("score-{}", spec.name);
        st.run(&score_stage, &spec.name, &[&upstream, "negatives"], |out| {
            let mut written = Vec::new();
            for (part, q, negs) in [("valid", &valid_q, &valid_negs), ("test", &test_q, &test_negs)] {
                let path = score_paths(out, &spec.name, part);
                write_score_set(&score_queries(&model, q, &spec.name), &path, &negs.manifest_sha256)?;
                written.extend(with_tsv(&path));
            }
            Ok(written)
        })?;
    }
    for ext in &config.external_scores {
        let hashes = (io::sha256_file(&ext.valid)?, io::sha256_file(&ext.test)?);
        st.run(&format!("import-{}", ext.name), &(&ext.name, hashes), &["negatives"], |out| {
            let mut written = Vec::new();
            for (part, src, negs, q) in [
                ("valid", &ext.valid, &valid_negs, &valid_q),
                ("test", &ext.test, &test_negs, &test_q),
            ] {
                let mut set = read_score_set(src, Some(&negs.manifest_sha256))?;
                set.check_queries(q)?;
                set.model_name = ext.name.clone();
                let path = score_paths(out, &ext.name, part);
                write_score_set(&set, &path, &negs.manifest_sha256)?;
                written.extend(with_tsv(&path));
            }
            Ok(written)
        })?;
    }
    let names = config.model_names();
    let score_stages: Vec<String> = config
        .models
        .iter()
        .map(|m| format!("score-{}", m.name))
        .chain(config.external_scores.iter().map(|e| format!("import-{}", e.name)))
        .collect();
    let load_sets = |part: &str, negs: &crate::splits::LoadedNegatives| -> Result<Vec<ScoreSet>> {
        names
            .iter()
            .map(|n| read_score_set(&score_paths(&out, n, part), Some(&negs.manifest_sha256)))
            .collect()
    };
    let valid_sets = load_sets("valid", &valid_negs)?;
    let test_sets = load_sets("test", &test_negs)?;

    let vocab = match &config.dataset.vocab {
        Some(p) => Some(Vocab::load(p)?),
        None => None,
    };
    let vocab_hash = match &config.dataset.vocab {
        Some(p) => Some(io::sha256_file(p)?),
        None => None,
    };
    let mut feature_inputs: Vec<&str> = vec!["split", "negatives"];
    feature_inputs.extend(score_stages.iter().map(String::as_str));
    st.run("features", &(&names, &vocab_hash), &feature_inputs, |out| {
        let ctx = FeatureContext::new(&kg_train, vocab.as_ref(), &names);
        let mut written = Vec::new();
        for (part, q, sets) in [("valid", &valid_q, &valid_sets), ("test", &test_q, &test_sets)] {
            let path = out.join("features").join(format!("{part}.json"));
            write_features(&FeatureMatrix::build(&ctx, q, sets)?, &path)?;
            written.extend(with_tsv(&path));
        }
        Ok(written)
    })?;
    let valid_features = read_features(&out.join("features").join("valid.json"))?;
    let test_features = read_features(&out.join("features").join("test.json"))?;

    let ic = &config.integration;
    let router_kind = ic.router_kind.unwrap_or(RouterKind::Gbdt);
    let integrator_file = match ic.method {
        IntegrationMethod::GlobalAverage => "global.json",
        IntegrationMethod::Router => "router.json",
        IntegrationMethod::WeightedAverage => "weighter.json",
    };
    let ipath = out.join("integrator").join(integrator_file);
    st.run("fit-integrator", &(ic.method, router_kind, ic.weighter_margin, seed), &["features"], |_| {
        // validation queries only
        Ok(match ic.method {
            IntegrationMethod::GlobalAverage => {
                save_global_weights(&fit_global_average(&valid_sets)?, &ipath)?;
                vec![ipath.clone()]
            }
            IntegrationMethod::Router => {
                let grid = ensemble::default_grid(router_kind);
                save_router(&fit_router(&valid_features, &valid_sets, router_kind, &grid, seed)?, &ipath)?;
                [ipath.clone(), ipath.with_extension("f32")].into_iter().filter(|p| p.is_file()).collect()
            }
            IntegrationMethod::WeightedAverage => {
                let grid = ensemble::default_weighter_grid();
                let w = train_weighter(&valid_features, &valid_sets, ic.weighter_margin, &grid, seed)?;
                save_weighter(&w, &ipath)?;
                vec![ipath.clone(), ipath.with_extension("f32")]
            }
        })
    })?;
    let integrator = match ic.method {
        IntegrationMethod::GlobalAverage => Integrator::Global(load_global_weights(&ipath)?),
        IntegrationMethod::Router => Integrator::Router(load_router(&ipath)?),
        IntegrationMethod::WeightedAverage => Integrator::Weighted(load_weighter(&ipath)?),
    };
    let integrator_summary = match &integrator {
        Integrator::Global(g) => serde_json::json!({ "alpha": g.alpha, "valid_mrr": g.valid_mrr }),
        Integrator::Router(r) => serde_json::json!({
            "kind": r.kind,
            "hyper": r.hyper,
            "cv_accuracy": r.cv_accuracy,
            "all_same_model": r.classes[r.all_same_model],
        }),
        Integrator::Weighted(w) => serde_json::json!({ "hyper": w.hyper, "holdout_mrr": w.holdout_mrr }),
    };

    let ens_path = out.join("integrated").join(format!("{ENSEMBLE}.json"));
    let alphas_path = out.join("integrated").join("alphas.tsv");
    st.run("integrate", &ic.method, &["features", "fit-integrator"], |_| {
        let feats = (ic.method != IntegrationMethod::GlobalAverage).then_some(&test_features);
        let res = integrate(&integrator, &test_sets, feats, ENSEMBLE)?;
        write_score_set(&res.scores, &ens_path, &test_negs.manifest_sha256)?;
        io::write_bytes(&alphas_path, format_alphas(&names, &res.scores.keys, &res.alphas).as_bytes())?;
        let mut w = with_tsv(&ens_path);
        w.push(alphas_path.clone());
        Ok(w)
    })?;
    let ensemble = read_score_set(&ens_path, Some(&test_negs.manifest_sha256))?;

    let mut eval_inputs: Vec<&str> = score_stages.iter().map(String::as_str).collect();
    eval_inputs.push("integrate");
    let report_path = out.join("report.json");
    st.run("evaluate", &seed, &eval_inputs, |out| {
        let excluded = test_q.excluded;
        let mut written = Vec::new();
        let mut write_ranks = |name: &str, set: &ScoreSet, r: &[usize]| -> Result<()> {
            let p = out.join("ranks").join(format!("{name}.tsv"));
            io::write_bytes(&p, format_ranks(&set.keys, r).as_bytes())?;
            written.push(p);
            Ok(())
        };
        let mut models = Vec::new();
        let mut per_model = Vec::new();
        for ((name, vs), ts) in names.iter().zip(&valid_sets).zip(&test_sets) {
            let tr = ranks(ts);
            write_ranks(name, ts, &tr)?;
            models.push(ModelReport {
                name: name.clone(),
                valid: Metrics::from_ranks(&ranks(vs), valid_q.excluded),
                test: Metrics::from_ranks(&tr, excluded),
                best_step: best_steps.get(name).copied(),
            });
            per_model.push(tr);
        }
        let er = ranks(&ensemble);
        write_ranks(ENSEMBLE, &ensemble, &er)?;
        let oracle: Vec<usize> = (0..er.len()).map(|q| per_model.iter().map(|r| r[q]).min().unwrap_or(1)).collect();
        write_ranks(ORACLE, &ensemble, &oracle)?;
        let report = Report {
            schema: REPORT_SCHEMA.into(),
            seed,
            split: SplitSizes {
                mode: split.mode,
                train: split.train.len(),
                valid: split.valid.len(),
                test: split.test.len(),
            },
            models,
            method: ic.method,
            integrator: integrator_summary.clone(),
            ensemble: Metrics::from_ranks(&er, excluded),
            oracle: Metrics::from_ranks(&oracle, excluded),
            imputation: imputation.clone(),
        };
        io::write_json(&report_path, &report)?;
        let txt = out.join("report.txt");
        io::write_bytes(&txt, report.to_text().as_bytes())?;
        written.extend([report_path.clone(), txt]);
        Ok(written)
    })?;
    let report: Report = io::read_json(&report_path)?;

    let events: String = st
        .events
        .iter()
        .map(|e| serde_json::to_string(e).expect("json") + "\n")
        .collect();
    io::write_bytes(&out.join("events.jsonl"), events.as_bytes())?;
    Ok(RunOutcome {
        out_dir: out,
        report,
        events: st.events,
    })
}

/// `query_index \t side \t rank`, with a header.
pub fn format_ranks(keys: &[(usize, Side)], ranks: &[usize]) -> String {
    let mut s = String::from("query_index\tside\trank\n");
    for ((qi, side), r) in keys.iter().zip(ranks) {
        let _ = writeln!(s, "{qi}\t{side}\t{r}");
    }
    s
}

pub fn parse_ranks(text: &str, path: &Path) -> Result<Vec<((usize, Side), usize)>> {
    let mut out = Vec::new();
    for (line, cols) in io::tsv_rows(text).skip(1) {
        if cols.len() != 3 {
            return Err(Error::malformed(path, line, format!("expected 3 columns, found {}", cols.len())));
        }
        let qi = cols[0].parse().map_err(|_| Error::malformed(path, line, "bad query index"))?;
        let side = Side::parse(cols[1]).ok_or_else(|| Error::malformed(path, line, "side must be head|tail"))?;
        let r = cols[2].parse().map_err(|_| Error::malformed(path, line, "bad rank"))?;
        out.push(((qi, side), r));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    fn add(&mut self, name: impl Into<String>, outcome: std::result::Result<String, String>) {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "{} checks, {} failed", self.checks.len(), self.failures());
        s
    }
}

fn check_negatives(kg: &KnowledgeGraph, manifest_path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let m: NegativesManifest = io::read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let positives = kg.parse_triples(&dir.join(&m.positives_file))?;
    let cand_path = dir.join(&m.candidates_file);
    let text = io::read_to_string(&cand_path)?;
    let sets = parse_negatives(kg, &text, &cand_path, positives, m.m_eval, m.seed)?;
    let (mut type_errors, mut filter_errors) = (Vec::new(), Vec::new());
    for (i, (t, e)) in sets.positives.iter().zip(&sets.entries).enumerate() {
        for side in [Side::Head, Side::Tail] {
            let want = kg.type_index(side.entity(*t));
            for &c in e.side(side) {
                if kg.type_index(c) != want {
                    type_errors.push(format!("query {i} {side}: `{}`", kg.entity(c)?.key));
                }
                let corrupted: Triple = side.replace(*t, c);
                if kg.contains(&corrupted) {
                    filter_errors.push(format!("query {i} {side}: `{}` is a known positive", kg.entity(c)?.key));
                }
            }
        }
    }
    Ok((type_errors, filter_errors))
}

fn summarize(errors: &[String], ok: String) -> std::result::Result<String, String> {
    match errors {
        [] => Ok(ok),
        [first, ..] => Err(format!("{} violations, first: {first}", errors.len())),
    }
}

/// Re-checks a run directory. Problems become failed checks, not errors.
pub fn validate_artifacts(dir: &Path) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let config = match io::read_json::<RunConfig>(&dir.join("config.json")) {
        Ok(c) => c,
        Err(e) => {
            rep.add("config", Err(e.to_string()));
            return rep;
        }
    };
    rep.add("config", Ok(format!("schema {}", config.schema)));

    let mut stage_errors = Vec::new();
    let mut n_stages = 0;
    if let Ok(entries) = std::fs::read_dir(dir.join("stages")) {
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            n_stages += 1;
            match io::read_json::<StageRecord>(&p) {
                Ok(rec) => {
                    for (rel, expected) in &rec.outputs {
                        let found = io::sha256_file(&dir.join(rel)).unwrap_or_else(|_| "missing".into());
                        if &found != expected {
                            stage_errors.push(format!("{}: {rel} changed", rec.stage));
                        }
                    }
                }
                Err(e) => stage_errors.push(e.to_string()),
            }
        }
    }
    if n_stages == 0 {
        stage_errors.push("no stage records".into());
    }
    rep.add("stage-hashes", summarize(&stage_errors, format!("{n_stages} stages intact")));

    let kg = match load_graph(&config.dataset.triples, &config.dataset.entities) {
        Ok(kg) => kg,
        Err(e) => {
            rep.add("dataset", Err(e.to_string()));
            return rep;
        }
    };

    let mut queries: BTreeMap<&str, QuerySet> = BTreeMap::new();
    for part in ["valid", "test"] {
        let mp = negatives_path(dir, part);
        match check_negatives(&kg, &mp) {
            Ok((ty, filt)) => {
                rep.add(format!("negatives-types-{part}"), summarize(&ty, "every candidate matches the replaced type".into()));
                rep.add(format!("negatives-filtered-{part}"), summarize(&filt, "no candidate is a known positive".into()));
            }
            Err(e) => rep.add(format!("negatives-types-{part}"), Err(e.to_string())),
        }
        match read_negatives(&kg, &mp) {
            Ok(l) => {
                rep.add(format!("negatives-hash-{part}"), Ok("hashes match".into()));
                queries.insert(part, l.sets.queries());
            }
            Err(e) => rep.add(format!("negatives-hash-{part}"), Err(e.to_string())),
        }
    }

    let names = config.model_names();
    let mut test_sets = BTreeMap::new();
    for name in names.iter().map(String::as_str).chain([ENSEMBLE]) {
        for part in ["valid", "test"] {
            if name == ENSEMBLE && part == "valid" {
                continue;
            }
            let path = if name == ENSEMBLE {
                dir.join("integrated").join(format!("{ENSEMBLE}.json"))
            } else {
                score_paths(dir, name, part)
            };
            let outcome = read_score_set(&path, None).and_then(|s| {
                if let Some(q) = queries.get(part) {
                    s.check_queries(q)?;
                }
                if !s.is_finite() {
                    return Err(Error::Invalid("non-finite score".into()));
                }
                Ok(s)
            });
            match outcome {
                Ok(s) => {
                    rep.add(format!("scores-{name}-{part}"), Ok(format!("{} queries aligned", s.len())));
                    if part == "test" {
                        test_sets.insert(name.to_string(), s);
                    }
                }
                Err(e) => rep.add(format!("scores-{name}-{part}"), Err(e.to_string())),
            }
        }
    }

    let alphas = io::read_to_string(&dir.join("integrated").join("alphas.tsv")).map(|text| {
        let mut bad = Vec::new();
        let mut n = 0;
        for (line, cols) in io::tsv_rows(&text).skip(1) {
            n += 1;
            let a: Vec<f64> = cols.iter().skip(2).filter_map(|c| c.parse().ok()).collect();
            let sum: f64 = a.iter().sum();
            if a.len() != names.len() || a.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                bad.push(format!("line {line}: sum {sum}"));
            }
        }
        (bad, n)
    });
    match alphas {
        Ok((bad, n)) => rep.add("alphas-simplex", summarize(&bad, format!("{n} rows on the simplex"))),
        Err(e) => rep.add("alphas-simplex", Err(e.to_string())),
    }

    match io::read_json::<Report>(&dir.join("report.json")) {
        Ok(report) => {
            let mut stored: BTreeMap<String, Metrics> = report.models.iter().map(|m| (m.name.clone(), m.test)).collect();
            stored.insert(ENSEMBLE.into(), report.ensemble);
            let mut errs = Vec::new();
            let mut sampled = 0;
            for (name, set) in &test_sets {
                let rp = dir.join("ranks").join(format!("{name}.tsv"));
                let parsed = io::read_to_string(&rp).and_then(|t| parse_ranks(&t, &rp));
                let rows = match parsed {
                    Ok(r) => r,
                    Err(e) => {
                        errs.push(e.to_string());
                        continue;
                    }
                };
                if rows.len() != set.len() || rows.iter().zip(&set.keys).any(|(r, k)| r.0 != *k) {
                    errs.push(format!("{name}: rank rows do not match the score set"));
                    continue;
                }
                let n = set.len();
                let take = n.div_ceil(100).min(n);
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng::substream(config.seed, &[0x5A3F]));
                for &q in &idx[..take] {
                    sampled += 1;
                    let r = query_rank(&set.queries[q]);
                    if r != rows[q].1 {
                        errs.push(format!("{name}: query {q} recomputes to rank {r}, file says {}", rows[q].1));
                    }
                }
                let rank_list: Vec<usize> = rows.iter().map(|r| r.1).collect();
                let excluded = stored.get(name).map_or(0, |m| m.n_excluded);
                if stored.get(name) != Some(&Metrics::from_ranks(&rank_list, excluded)) {
                    errs.push(format!("{name}: report metrics differ from the rank file"));
                }
            }
            rep.add("rank-recomputation", summarize(&errs, format!("{sampled} sampled queries match")));
            let in_range = |m: &Metrics| [m.mrr, m.hits3, m.hits10].iter().all(|x| (0.0..=1.0).contains(x));
            let ok = report.models.iter().all(|m| in_range(&m.valid) && in_range(&m.test))
                && in_range(&report.ensemble)
                && in_range(&report.oracle);
            rep.add("metrics-range", if ok { Ok("all metrics in [0, 1]".into()) } else { Err("metric outside [0, 1]".into()) });
        }
        Err(e) => rep.add("rank-recomputation", Err(e.to_string())),
    }

    if let Some(p) = &config.text_embeddings {
        let outcome = read_text_embeddings(p).and_then(|t| {
            let missing: Vec<&str> = kg.entities().iter().map(|e| e.key.as_str()).filter(|k| t.get(k).is_none()).collect();
            match missing.first() {
                None => Ok(format!("{} vectors of width {}", t.len(), t.width)),
                Some(k) => Err(Error::MissingVector(k.to_string())),
            }
        });
        rep.add("text-embeddings", outcome.map_err(|e| e.to_string()));
    }
    rep
}

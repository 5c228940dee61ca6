use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kgc_core::ensemble::{
    self, fit_global_average, fit_router, format_alphas, integrate, load_global_weights, load_router, load_weighter,
    save_global_weights, save_router, save_weighter, train_weighter, IntegrationMethod, Integrator, RouterKind,
};
use kgc_core::evaluate::{compute_metrics, description_breakdown, format_table, per_relation_breakdown, Metrics};
use kgc_core::features::{read_features, write_features, FeatureContext, FeatureMatrix, Vocab};
use kgc_core::graph::{load_graph, KnowledgeGraph};
use kgc_core::inductive::{impute_embeddings, random_baseline, read_text_embeddings, seen_unseen};
use kgc_core::io;
use kgc_core::kge::{load_model, save_model, score_queries, train_kge, KgeConfig, ModelKind};
use kgc_core::pipeline::{self, default_out_root, run_pipeline, validate_artifacts, RunConfig, RunOptions};
use kgc_core::scores::{read_score_set, write_score_set, ScoreSet};
use kgc_core::splits::{
    generate_negatives, make_inductive_split, make_transductive_split, read_negatives, read_split, write_split,
    LoadedNegatives,
};

#[derive(Parser)]
#[command(name = "kgc", version, about = "Knowledge graph completion: embeddings, routing, ensembling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Dataset {
    /// Triples TSV: head, relation, tail keys.
    #[arg(long)]
    triples: PathBuf,
    /// Entity TSV: key, type, name, description.
    #[arg(long)]
    entities: PathBuf,
}

impl Dataset {
    fn load(&self) -> Result<KnowledgeGraph> {
        Ok(load_graph(&self.triples, &self.entities)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Transductive,
    Inductive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    LogisticRegression,
    DecisionTree,
    Gbdt,
    Mlp,
}

impl From<Kind> for RouterKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::LogisticRegression => RouterKind::LogisticRegression,
            Kind::DecisionTree => RouterKind::DecisionTree,
            Kind::Gbdt => RouterKind::Gbdt,
            Kind::Mlp => RouterKind::Mlp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    GlobalAverage,
    Router,
    WeightedAverage,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Breakdown {
    Relation,
    Description,
}

#[derive(Subcommand)]
enum Command {
    /// Split the triples into train, valid and test.
    Split {
        #[command(flatten)]
        data: Dataset,
        #[arg(long, value_enum, default_value = "transductive")]
        mode: Mode,
        #[arg(long, default_value_t = 0.1)]
        valid: f64,
        #[arg(long, default_value_t = 0.1)]
        test: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory [default: $KGC_OUT/split].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw the fixed evaluation negatives for a split.
    Negatives {
        #[command(flatten)]
        data: Dataset,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value_t = 500)]
        m_eval: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory [default: $KGC_OUT/negatives].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one embedding model on the training split.
    TrainKge {
        #[command(flatten)]
        data: Dataset,
        #[arg(long)]
        split: PathBuf,
        /// Validation negatives manifest used for checkpoint selection.
        #[arg(long)]
        valid_negatives: Option<PathBuf>,
        #[arg(long, default_value = "complex")]
        model: String,
        #[arg(long, default_value_t = 1000)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 128)]
        negatives: usize,
        #[arg(long, default_value_t = 1e-5)]
        l3: f64,
        #[arg(long, default_value_t = 512)]
        batch_size: usize,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 500)]
        eval_every: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory [default: $KGC_OUT/models/<model>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a negatives file with a trained model.
    Score {
        #[command(flatten)]
        data: Dataset,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        negatives: PathBuf,
        /// Model name recorded in the score set [default: the model kind].
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Score manifest path [default: $KGC_OUT/scores/<name>.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the integrator feature matrix for one negatives file.
    Features {
        #[command(flatten)]
        data: Dataset,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        negatives: PathBuf,
        /// Score manifests, one per model, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<PathBuf>,
        /// Word-piece vocabulary for the tokens-per-word features.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature manifest path [default: $KGC_OUT/features.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit global averaging weights on validation scores.
    FitAverage {
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        negatives: PathBuf,
        #[command(flatten)]
        data: Dataset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// [default: $KGC_OUT/integrator/global.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a per-query router on validation features and scores.
    TrainRouter {
        #[arg(long, value_enum, default_value = "gbdt")]
        kind: Kind,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        negatives: PathBuf,
        #[command(flatten)]
        data: Dataset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print gain importance per feature (gbdt only).
        #[arg(long)]
        importance: bool,
        /// [default: $KGC_OUT/integrator/router.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an input-dependent weighted average on validation data.
    TrainWeighter {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        negatives: PathBuf,
        #[command(flatten)]
        data: Dataset,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// [default: $KGC_OUT/integrator/weighter.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine score sets with a fitted integrator.
    Integrate {
        #[arg(long, value_enum)]
        method: Method,
        /// Fitted global weights, router or weighter.
        #[arg(long)]
        integrator: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        negatives: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        data: Dataset,
        #[arg(long, default_value = "ensemble")]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Score manifest path; alphas go to `<stem>.alphas.tsv` beside it
        /// [default: $KGC_OUT/integrated/<name>.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MRR and Hits@k of score sets on their negatives.
    Evaluate {
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        negatives: PathBuf,
        #[command(flatten)]
        data: Dataset,
        #[arg(long, value_enum, value_delimiter = ',')]
        breakdown: Vec<Breakdown>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the metrics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fill unseen-entity embeddings from the nearest seen entity by text.
    Impute {
        #[command(flatten)]
        data: Dataset,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text_emb: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Redraw unseen rows at random instead.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// [default: $KGC_OUT/models/imputed]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Single-threaded everywhere.
        #[arg(long)]
        deterministic: bool,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check the invariants of a run directory.
    Validate {
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the checks as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn out_or(out: Option<PathBuf>, default: impl AsRef<Path>) -> PathBuf {
    out.unwrap_or_else(|| default_out_root().join(default))
}

fn negatives(kg: &KnowledgeGraph, path: &Path) -> Result<LoadedNegatives> {
    read_negatives(kg, path).with_context(|| format!("reading negatives {}", path.display()))
}

fn score_sets(paths: &[PathBuf], negs: &LoadedNegatives) -> Result<Vec<ScoreSet>> {
    let q = negs.sets.queries();
    paths
        .iter()
        .map(|p| {
            let s = read_score_set(p, Some(&negs.manifest_sha256)).with_context(|| format!("reading {}", p.display()))?;
            s.check_queries(&q)?;
            Ok(s)
        })
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Split {
            data,
            mode,
            valid,
            test,
            seed,
            out,
        } => {
            let kg = data.load()?;
            let split = match mode {
                Mode::Transductive => make_transductive_split(&kg, valid, test, seed)?,
                Mode::Inductive => make_inductive_split(&kg, valid, test, seed)?,
            };
            let out = out_or(out, "split");
            write_split(&kg, &split, &out)?;
            println!(
                "{} train / {} valid / {} test -> {}",
                split.train.len(),
                split.valid.len(),
                split.test.len(),
                out.display()
            );
        }
        Command::Negatives {
            data,
            split,
            m_eval,
            seed,
            out,
        } => {
            let kg = data.load()?;
            let split = read_split(&kg, &split)?;
            let negs = generate_negatives(&kg, &split, m_eval, seed)?;
            let out = out_or(out, "negatives");
            pipeline::write_negative_sets(&kg, &negs, &out)?;
            for (part, set) in [("valid", &negs.valid), ("test", &negs.test)] {
                let q = set.queries();
                println!("{part}: {} queries, {} excluded", q.queries.len(), q.excluded);
            }
            println!("-> {}", out.display());
        }
        Command::TrainKge {
            data,
            split,
            valid_negatives,
            model,
            dim,
            margin,
            lr,
            negatives: n_neg,
            l3,
            batch_size,
            steps,
            eval_every,
            seed,
            out,
        } => {
            let kg = data.load()?;
            let split = read_split(&kg, &split)?;
            let kind: ModelKind = model.parse()?;
            let mut cfg = KgeConfig::new(kind);
            cfg.dim = dim;
            cfg.margin = margin;
            cfg.lr = lr;
            cfg.negatives = n_neg;
            cfg.l3_coeff = l3;
            cfg.batch_size = batch_size;
            cfg.max_steps = steps;
            cfg.eval_every = eval_every;
            cfg.seed = seed;
            let valid = valid_negatives.map(|p| negatives(&kg, &p)).transpose()?;
            let valid_q = valid.as_ref().map(|v| v.sets.queries());
            let train = kg.with_triples(split.train.iter().copied());
            let o = train_kge(&train, valid_q.as_ref(), &cfg)?;
            let out = out_or(out, Path::new("models").join(kind.name()));
            save_model(&o.model, &kg, &out, o.best_valid_mrr, o.best_step)?;
            match o.best_valid_mrr {
                Some(m) => println!("best validation MRR {m:.4} at step {} -> {}", o.best_step, out.display()),
                None => println!("trained {} steps -> {}", o.best_step, out.display()),
            }
        }
        Command::Score {
            data,
            model,
            negatives: np,
            name,
            seed: _,
            out,
        } => {
            let kg = data.load()?;
            let (m, _) = load_model(&model, &kg)?;
            let negs = negatives(&kg, &np)?;
            let name = name.unwrap_or_else(|| m.kind().name().to_string());
            let set = score_queries(&m, &negs.sets.queries(), &name);
            let out = out_or(out, Path::new("scores").join(format!("{name}.json")));
            write_score_set(&set, &out, &negs.manifest_sha256)?;
            println!("{} queries -> {}", set.len(), out.display());
        }
        Command::Features {
            data,
            split,
            negatives: np,
            scores,
            vocab,
            seed: _,
            out,
        } => {
            let kg = data.load()?;
            let split = read_split(&kg, &split)?;
            let negs = negatives(&kg, &np)?;
            let sets = score_sets(&scores, &negs)?;
            let vocab = vocab.map(|p| Vocab::load(&p)).transpose()?;
            let names: Vec<String> = sets.iter().map(|s| s.model_name.clone()).collect();
            let train = kg.with_triples(split.train.iter().copied());
            let ctx = FeatureContext::new(&train, vocab.as_ref(), &names);
            let m = FeatureMatrix::build(&ctx, &negs.sets.queries(), &sets)?;
            let out = out_or(out, "features.json");
            write_features(&m, &out)?;
            println!("{} rows x {} columns -> {}", m.len(), m.schema.width(), out.display());
        }
        Command::FitAverage {
            scores,
            negatives: np,
            data,
            seed: _,
            out,
        } => {
            let kg = data.load()?;
            let sets = score_sets(&scores, &negatives(&kg, &np)?)?;
            let w = fit_global_average(&sets)?;
            let out = out_or(out, "integrator/global.json");
            save_global_weights(&w, &out)?;
            println!("alpha {:?}, validation MRR {:.4} -> {}", w.alpha, w.valid_mrr, out.display());
        }
        Command::TrainRouter {
            kind,
            features,
            scores,
            negatives: np,
            data,
            seed,
            importance,
            out,
        } => {
            let kg = data.load()?;
            let sets = score_sets(&scores, &negatives(&kg, &np)?)?;
            let f = read_features(&features)?;
            let kind = RouterKind::from(kind);
            let r = fit_router(&f, &sets, kind, &ensemble::default_grid(kind), seed)?;
            let out = out_or(out, "integrator/router.json");
            save_router(&r, &out)?;
            println!("{} router, CV accuracy {:.4} -> {}", kind.name(), r.cv_accuracy, out.display());
            if importance {
                for (name, gain) in ensemble::feature_importance(&r)?.iter().filter(|(_, g)| *g > 0.0) {
                    println!("{gain:>14.6}  {name}");
                }
            }
        }
        Command::TrainWeighter {
            features,
            scores,
            negatives: np,
            data,
            margin,
            seed,
            out,
        } => {
            let kg = data.load()?;
            let sets = score_sets(&scores, &negatives(&kg, &np)?)?;
            let f = read_features(&features)?;
            let w = train_weighter(&f, &sets, margin, &ensemble::default_weighter_grid(), seed)?;
            let out = out_or(out, "integrator/weighter.json");
            save_weighter(&w, &out)?;
            println!("hold-out MRR {:.4} -> {}", w.holdout_mrr, out.display());
        }
        Command::Integrate {
            method,
            integrator,
            scores,
            negatives: np,
            features,
            data,
            name,
            seed: _,
            out,
        } => {
            let kg = data.load()?;
            let negs = negatives(&kg, &np)?;
            let sets = score_sets(&scores, &negs)?;
            let integ = match method {
                Method::GlobalAverage => Integrator::Global(load_global_weights(&integrator)?),
                Method::Router => Integrator::Router(load_router(&integrator)?),
                Method::WeightedAverage => Integrator::Weighted(load_weighter(&integrator)?),
            };
            let f = features.map(|p| read_features(&p)).transpose()?;
            if integ.method() != IntegrationMethod::GlobalAverage && f.is_none() {
                bail!("--features is required for this method");
            }
            let res = integrate(&integ, &sets, f.as_ref(), &name)?;
            let out = out_or(out, Path::new("integrated").join(format!("{name}.json")));
            write_score_set(&res.scores, &out, &negs.manifest_sha256)?;
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("ensemble");
            let ap = out.with_file_name(format!("{stem}.alphas.tsv"));
            io::write_bytes(&ap, format_alphas(integ.model_names(), &res.scores.keys, &res.alphas).as_bytes())?;
            let m = compute_metrics(&negs.sets.queries(), &res.scores)?;
            println!("{name}: MRR {:.4} -> {}", m.mrr, out.display());
        }
        Command::Evaluate {
            scores,
            negatives: np,
            data,
            breakdown,
            seed: _,
            json,
        } => {
            let kg = data.load()?;
            let negs = negatives(&kg, &np)?;
            let q = negs.sets.queries();
            let sets = score_sets(&scores, &negs)?;
            let mut rows: Vec<(String, Metrics)> = Vec::new();
            let mut machine = serde_json::Map::new();
            for s in &sets {
                let m = compute_metrics(&q, s)?;
                let mut entry = serde_json::json!({ "overall": m });
                if breakdown.contains(&Breakdown::Relation) {
                    let br = per_relation_breakdown(&q, s)?;
                    let named: serde_json::Map<String, serde_json::Value> = br
                        .iter()
                        .map(|(r, m)| (kg.relations()[r.index()].label.clone(), serde_json::json!(m)))
                        .collect();
                    entry["relation"] = named.into();
                    rows.extend(br.iter().map(|(r, m)| (format!("{} / {}", s.model_name, kg.relations()[r.index()].label), *m)));
                }
                if breakdown.contains(&Breakdown::Description) {
                    let bd = description_breakdown(&q, s, &kg)?;
                    entry["description"] = serde_json::json!(bd);
                    rows.extend(bd.iter().map(|(b, m)| (format!("{} / described: {b:?}", s.model_name).to_lowercase(), *m)));
                }
                rows.push((s.model_name.clone(), m));
                machine.insert(s.model_name.clone(), entry);
            }
            print!("{}", format_table(&rows));
            if let Some(p) = json {
                io::write_json(&p, &machine)?;
            }
        }
        Command::Impute {
            data,
            model,
            text_emb,
            split,
            random,
            seed,
            out,
        } => {
            let kg = data.load()?;
            let split = read_split(&kg, &split)?;
            let (m, manifest) = load_model(&model, &kg)?;
            let (seen, unseen) = seen_unseen(&kg, &split);
            let out = out_or(out, "models/imputed");
            let imputed = if random {
                random_baseline(&m, &unseen, seed)
            } else {
                let text = read_text_embeddings(&text_emb)?;
                let (imputed, report) = impute_embeddings(&m, &kg, &text, &seen, &unseen)?;
                io::write_json(&out.join("imputation.json"), &report)?;
                imputed
            };
            save_model(&imputed, &kg, &out, manifest.best_valid_mrr, manifest.step)?;
            println!("{} unseen entities filled -> {}", unseen.len(), out.display());
        }
        Command::Run {
            config,
            deterministic,
            seed,
            out,
        } => {
            let mut c = RunConfig::load(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(o) = out {
                c.output_dir = Some(o);
            }
            let o = run_pipeline(&c, &RunOptions { deterministic })?;
            print!("{}", o.report.to_text());
            println!("-> {}", o.out_dir.display());
        }
        Command::Validate { dir, seed: _, json } => {
            let v = validate_artifacts(&dir);
            print!("{}", v.to_text());
            if let Some(p) = json {
                io::write_json(&p, &v)?;
            }
            if !v.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

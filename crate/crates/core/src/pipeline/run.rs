//! Per-seed pipeline execution, sweeps and ablations.
//!
//! Stage order per seed: sparsify, propagate, augment, aggregate, embed,
//! virtual edges, PageRank selection, reconfiguration, training, prediction,
//! test accuracy. With `cache_dir` set, the augment, embed and structure
//! stages are stored under `cache_dir/stages/<stage>-<hash>` where the hash
//! covers every input of the stage, so sweeps and ablations reuse them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{Ablation, Classifier, PipelineConfig};
use super::report::{emit_report, write_meta, write_summary_tables, ReportFormat, RunMeta, RunReport, SeedResult};
use super::synth::gen_synthetic;
use super::PipelineError;
use crate::augment::{augment, propagate_texts, read_augmented, write_augmented, AugmentedNodeText, SoftLabel};
use crate::embed::{EmbeddingMatrix, TextEmbedder};
use crate::gnn::{train_dual, train_gcn, train_mlp, Checkpoint, DenseMatrix, Targets, TrainedModel};
use crate::graph::{accuracy, load_dataset, sparsify, SparsityConfig, TextAttributedGraph};
use crate::llm::{descriptions, Gateway};
use crate::structure::AdjacencyStage;

/// The configured dataset: the JSONL file, or the generated synthetic graph.
pub fn load_graph(cfg: &PipelineConfig) -> Result<TextAttributedGraph, PipelineError> {
    match (&cfg.dataset, &cfg.synthetic) {
        (Some(path), _) => Ok(load_dataset(path)?),
        (None, Some(spec)) => Ok(gen_synthetic(spec)?),
        (None, None) => Err(PipelineError::Config("no dataset configured".into())),
    }
}

fn digest(value: &serde_json::Value) -> String {
    let h = Sha256::digest(value.to_string().as_bytes());
    hex::encode(h)[..32].to_string()
}

fn model_name(cfg: &PipelineConfig) -> &'static str {
    match (cfg.classifier, cfg.ablation.struct_learn) {
        (Classifier::Mlp, _) => "mlp",
        (Classifier::Auto, true) => "dual-gnn",
        (Classifier::Auto, false) => "gcn",
    }
}

struct Context<'a> {
    cfg: &'a PipelineConfig,
    graph: TextAttributedGraph,
    graph_hash: String,
    gateway: Gateway,
    embedder: Box<dyn TextEmbedder>,
    description: String,
    stage_dir: Option<PathBuf>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a PipelineConfig) -> Result<Self, PipelineError> {
        let graph = load_graph(cfg)?;
        let mut bytes = Vec::new();
        graph.to_writer(&mut bytes)?;
        let graph_hash = hex::encode(Sha256::digest(&bytes));
        let description = match &cfg.description {
            Some(d) => descriptions::preset(d).map(str::to_string).unwrap_or_else(|| d.clone()),
            None => descriptions::generic(&cfg.dataset_name(), graph.class_names()),
        };
        Ok(Self {
            cfg,
            graph,
            graph_hash,
            gateway: Gateway::from_config(&cfg.provider_config())?,
            embedder: cfg.embedder.build()?,
            description,
            stage_dir: cfg.cache_dir.as_ref().map(|d| d.join("stages")),
        })
    }

    fn provider_id(&self) -> serde_json::Value {
        let p = self.gateway.provider();
        json!([p.kind(), p.model()])
    }

    /// Loads a finished stage from the cache or computes and stores it.
    fn cached<T>(
        &self,
        meta: &mut RunMeta,
        seed: u64,
        stage: &str,
        key: &str,
        load: impl Fn(&Path) -> Result<T, PipelineError>,
        compute: impl FnOnce() -> Result<T, PipelineError>,
        save: impl Fn(&T, &Path) -> Result<(), PipelineError>,
    ) -> Result<T, PipelineError> {
        let Some(root) = &self.stage_dir else {
            return compute();
        };
        let dir = root.join(format!("{stage}-{key}"));
        if dir.join("COMPLETE").is_file() {
            match load(&dir) {
                Ok(v) => {
                    meta.cache_hits.push(format!("{seed}/{stage}"));
                    return Ok(v);
                }
                Err(e) => log::warn!("ignoring unreadable cached stage {}: {e}", dir.display()),
            }
        }
        let value = compute()?;
        let tmp = root.join(format!(".{stage}-{key}.tmp{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        save(&value, &tmp)?;
        fs::write(tmp.join("COMPLETE"), key)?;
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&tmp, &dir)?;
        Ok(value)
    }
}

fn save_augmented(a: &Vec<AugmentedNodeText>, dir: &Path) -> Result<(), PipelineError> {
    Ok(write_augmented(dir.join("augmented.jsonl"), a)?)
}

fn save_embeddings(h: &EmbeddingMatrix, dir: &Path) -> Result<(), PipelineError> {
    Ok(h.save(dir.join("embeddings.bin"))?)
}

fn save_stage(s: &AdjacencyStage, dir: &Path) -> Result<(), PipelineError> {
    Ok(s.save(dir)?)
}

fn write_texts(path: &Path, texts: &[String]) -> Result<(), PipelineError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for t in texts {
        writeln!(w, "{}", serde_json::to_string(t).expect("strings serialize"))?;
    }
    w.flush()?;
    Ok(())
}

fn write_predictions(path: &Path, g: &TextAttributedGraph, preds: &[usize]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Report(e.to_string()))?;
    let err = |e: csv::Error| PipelineError::Report(e.to_string());
    w.write_record(["node", "split", "label", "prediction"]).map_err(err)?;
    for (node, &p) in preds.iter().enumerate() {
        let split = g.splits().split_of(node).map(|s| format!("{s:?}").to_lowercase()).unwrap_or_default();
        let label = g.labels()[node].map(|l| l.to_string()).unwrap_or_default();
        w.write_record([node.to_string(), split, label, p.to_string()]).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn run_seed(ctx: &Context, seed: u64, meta: &mut RunMeta) -> Result<SeedResult, PipelineError> {
    let cfg = ctx.cfg;
    let seed_dir = cfg.output_dir.join(format!("seed-{seed}"));
    fs::create_dir_all(&seed_dir)?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let sparse = sparsify(&ctx.graph, &SparsityConfig::new(cfg.sparsity, seed)?);
    let classes = sparse.class_names().to_vec();
    let base_key = json!({
        "graph": ctx.graph_hash,
        "sparsity": cfg.sparsity,
        "seed": seed,
        "char_budget": cfg.char_budget,
    });
    lap("sparsify", &mut timings);

    let (texts, soft_labels, text_key) = if cfg.ablation.text_aug {
        let key = digest(&json!({
            "stage": "augment",
            "base": base_key,
            "provider": ctx.provider_id(),
            "description": ctx.description,
        }));
        let mut augmented = ctx.cached(
            meta,
            seed,
            "augment",
            &key,
            |dir| Ok(read_augmented(dir.join("augmented.jsonl"), cfg.aggregation, &classes)?),
            || {
                let propagated = propagate_texts(&sparse, cfg.char_budget);
                Ok(augment(&sparse, &propagated, &ctx.gateway, &ctx.description)?)
            },
            save_augmented,
        )?;
        for a in &mut augmented {
            a.reaggregate(cfg.aggregation, &classes);
        }
        save_augmented(&augmented, &seed_dir)?;
        let texts: Vec<String> = augmented.iter().map(|a| a.aggregated.clone()).collect();
        let labels: Vec<SoftLabel> = augmented.iter().map(|a| a.soft_label).collect();
        (texts, labels, json!([key, cfg.aggregation.to_string()]))
    } else {
        let texts = propagate_texts(&sparse, cfg.char_budget);
        (texts, vec![SoftLabel::Unknown; sparse.num_nodes()], json!([base_key, "OT"]))
    };
    write_texts(&seed_dir.join("texts.jsonl"), &texts)?;
    lap("augment", &mut timings);

    let embed_key = digest(&json!({"stage": "embed", "text": text_key, "embedder": ctx.embedder.name()}));
    let h = ctx.cached(
        meta,
        seed,
        "embed",
        &embed_key,
        |dir| Ok(EmbeddingMatrix::load(dir.join("embeddings.bin"))?),
        || {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            Ok(ctx.embedder.embed(&refs)?)
        },
        save_embeddings,
    )?;
    save_embeddings(&h, &seed_dir)?;
    lap("embed", &mut timings);

    let train_size = sparse.splits().train.len();
    let stage = if cfg.ablation.struct_aug {
        let params = cfg.structure_params();
        let key = digest(&json!({
            "stage": "structure",
            "embed": embed_key,
            "params": params,
            "provider": ctx.provider_id(),
            "description": ctx.description,
        }));
        let label_names: Vec<String> = soft_labels.iter().map(|l| l.name(&classes).to_string()).collect();
        ctx.cached(
            meta,
            seed,
            "structure",
            &key,
            |dir| Ok(AdjacencyStage::load(dir)?),
            || {
                Ok(AdjacencyStage::build(
                    sparse.edges(),
                    &h,
                    &soft_labels,
                    &texts,
                    &label_names,
                    train_size,
                    &params,
                    &ctx.gateway,
                    &ctx.description,
                )?)
            },
            save_stage,
        )?
    } else {
        AdjacencyStage::identity(sparse.edges())
    };
    save_stage(&stage, &seed_dir.join("adjacency"))?;
    lap("structure", &mut timings);

    let targets = Targets::from_graph(&sparse);
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let features = DenseMatrix::from_vec(h.rows(), h.dim(), h.into_data());
    let model: TrainedModel = match model_name(cfg) {
        "mlp" => train_mlp(&features, &targets, &train_cfg)?,
        "dual-gnn" => train_dual(&features, &stage.reconfigured, &stage.selected, &targets, &train_cfg)?,
        _ => train_gcn(&features, &stage.reconfigured, &targets, &train_cfg)?,
    };
    lap("train", &mut timings);

    let preds = model.predict(&features);
    let acc = accuracy(&preds, &sparse, &sparse.splits().test)?;
    model.write_history(seed_dir.join("history.csv"))?;
    Checkpoint::from(&model).save(seed_dir.join("model.ckpt"))?;
    write_predictions(&seed_dir.join("predictions.csv"), &sparse, &preds)?;
    lap("evaluate", &mut timings);
    meta.timings.insert(seed, timings);

    let k = stage.selected.len();
    Ok(SeedResult {
        seed,
        accuracy: Some(acc),
        val_accuracy: Some(model.best_val_acc),
        best_epoch: Some(model.best_epoch),
        selected: k,
        judged_pairs: k * k.saturating_sub(1) / 2,
        retries: stage.retries,
        fallbacks: stage.fallbacks,
        error: None,
    })
}

/// Runs every seed of `cfg` and writes `report.json`, `report.csv`,
/// `run_meta.json`, `config.toml` and per-seed artifacts under
/// `cfg.output_dir`. A failing seed is recorded in the report and the
/// remaining seeds still run; setup failures are returned as errors.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml_string())?;

    let mut meta = RunMeta::default();
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        log::info!("seed {seed}: {} at sparsity {}", cfg.ablation.label(), cfg.sparsity);
        match run_seed(&ctx, seed, &mut meta) {
            Ok(r) => seeds.push(r),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                seeds.push(SeedResult::failed(seed, &e));
            }
        }
    }
    meta.llm_calls = ctx.gateway.stats();
    meta.total_seconds = start.elapsed().as_secs_f64();

    let report = RunReport::new(
        cfg.dataset_name(),
        cfg.ablation.label(),
        model_name(cfg).to_string(),
        cfg.sparsity,
        seeds,
        meta,
    );
    emit_report(&report, &cfg.output_dir, ReportFormat::Json)?;
    emit_report(&report, &cfg.output_dir, ReportFormat::Csv)?;
    write_meta(&report.meta, &cfg.output_dir)?;
    Ok(report)
}

/// One [`run_pipeline`] per ratio, each under `output_dir/ratio-<r>`, plus
/// `sweep.csv` (ratio, mean, std) and `sweep_long.csv` (ratio, seed, accuracy).
pub fn run_sweep(cfg: &PipelineConfig, ratios: &[f64]) -> Result<Vec<RunReport>, PipelineError> {
    if ratios.is_empty() {
        return Err(PipelineError::Config("the ratio list is empty".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(PipelineError::Config(format!("ratio {r} outside [0, 1]")));
    }
    let mut reports = Vec::new();
    for &r in ratios {
        let mut c = cfg.clone();
        c.sparsity = r;
        c.output_dir = cfg.output_dir.join(format!("ratio-{r}"));
        reports.push(run_pipeline(&c)?);
    }
    let rows: Vec<(String, &RunReport)> = ratios.iter().map(|r| r.to_string()).zip(&reports).collect();
    write_summary_tables(&cfg.output_dir, "ratio", &rows, "sweep.csv", "sweep_long.csv")?;
    Ok(reports)
}

fn slug(label: &str) -> String {
    label
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

/// Runs each ablation variant under `output_dir/<variant>` and writes
/// `ablation.csv` (variant, mean, std) and `ablation_long.csv`.
pub fn run_ablation(cfg: &PipelineConfig, variants: &[Ablation]) -> Result<Vec<RunReport>, PipelineError> {
    if variants.is_empty() {
        return Err(PipelineError::Config("no ablation variants".into()));
    }
    let mut reports = Vec::new();
    for v in variants {
        let mut c = cfg.clone();
        c.ablation = *v;
        c.output_dir = cfg.output_dir.join(slug(&v.label()));
        reports.push(run_pipeline(&c)?);
    }
    let rows: Vec<(String, &RunReport)> = variants.iter().map(Ablation::label).zip(&reports).collect();
    write_summary_tables(&cfg.output_dir, "variant", &rows, "ablation.csv", "ablation_long.csv")?;
    Ok(reports)
}

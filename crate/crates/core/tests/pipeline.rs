//! End-to-end pipeline behavior on small synthetic graphs.

use std::fs;
use std::path::Path;

use sparse_tag::augment::propagate_texts;
use sparse_tag::embed::{HashEmbedder, TextEmbedder};
use sparse_tag::gnn::{train_gcn, DenseMatrix, Targets};
use sparse_tag::graph::{accuracy, sparsify};
use sparse_tag::llm::ProviderKind;
use sparse_tag::pipeline::{gen_synthetic, run_pipeline, run_sweep, Ablation, Classifier, FailureKind, PipelineConfig, PipelineError, SynthSpec};
use sparse_tag::SparsityConfig;

fn spec() -> SynthSpec {
    SynthSpec {
        nodes: 120,
        classes: 3,
        intra: 0.12,
        inter: 0.01,
        vocab_per_class: 20,
        words_per_node: 12,
        noise_vocab: 40,
        ..SynthSpec::default()
    }
}

fn config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        synthetic: Some(spec()),
        name: Some("tiny".into()),
        sparsity: 0.8,
        output_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    };
    cfg.embedder.dim = 32;
    cfg.train.epochs = 15;
    cfg.train.hidden = 16;
    cfg
}

fn choose2(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

#[test]
fn five_seed_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_pipeline(&config(dir.path())).unwrap();
    assert_eq!(r.seeds.len(), 5);
    assert_eq!(r.seeds.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![42, 43, 44, 45, 46]);
    assert!(!r.partial);
    assert!(r.header.contains("80%"), "{}", r.header);
    assert_eq!(r.model, "dual-gnn");

    let accs: Vec<f64> = r.seeds.iter().map(|s| s.accuracy.unwrap()).collect();
    let mean = accs.iter().sum::<f64>() / 5.0;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 4.0;
    assert!((r.mean.unwrap() - mean).abs() < 1e-15);
    assert!((r.std.unwrap() - var.sqrt()).abs() < 1e-15);

    for f in ["report.json", "report.csv", "run_meta.json", "config.toml"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    for f in ["augmented.jsonl", "texts.jsonl", "embeddings.bin", "embeddings.bin.sha256", "history.csv", "model.ckpt", "predictions.csv", "adjacency/reconfigured.edges"] {
        assert!(dir.path().join("seed-42").join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 + 2);
}

#[test]
fn all_modules_off_is_the_plain_gcn_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.ablation = Ablation::NONE;
    let r = run_pipeline(&cfg).unwrap();
    assert_eq!(r.model, "gcn");
    assert_eq!(r.meta.llm_calls.fresh + r.meta.llm_calls.cached, 0);

    let g = gen_synthetic(&spec()).unwrap();
    for s in &r.seeds {
        let sparse = sparsify(&g, &SparsityConfig::new(0.8, s.seed).unwrap());
        let texts = propagate_texts(&sparse, cfg.char_budget);
        let h = HashEmbedder { dim: 32 }
            .embed(&texts.iter().map(String::as_str).collect::<Vec<_>>())
            .unwrap();
        let h = DenseMatrix::from_vec(h.rows(), h.dim(), h.into_data());
        let mut tc = cfg.train.clone();
        tc.seed = s.seed;
        let model = train_gcn(&h, sparse.edges(), &Targets::from_graph(&sparse), &tc).unwrap();
        let acc = accuracy(&model.predict(&h), &sparse, &sparse.splits().test).unwrap();
        assert_eq!(s.accuracy, Some(acc), "seed {}", s.seed);
    }
}

#[test]
fn reconfiguration_calls_equal_pairs_of_selected_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.seeds = vec![42, 43];
    let r = run_pipeline(&cfg).unwrap();

    let g = gen_synthetic(&spec()).unwrap();
    let k = ((0.1 * g.splits().train.len() as f64).floor() as usize).max(1);
    let mut expected = 0;
    for s in &r.seeds {
        assert_eq!(s.selected, k);
        assert_eq!(s.judged_pairs, choose2(k));
        assert_eq!(s.retries, 0);
        let sparse = sparsify(&g, &SparsityConfig::new(0.8, s.seed).unwrap());
        let with_text = propagate_texts(&sparse, cfg.char_budget).iter().filter(|t| !t.is_empty()).count();
        expected += 3 * with_text + choose2(k);
    }
    assert_eq!(r.meta.llm_calls.fresh, expected);
    assert_eq!(r.meta.llm_calls.cached, 0);
}

#[test]
fn structure_only_makes_only_judge_calls() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.seeds = vec![42];
    cfg.ablation.text_aug = false;
    let r = run_pipeline(&cfg).unwrap();
    assert_eq!(r.meta.llm_calls.fresh, r.seeds[0].judged_pairs);
    assert_eq!(r.variant, "w/o TA");
}

#[test]
fn stage_cache_is_reused_and_output_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir.path().join("a"));
    cfg.seeds = vec![42, 43];
    cfg.cache_dir = Some(dir.path().join("cache"));
    let first = run_pipeline(&cfg).unwrap();
    assert!(first.meta.cache_hits.is_empty());
    assert!(first.meta.llm_calls.fresh > 0);

    cfg.output_dir = dir.path().join("b");
    let second = run_pipeline(&cfg).unwrap();
    assert_eq!(second.meta.llm_calls.fresh, 0);
    assert_eq!(second.meta.cache_hits.len(), 6);
    assert_eq!(first.seeds, second.seeds);
    for f in ["report.json", "report.csv", "seed-43/model.ckpt", "seed-43/adjacency/confidences.csv", "seed-42/embeddings.bin"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }

    // Changing only the classifier keeps every cached stage valid.
    cfg.output_dir = dir.path().join("c");
    cfg.ablation.struct_learn = false;
    let third = run_pipeline(&cfg).unwrap();
    assert_eq!(third.meta.cache_hits.len(), 6);
    assert_eq!(third.model, "gcn");
}

#[test]
fn sweep_rows_and_single_ratio_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.seeds = vec![42, 43];
    cfg.ablation.struct_learn = false;
    cfg.cache_dir = Some(dir.path().join("cache"));

    let reports = run_sweep(&cfg, &[0.2, 0.5, 0.8]).unwrap();
    assert_eq!(reports.len(), 3);
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "ratio,mean,std");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("0.8,"));
    let long = fs::read_to_string(dir.path().join("sweep_long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 3 * 2);

    let sweep0 = run_sweep(&cfg, &[0.0]).unwrap();
    let mut single = cfg.clone();
    single.sparsity = 0.0;
    single.output_dir = dir.path().join("single");
    assert_eq!(sweep0[0].seeds, run_pipeline(&single).unwrap().seeds);

    assert!(matches!(run_sweep(&cfg, &[]), Err(PipelineError::Config(_))));
}

#[test]
fn unreachable_provider_marks_seeds_failed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.seeds = vec![42, 43];
    cfg.llm.kind = ProviderKind::Remote;
    cfg.llm.endpoint = "http://127.0.0.1:9".into();
    cfg.llm.max_retries = 0;
    cfg.llm.timeout_secs = 2.0;
    let r = run_pipeline(&cfg).unwrap();
    assert!(r.partial);
    assert_eq!(r.mean, None);
    assert_eq!(r.first_failure(), Some(FailureKind::Provider));
    assert!(r.header.contains("PARTIAL"));
    assert!(dir.path().join("report.json").is_file());
}

#[test]
fn mlp_classifier_ignores_structure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.seeds = vec![42];
    cfg.classifier = Classifier::Mlp;
    cfg.ablation = Ablation::NONE;
    let mlp = run_pipeline(&cfg).unwrap();
    assert_eq!(mlp.model, "mlp");
    assert!(mlp.mean.unwrap() > 0.0);
}

//! Sparsity sweep of the full pipeline on a small synthetic graph, with
//! stage caching shared across ratios.

use sparse_tag::pipeline::{run_sweep, PipelineConfig, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("sparse-tag-sweep-example");
    let mut cfg = PipelineConfig {
        synthetic: Some(SynthSpec {
            nodes: 160,
            classes: 3,
            intra: 0.1,
            inter: 0.005,
            ..SynthSpec::default()
        }),
        name: Some("synthetic-160".into()),
        seeds: vec![42, 43],
        output_dir: root.join("runs"),
        cache_dir: Some(root.join("cache")),
        ..PipelineConfig::default()
    };
    cfg.embedder.dim = 64;
    cfg.train.epochs = 40;

    for report in run_sweep(&cfg, &[0.2, 0.5, 0.8])? {
        println!("{}", report.header);
    }
    println!("\n{}", std::fs::read_to_string(cfg.output_dir.join("sweep.csv"))?);
    Ok(())
}

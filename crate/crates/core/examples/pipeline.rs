//! End-to-end run from a TOML config with command-line style overrides.
//!
//! cargo run --release --example pipeline [-- configs/fixture.toml key=value ...]

use sparse_tag::pipeline::{run_pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quick.toml").into());
    let overrides: Vec<String> = args.collect();
    let cfg = PipelineConfig::load(&path, &overrides)?;
    let report = run_pipeline(&cfg)?;
    println!("{}", report.header);
    for s in &report.seeds {
        println!(
            "  seed {}: accuracy {:?}, {} judged pairs, {} fallbacks",
            s.seed, s.accuracy, s.judged_pairs, s.fallbacks
        );
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

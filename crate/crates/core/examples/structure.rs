//! Virtual edges, PageRank selection of important nodes and LLM edge
//! reconfiguration with the offline judge.

use sparse_tag::augment::{augment, propagate_texts, DEFAULT_CHAR_BUDGET};
use sparse_tag::embed::{HashEmbedder, TextEmbedder};
use sparse_tag::graph::{load_dataset, sparsify};
use sparse_tag::llm::{descriptions, Gateway};
use sparse_tag::structure::{AdjacencyStage, StructureParams};
use sparse_tag::SparsityConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/synthetic_600.jsonl"))?;
    let sparse = sparsify(&g, &SparsityConfig::new(0.8, 42)?);
    let gateway = Gateway::offline();
    let desc = descriptions::generic("synthetic-600", sparse.class_names());
    let augmented = augment(&sparse, &propagate_texts(&sparse, DEFAULT_CHAR_BUDGET), &gateway, &desc)?;
    let texts: Vec<String> = augmented.iter().map(|a| a.aggregated.clone()).collect();
    let labels: Vec<_> = augmented.iter().map(|a| a.soft_label).collect();
    let names: Vec<String> = labels.iter().map(|l| l.name(sparse.class_names()).to_string()).collect();
    let h = HashEmbedder { dim: 256 }.embed(&texts.iter().map(String::as_str).collect::<Vec<_>>())?;

    let before = gateway.stats().fresh;
    let stage = AdjacencyStage::build(
        sparse.edges(),
        &h,
        &labels,
        &texts,
        &names,
        sparse.splits().train.len(),
        &StructureParams::default(),
        &gateway,
        &desc,
    )?;
    let k = stage.selected.len();
    println!("base edges        {}", stage.base.len());
    println!("with virtual      {}", stage.virtual_edges.len());
    println!("selected nodes    {k} (top by PageRank)");
    println!("judge calls       {} = C({k}, 2)", gateway.stats().fresh - before);
    println!("reconfigured      {}", stage.reconfigured.len());
    println!("retries/fallback  {}/{}", stage.retries, stage.fallbacks);

    let same_class = |e: &sparse_tag::Edge| sparse.labels()[e.u()] == sparse.labels()[e.v()];
    for (name, edges) in [("base", &stage.base), ("reconfigured", &stage.reconfigured)] {
        let inside: Vec<_> = edges
            .iter()
            .filter(|e| stage.selected.contains(&e.u()) && stage.selected.contains(&e.v()))
            .collect();
        let homo = inside.iter().filter(|e| same_class(e)).count();
        println!("{name:>12}: {} edges inside the selected set, {homo} same-class", inside.len());
    }
    Ok(())
}

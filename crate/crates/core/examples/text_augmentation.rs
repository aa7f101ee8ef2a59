//! Text propagation, offline LLM augmentation and the five aggregation modes
//! on a sparsified fixture.

use sparse_tag::augment::{aggregate, augment, propagate_texts, AggregationMode, DEFAULT_CHAR_BUDGET};
use sparse_tag::graph::{load_dataset, sparsify};
use sparse_tag::llm::{descriptions, Gateway};
use sparse_tag::SparsityConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/synthetic_600.jsonl"))?;
    let sparse = sparsify(&g, &SparsityConfig::new(0.8, 42)?);
    let propagated = propagate_texts(&sparse, DEFAULT_CHAR_BUDGET);

    let gateway = Gateway::offline();
    let desc = descriptions::generic("synthetic-600", sparse.class_names());
    let augmented = augment(&sparse, &propagated, &gateway, &desc)?;
    println!("{:?} completions", gateway.stats());

    // A node that lost its own text but has a neighbor with text.
    let node = (0..sparse.num_nodes())
        .find(|&i| sparse.text(i).is_none() && !propagated[i].is_empty())
        .expect("fixture has such a node");
    let a = &augmented[node];
    println!("node {node}, true class {:?}", sparse.labels()[node].map(|c| &sparse.class_names()[c]));
    println!("soft label: {:?} (raw {:?})", a.soft_label.name(sparse.class_names()), a.soft_label_raw);
    for mode in [
        AggregationMode::Ot,
        AggregationMode::OtSummary,
        AggregationMode::OtKeywords,
        AggregationMode::OtSoftLabel,
        AggregationMode::OtAll,
    ] {
        let text = aggregate(a, mode, sparse.class_names());
        println!("\n[{mode}] {} chars\n{}", text.len(), text);
    }

    let labelled = augmented.iter().filter(|a| a.soft_label.class().is_some()).count();
    let correct = augmented
        .iter()
        .zip(sparse.labels())
        .filter(|(a, l)| a.soft_label.class().is_some() && a.soft_label.class() == **l)
        .count();
    println!("\nsoft labels: {labelled} assigned, {correct} correct");
    Ok(())
}

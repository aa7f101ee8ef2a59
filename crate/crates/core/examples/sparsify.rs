//! Simulates missing data: deletes a fraction of node texts and edges.
//!
//! cargo run --example sparsify [-- path/to/dataset.jsonl]

use sparse_tag::graph::{load_dataset, sparsify};
use sparse_tag::SparsityConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/synthetic_600.jsonl").into());
    let g = load_dataset(&path)?;
    println!("{path}: {} nodes, {} edges", g.num_nodes(), g.edges().len());
    println!("{:>6} {:>12} {:>8}", "ratio", "texts kept", "edges");
    for ratio in [0.0, 0.2, 0.5, 0.8, 1.0] {
        let s = sparsify(&g, &SparsityConfig::new(ratio, 42)?);
        let kept = s.texts().iter().filter(|t| t.is_some()).count();
        println!("{ratio:>6} {kept:>12} {:>8}", s.edges().len());
    }

    // Same seed, same deletions.
    let a = sparsify(&g, &SparsityConfig::new(0.5, 7)?);
    let b = sparsify(&g, &SparsityConfig::new(0.5, 7)?);
    assert_eq!(a, b);
    Ok(())
}

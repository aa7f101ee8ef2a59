//! Trains the MLP, plain GCN and dual-GNN classifiers on the same features.

use std::collections::BTreeSet;

use sparse_tag::augment::{propagate_texts, DEFAULT_CHAR_BUDGET};
use sparse_tag::embed::{HashEmbedder, TextEmbedder};
use sparse_tag::gnn::{train_dual, train_gcn, train_mlp, DenseMatrix, Targets, TrainConfig};
use sparse_tag::graph::{accuracy, load_dataset, sparsify};
use sparse_tag::SparsityConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/synthetic_600.jsonl"))?;
    let sparse = sparsify(&g, &SparsityConfig::new(0.5, 42)?);
    let texts = propagate_texts(&sparse, DEFAULT_CHAR_BUDGET);
    let h = HashEmbedder { dim: 128 }.embed(&texts.iter().map(String::as_str).collect::<Vec<_>>())?;
    let h = DenseMatrix::from_vec(h.rows(), h.dim(), h.into_data());
    let targets = Targets::from_graph(&sparse);
    let cfg = TrainConfig { epochs: 60, ..TrainConfig::default() };

    let mlp = train_mlp(&h, &targets, &cfg)?;
    let gcn = train_gcn(&h, sparse.edges(), &targets, &cfg)?;
    let dual = train_dual(&h, sparse.edges(), &BTreeSet::new(), &targets, &cfg)?;
    for (name, m) in [("mlp", &mlp), ("gcn", &gcn), ("dual-gnn", &dual)] {
        let acc = accuracy(&m.predict(&h), &sparse, &sparse.splits().test)?;
        println!(
            "{name:>8}: test {:.3}  best val {:.3} at epoch {}",
            acc, m.best_val_acc, m.best_epoch
        );
    }
    let last = dual.history.last().expect("history");
    println!("dual GNN1 gradient max at last epoch: {:?}", last.gnn1_grad_max);
    Ok(())
}

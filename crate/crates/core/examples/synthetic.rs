//! Generates a planted-partition dataset and summarizes its homophily.

use sparse_tag::pipeline::{gen_synthetic, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        nodes: 200,
        classes: 3,
        intra: 0.08,
        inter: 0.005,
        ..SynthSpec::default()
    };
    let g = gen_synthetic(&spec)?;
    let intra = g
        .edges()
        .iter()
        .filter(|e| g.labels()[e.u()] == g.labels()[e.v()])
        .count();
    println!("{} nodes, {} edges, {intra} within a class", g.num_nodes(), g.edges().len());
    println!("classes: {}", g.class_names().join(", "));
    println!("node 0: {}", g.text(0).unwrap_or(""));
    let s = g.splits();
    println!("split sizes {}/{}/{}", s.train.len(), s.val.len(), s.test.len());

    let out = std::env::temp_dir().join("synthetic_200.jsonl");
    g.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

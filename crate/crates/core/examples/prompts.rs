//! Renders the four prompt templates for one pair of nodes.

use sparse_tag::llm::{descriptions, render_prompt, PromptKind};

fn main() {
    let a = "Evolving neural controllers with genetic search. We study mutation operators.";
    let b = "A population-based optimizer for scheduling problems.";
    let desc = descriptions::preset("cora").expect("built-in preset");
    for kind in PromptKind::ALL {
        let (texts, labels): (Vec<&str>, Vec<&str>) = match kind {
            PromptKind::EdgeJudge => (vec![a, b], vec!["Genetic Algorithms", "Genetic Algorithms"]),
            _ => (vec![a], vec![]),
        };
        let p = render_prompt(kind, desc, &texts, &labels).expect("arity matches");
        println!("--- {kind} ({} chars)\n{}\n", p.full_text.len(), p.question);
    }

    let custom = descriptions::generic("my-corpus", &["Sports".into(), "Politics".into()]);
    println!("generic description: {custom}");
}

//! Text augmentation through an OpenAI-compatible endpoint.
//!
//! SPARSE_TAG_ENDPOINT=http://localhost:8000 SPARSE_TAG_MODEL=... \
//! OPENAI_API_KEY=... cargo run --example remote_provider
//!
//! Responses are cached on disk, so a second run makes no network calls.

use sparse_tag::llm::{CompletionRequest, Gateway, PromptKind, ProviderConfig, ProviderKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Ok(endpoint) = std::env::var("SPARSE_TAG_ENDPOINT") else {
        eprintln!("set SPARSE_TAG_ENDPOINT (and optionally SPARSE_TAG_MODEL, OPENAI_API_KEY) to run this example");
        return Ok(());
    };
    let mut cfg = ProviderConfig {
        kind: ProviderKind::Remote,
        endpoint,
        cache_dir: Some(std::env::temp_dir().join("sparse-tag-llm-cache")),
        ..ProviderConfig::default()
    };
    if let Ok(model) = std::env::var("SPARSE_TAG_MODEL") {
        cfg.model = model;
    }
    let gateway = Gateway::from_config(&cfg)?;
    let classes = vec!["Astronomy".to_string(), "Botany".to_string()];
    let desc = "Here is a short note. It falls into one of two categories: Astronomy, Botany.";
    let text = "Spectra of distant galaxies show a consistent redshift.";
    for kind in [PromptKind::Summary, PromptKind::Keywords, PromptKind::SoftLabel] {
        let req = CompletionRequest::new(kind, desc, &[text], &[], &classes)?;
        println!("{kind}: {}", gateway.complete(&req)?);
    }
    println!("{:?}", gateway.stats());
    Ok(())
}

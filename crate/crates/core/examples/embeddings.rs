//! Hash embeddings: similarity of related texts and the checksummed binary format.

use sparse_tag::embed::{EmbeddingMatrix, HashEmbedder, TextEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let texts = [
        "Spectra of distant galaxies and stellar redshift.",
        "Galaxies, redshift and the spectra of quasars.",
        "Soil nutrients and root growth in wheat.",
        "",
    ];
    let embedder = HashEmbedder { dim: 256 };
    let h = embedder.embed(&texts)?;
    println!("{} ({} x {})", embedder.name(), h.rows(), h.dim());
    for i in 0..texts.len() {
        let row: Vec<String> = (0..texts.len()).map(|j| format!("{:6.3}", h.cosine(i, j))).collect();
        println!("{}", row.join(" "));
    }

    let dir = std::env::temp_dir().join("sparse-tag-embeddings-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("h.bin");
    h.save(&path)?;
    let back = EmbeddingMatrix::load(&path)?;
    assert_eq!(back, h);
    println!("round trip ok: {} (+ .sha256)", path.display());
    Ok(())
}

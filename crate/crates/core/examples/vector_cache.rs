//! Round-trip embeddings through the binary cache file.

use scirag::embed::{read_vector_cache, write_vector_cache, EmbeddingVector};

fn main() -> anyhow::Result<()> {
    let vectors: Vec<EmbeddingVector> = (0..100)
        .map(|i| EmbeddingVector::new("demo-8", (0..8).map(|j| (i * 8 + j) as f32 * 0.01).collect()))
        .collect::<Result<_, _>>()?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("demo.vecs");
    let bytes = write_vector_cache(&path, &vectors)?;
    let back = read_vector_cache(&path)?;
    assert_eq!(back, vectors);
    println!("{} vectors, {bytes} bytes, round trip exact", back.len());

    std::fs::write(&path, b"not a cache")?;
    println!("corrupt file: {}", read_vector_cache(&path).unwrap_err());
    Ok(())
}

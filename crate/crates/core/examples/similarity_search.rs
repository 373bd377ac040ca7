//! Exact top-k search over an in-memory matrix under each measure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scirag::retrieval::{top_k, SimilarityMeasure};
use scirag::store::EmbeddingMatrix;

fn main() -> anyhow::Result<()> {
    let (n, dim) = (5000, 256);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f32> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let matrix = EmbeddingMatrix::new("demo", dim, (0..n as u64).collect(), data)?;

    let query: Vec<f32> = matrix.row(17).iter().map(|x| x + rng.gen_range(-0.05..0.05)).collect();
    for measure in SimilarityMeasure::ALL {
        let hits = top_k(&query, &matrix, 3, measure, None)?;
        let shown: Vec<String> = hits.iter().map(|h| format!("{}:{:.3}", h.row_id, h.score)).collect();
        println!("{:<10} {}", measure.as_str(), shown.join("  "));
    }

    // Exclusion filter: drop the near-duplicate itself.
    let skip = |id: u64| id == 17;
    let hits = top_k(&query, &matrix, 1, SimilarityMeasure::Cosine, Some(&skip))?;
    println!("without row 17: {}", hits[0].row_id);
    Ok(())
}

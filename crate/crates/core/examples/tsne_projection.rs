//! Project three synthetic clusters to 2-D and write an SVG scatter plot.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use scirag::projection::{knn_purity, render_scatter_svg, tsne_project, write_svg, TsneConfig};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..150 {
        let c = i % 3;
        rows.push((0..20).map(|d| if d == c { 8.0 } else { 0.0 } + noise.sample(&mut rng)).collect::<Vec<f64>>());
        labels.push(format!("cluster-{c}"));
    }
    let cfg = TsneConfig { perplexity: 30.0, iterations: 750, kl_every: 250, ..TsneConfig::default() };
    let out = tsne_project(&rows, &cfg)?;
    for (it, kl) in &out.kl_trace {
        println!("iteration {it:>4}: KL {kl:.4}");
    }
    println!("5-NN purity {:.3}", knn_purity(&out.coords, &labels, 5)?);

    let svg = render_scatter_svg(&out.coords, &labels, &["cluster-0".to_string(), "cluster-2".to_string()])?;
    let path = std::env::temp_dir().join("scirag-tsne.svg");
    write_svg(&path, &svg)?;
    println!("wrote {}", path.display());
    Ok(())
}

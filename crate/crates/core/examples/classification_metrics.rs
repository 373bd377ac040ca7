//! Per-category precision, recall and accuracy from a confusion matrix.

use scirag::eval::{confusion_metrics, pearson_r_squared, ConfusionMatrix};

fn main() -> anyhow::Result<()> {
    let cats: Vec<String> = ["colloids", "polymers", "optics"].iter().map(|s| s.to_string()).collect();
    // Rows are true categories, columns predicted.
    let m = ConfusionMatrix::new(cats.clone(), vec![vec![20, 3, 0], vec![4, 15, 1], vec![0, 2, 9]])?;
    println!("{:<10} {:>6} {:>6} {:>6}", "category", "Pr%", "Re%", "Ac%");
    let pct = |v: Option<f64>| v.map_or("undef".to_string(), |v| format!("{:.0}", 100.0 * v));
    for (k, c) in cats.iter().enumerate() {
        let s = confusion_metrics(&m, k);
        println!("{c:<10} {:>6} {:>6} {:>6}", pct(s.precision), pct(s.recall), pct(s.accuracy));
    }

    let ranks = [1.0, 2.0, 3.0, 4.0, 5.0];
    let citations = [40.0, 35.0, 20.0, 22.0, 5.0];
    println!("R^2 rank vs citations: {:.3}", pearson_r_squared(&ranks, &citations).unwrap_or(f64::NAN));
    Ok(())
}

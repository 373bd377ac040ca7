//! Two-dimensional projection of embedding matrices, cluster-quality
//! metrics and SVG/CSV scatter export.

mod scatter;
mod tsne;

use std::collections::HashMap;
use std::hash::Hash;

pub use scatter::{
    render_displacement_svg, render_scatter_svg, select_highlight, write_coords_csv, write_svg, PALETTE,
};
pub use tsne::{joint_affinities, kl_divergence, tsne_project, TsneConfig, TsneOutput};

#[derive(Debug, thiserror::Error)]
pub enum ProjectionError {
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{what} has {got} entries, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), ProjectionError> {
    if got != expected {
        return Err(ProjectionError::Length { what, got, expected });
    }
    Ok(())
}

/// Mean fraction of each point's `k` nearest neighbours (self excluded)
/// that share its label. Ties in distance go to the lower index.
pub fn knn_purity<L: PartialEq>(coords: &[[f64; 2]], labels: &[L], k: usize) -> Result<f64, ProjectionError> {
    check_len("labels", labels.len(), coords.len())?;
    let n = coords.len();
    if k == 0 || n <= k {
        return Err(ProjectionError::Input(format!("k={k} needs more than {n} points")));
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = coords[i][0] - coords[j][0];
                let dy = coords[i][1] - coords[j][1];
                (dx * dx + dy * dy, j)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let same = d[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
        total += same as f64 / k as f64;
    }
    Ok(total / n as f64)
}

/// Fraction of rows whose closest label centroid (Euclidean, in the input
/// space) is the centroid of their own label.
pub fn nearest_centroid_agreement<L: Eq + Hash + Clone>(
    rows: &[Vec<f64>],
    labels: &[L],
) -> Result<f64, ProjectionError> {
    check_len("labels", labels.len(), rows.len())?;
    if rows.is_empty() {
        return Err(ProjectionError::Input("no rows".into()));
    }
    let dim = rows[0].len();
    let mut sums: HashMap<L, (Vec<f64>, usize)> = HashMap::new();
    for (r, l) in rows.iter().zip(labels) {
        check_len("row", r.len(), dim)?;
        let e = sums.entry(l.clone()).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, v) in e.0.iter_mut().zip(r) {
            *s += v;
        }
        e.1 += 1;
    }
    let centroids: Vec<(L, Vec<f64>)> = sums
        .into_iter()
        .map(|(l, (s, c))| (l, s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    let hits = rows
        .iter()
        .zip(labels)
        .filter(|(r, l)| {
            let best = centroids
                .iter()
                .map(|(cl, c)| (c.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), cl))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, cl)| cl);
            best == Some(*l)
        })
        .count();
    Ok(hits as f64 / rows.len() as f64)
}

/// Euclidean length of each row's move between two aligned coordinate sets.
pub fn displacements(from: &[[f64; 2]], to: &[[f64; 2]]) -> Result<Vec<f64>, ProjectionError> {
    check_len("target coordinates", to.len(), from.len())?;
    Ok(from
        .iter()
        .zip(to)
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn purity_on_separated_and_mixed_points() {
        let coords = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [9.0, 9.0], [9.1, 9.0], [9.0, 9.1]];
        assert_eq!(knn_purity(&coords, &[0, 0, 0, 1, 1, 1], 2).unwrap(), 1.0);
        let pairs = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]];
        assert_eq!(knn_purity(&pairs, &[0, 1, 0, 1], 1).unwrap(), 0.0);
        assert!(knn_purity(&coords, &[0, 1], 1).is_err());
        assert!(knn_purity(&coords, &[0; 6], 6).is_err());
    }

    #[test]
    fn centroid_agreement() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![10.0, 0.0], vec![11.0, 0.0]];
        assert_eq!(nearest_centroid_agreement(&rows, &["a", "a", "b", "b"]).unwrap(), 1.0);
        // Centroids at 5 and 6: only the outer rows land on their own.
        assert_eq!(nearest_centroid_agreement(&rows, &["a", "b", "a", "b"]).unwrap(), 0.5);
    }

    #[test]
    fn identical_sets_do_not_move() {
        let c = [[1.0, 2.0], [3.0, -1.0]];
        assert_eq!(displacements(&c, &c).unwrap(), vec![0.0, 0.0]);
        assert_eq!(displacements(&c, &[[1.0, 5.0], [3.0, -1.0]]).unwrap(), vec![3.0, 0.0]);
        assert!(displacements(&c, &c[..1]).is_err());
    }

    proptest! {
        #[test]
        fn purity_is_invariant_under_rigid_motion(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0usize..3), 8..40),
            angle in 0.0f64..std::f64::consts::TAU,
            tx in -100.0f64..100.0,
            ty in -100.0f64..100.0,
        ) {
            let coords: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
            let labels: Vec<usize> = pts.iter().map(|p| p.2).collect();
            let (s, c) = angle.sin_cos();
            let moved: Vec<[f64; 2]> = coords.iter().map(|p| [c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty]).collect();
            let a = knn_purity(&coords, &labels, 3).unwrap();
            let b = knn_purity(&moved, &labels, 3).unwrap();
            // Rounding can reorder near-equal distances; allow one swap.
            prop_assert!((a - b).abs() <= 1.0 / (3.0 * coords.len() as f64) + 1e-12);
        }
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ProjectionError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch: usize,
    pub seed: u64,
    /// Record the KL divergence every this many iterations; 0 disables it.
    pub kl_every: usize,
    /// Adaptive per-coordinate step gains.
    pub use_gains: bool,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 40.0,
            iterations: 10_000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
            kl_every: 0,
            use_gains: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneOutput {
    pub coords: Vec<[f64; 2]>,
    /// Perplexity actually reached by each row's conditional distribution.
    pub row_perplexity: Vec<f64>,
    /// `(iteration, KL(P || Q))` samples, taken after the update of that
    /// iteration with the unexaggerated affinities.
    pub kl_trace: Vec<(usize, f64)>,
}

const MIN_POINTS: usize = 5;
const ENTROPY_TOL: f64 = 1e-9;
const MAX_BISECT: usize = 200;
const JITTER: f64 = 1e-10;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Conditional distribution of one row for precision `beta`. Returns the
/// Shannon entropy in nats. Distances are shifted by their minimum so the
/// exponentials cannot all underflow.
fn conditional_row(dist: &[f64], skip: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (d, o)) in dist.iter().zip(out.iter_mut()).enumerate() {
        if j == skip {
            *o = 0.0;
            continue;
        }
        let e = (-(d - dmin) * beta).exp();
        *o = e;
        sum += e;
        weighted += (d - dmin) * e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Bisect the Gaussian precision of one row until its entropy matches
/// `ln(perplexity)`. Returns the achieved perplexity.
pub(crate) fn solve_row(dist: &[f64], skip: usize, perplexity: f64, out: &mut [f64]) -> f64 {
    let target = perplexity.ln();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let mut h = conditional_row(dist, skip, beta, out);
    for _ in 0..MAX_BISECT {
        if (h - target).abs() < ENTROPY_TOL {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = conditional_row(dist, skip, beta, out);
    }
    h.exp()
}

fn validate(rows: &[Vec<f64>], cfg: &TsneConfig) -> Result<usize, ProjectionError> {
    let n = rows.len();
    if n < MIN_POINTS {
        return Err(ProjectionError::TooFewPoints { got: n, min: MIN_POINTS });
    }
    let dim = rows[0].len();
    if dim < 2 {
        return Err(ProjectionError::Input(format!("input dimension {dim} is below 2")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != dim) {
        return Err(ProjectionError::Input(format!("row {i} has {} values, expected {dim}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ProjectionError::Input("non-finite input value".into()));
    }
    if !(cfg.perplexity > 1.0 && cfg.perplexity < (n - 1) as f64) {
        return Err(ProjectionError::Input(format!(
            "perplexity {} must lie in (1, {})",
            cfg.perplexity,
            n - 1
        )));
    }
    if (n as f64) < 3.0 * cfg.perplexity {
        tracing::warn!(n, perplexity = cfg.perplexity, "fewer than 3x perplexity points");
    }
    Ok(dim)
}

/// Symmetrized joint affinities, row-major N x N, plus per-row perplexity.
pub fn joint_affinities(rows: &[Vec<f64>], perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let cond: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dist: Vec<f64> = rows.iter().map(|r| sq_dist(&rows[i], r)).collect();
            let mut p = vec![0.0; n];
            let perp = solve_row(&dist, i, perplexity, &mut p);
            (p, perp)
        })
        .collect();
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i].0[j] + cond[j].0[i]) / (2.0 * n as f64);
        }
    }
    (joint, cond.into_iter().map(|(_, p)| p).collect())
}

fn kernel(y: &[[f64; 2]], i: usize, j: usize) -> f64 {
    let dx = y[i][0] - y[j][0];
    let dy = y[i][1] - y[j][1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Normalizer of the Student-t affinities. Rows are summed in index order
/// so the result does not depend on the thread count.
fn q_normalizer(y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| j != i).map(|j| kernel(y, i, j)).sum())
        .collect();
    partial.iter().sum()
}

pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let z = q_normalizer(y);
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                let pij = p[i * n + j];
                if j != i && pij > 0.0 {
                    let q = (kernel(y, i, j) / z).max(f64::MIN_POSITIVE);
                    s += pij * (pij / q).ln();
                }
            }
            s
        })
        .collect();
    partial.iter().sum()
}

fn gradient(p: &[f64], y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let z = q_normalizer(y);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0, 0.0];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let num = kernel(y, i, j);
                let mult = (exaggeration * p[i * n + j] - num / z) * num;
                g[0] += 4.0 * mult * (y[i][0] - y[j][0]);
                g[1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
            g
        })
        .collect()
}

/// Exact t-SNE to two dimensions. Memory is O(N^2).
///
/// Inputs containing coincident points get a seeded jitter of 1e-10 so no
/// pair sits at distance zero.
pub fn tsne_project(rows: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneOutput, ProjectionError> {
    let dim = validate(rows, cfg)?;
    let n = rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let has_duplicates = (0..n).any(|i| (i + 1..n).any(|j| rows[i] == rows[j]));
    let jittered: Vec<Vec<f64>>;
    let rows = if has_duplicates {
        let noise = Normal::new(0.0, JITTER).expect("positive sigma");
        jittered = rows
            .iter()
            .map(|r| r.iter().map(|v| v + noise.sample(&mut rng)).collect())
            .collect();
        &jittered
    } else {
        rows
    };
    debug_assert_eq!(rows[0].len(), dim);

    let (p, row_perplexity) = joint_affinities(rows, cfg.perplexity);

    let init = Normal::new(0.0, 1e-4).expect("positive sigma");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::new();

    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if it < cfg.momentum_switch { cfg.initial_momentum } else { cfg.final_momentum };
        let grad = gradient(&p, &y, exaggeration);
        for i in 0..n {
            for d in 0..2 {
                if cfg.use_gains {
                    let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                    gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                    gains[i][d] = gains[i][d].max(0.01);
                }
                update[i][d] = momentum * update[i][d] - cfg.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = [
            y.iter().map(|v| v[0]).sum::<f64>() / n as f64,
            y.iter().map(|v| v[1]).sum::<f64>() / n as f64,
        ];
        for v in y.iter_mut() {
            v[0] -= mean[0];
            v[1] -= mean[1];
        }
        if cfg.kl_every > 0 && ((it + 1) % cfg.kl_every == 0 || it + 1 == cfg.iterations) {
            kl_trace.push((it + 1, kl_divergence(&p, &y)));
        }
    }

    Ok(TsneOutput {
        coords: y,
        row_perplexity,
        kl_trace,
    })
}

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::ingest::DocId;

/// Fewest pairs that can touch every document.
pub fn min_pairs(n_docs: usize) -> usize {
    n_docs.div_ceil(2)
}

/// Number of distinct unordered pairs.
pub fn max_pairs(n_docs: usize) -> usize {
    n_docs * n_docs.saturating_sub(1) / 2
}

/// Draw `n_pairs` distinct unordered pairs such that every document takes
/// part in at least one. Presentation order within a pair is random.
pub fn sample_pairs(doc_ids: &[DocId], n_pairs: usize, seed: u64) -> Result<Vec<(DocId, DocId)>, EvalError> {
    let mut docs: Vec<DocId> = doc_ids.to_vec();
    docs.sort();
    docs.dedup();
    let n = docs.len();
    if n < 2 {
        return Err(EvalError::Parameter(format!("need at least 2 documents, got {n}")));
    }
    if n_pairs < min_pairs(n) {
        return Err(EvalError::Parameter(format!(
            "{n_pairs} pairs cannot cover {n} documents; need at least {}",
            min_pairs(n)
        )));
    }
    if n_pairs > max_pairs(n) {
        return Err(EvalError::Parameter(format!(
            "{n_pairs} pairs requested but only {} distinct pairs exist",
            max_pairs(n)
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(n_pairs);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n_pairs);
    let add = |a: usize, b: usize, pairs: &mut Vec<(usize, usize)>, seen: &mut HashSet<(usize, usize)>| {
        let key = (a.min(b), a.max(b));
        if a != b && seen.insert(key) {
            pairs.push((a, b));
            true
        } else {
            false
        }
    };

    for c in order.chunks(2) {
        match *c {
            [a, b] => {
                add(a, b, &mut pairs, &mut seen);
            }
            [last] => loop {
                let other = order[rng.gen_range(0..n)];
                if add(last, other, &mut pairs, &mut seen) {
                    break;
                }
            },
            _ => unreachable!(),
        }
    }

    // Rejection sampling is fine while the graph is sparse; switch to
    // enumerating the remaining pairs when it is not.
    if n_pairs - pairs.len() > max_pairs(n) / 2 {
        let mut rest: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|p| !seen.contains(p))
            .collect();
        rest.shuffle(&mut rng);
        for (a, b) in rest.into_iter().take(n_pairs - pairs.len()) {
            add(a, b, &mut pairs, &mut seen);
        }
    } else {
        while pairs.len() < n_pairs {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            add(a, b, &mut pairs, &mut seen);
        }
    }

    pairs.shuffle(&mut rng);
    Ok(pairs
        .into_iter()
        .map(|(a, b)| {
            let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            (docs[a].clone(), docs[b].clone())
        })
        .collect())
}

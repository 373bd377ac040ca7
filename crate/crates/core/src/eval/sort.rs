use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use super::{ComparisonRecord, EvalError};
use crate::ingest::DocId;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SortConfig {
    pub max_passes: usize,
    pub seed: u64,
    /// Equal-count swaps accepted per pass. `None` means one per document.
    pub plateau_budget: Option<usize>,
}

impl Default for SortConfig {
    fn default() -> Self {
        SortConfig {
            max_passes: 1000,
            seed: 0,
            plateau_budget: None,
        }
    }
}

/// Result of sorting. `ordering` runs from lowest to highest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingState {
    pub ordering: Vec<DocId>,
    pub misordered_count: usize,
    pub initial_misordered: usize,
    pub passes: usize,
    pub records: Vec<ComparisonRecord>,
}

impl RankingState {
    pub fn misordered_fraction(&self) -> Option<f64> {
        (!self.records.is_empty()).then(|| self.misordered_count as f64 / self.records.len() as f64)
    }

    pub fn position(&self, doc: &DocId) -> Option<usize> {
        self.ordering.iter().position(|d| d == doc)
    }
}

/// Records whose winner sits below its loser in `ordering`.
pub fn count_misordered(ordering: &[DocId], records: &[ComparisonRecord]) -> usize {
    let pos: HashMap<&DocId, usize> = ordering.iter().enumerate().map(|(i, d)| (d, i)).collect();
    records
        .iter()
        .filter(|r| match (pos.get(&r.winner), pos.get(r.loser())) {
            (Some(w), Some(l)) => w < l,
            _ => false,
        })
        .count()
}

/// Wins and appearances per document.
pub fn win_ratios(records: &[ComparisonRecord]) -> HashMap<DocId, (usize, usize)> {
    let mut out: HashMap<DocId, (usize, usize)> = HashMap::new();
    for r in records {
        out.entry(r.winner.clone()).or_default().0 += 1;
        out.entry(r.doc_a.clone()).or_default().1 += 1;
        out.entry(r.doc_b.clone()).or_default().1 += 1;
    }
    out
}

struct Sorter {
    /// (winner, loser) per record, as document indices.
    edges: Vec<(usize, usize)>,
    incident: Vec<Vec<usize>>,
    /// Records per ordered (winner, loser) pair.
    wins: HashMap<(usize, usize), i64>,
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl Sorter {
    fn misordered(&self, (w, l): (usize, usize)) -> bool {
        self.pos[w] < self.pos[l]
    }

    fn total(&self) -> usize {
        self.edges.iter().filter(|&&e| self.misordered(e)).count()
    }

    /// Change in misordered count from swapping positions `i` and `i + 1`.
    fn adjacent_delta(&self, i: usize) -> Option<i64> {
        let (x, y) = (self.order[i], self.order[i + 1]);
        let y_over_x = self.wins.get(&(y, x)).copied().unwrap_or(0);
        let x_over_y = self.wins.get(&(x, y)).copied().unwrap_or(0);
        (y_over_x + x_over_y > 0).then_some(y_over_x - x_over_y)
    }

    /// Change in misordered count from exchanging documents `a` and `b`.
    fn exchange_delta(&self, a: usize, b: usize) -> i64 {
        let swapped = |d: usize| -> usize {
            if d == a {
                self.pos[b]
            } else if d == b {
                self.pos[a]
            } else {
                self.pos[d]
            }
        };
        let mut delta = 0;
        let mut visit = |e: usize| {
            let (w, l) = self.edges[e];
            let before = self.pos[w] < self.pos[l];
            let after = swapped(w) < swapped(l);
            delta += after as i64 - before as i64;
        };
        for &e in &self.incident[a] {
            visit(e);
        }
        for &e in &self.incident[b] {
            let (w, l) = self.edges[e];
            if w != a && l != a {
                visit(e);
            }
        }
        delta
    }

    /// Best position for document `x` with everything else kept in order,
    /// and the resulting change in count. Ties prefer the shorter move.
    fn best_insertion(&self, x: usize) -> (usize, i64) {
        // Net change from moving `x` up past each neighbour.
        let mut net: HashMap<usize, i64> = HashMap::new();
        for &e in &self.incident[x] {
            let (w, l) = self.edges[e];
            if w == x {
                *net.entry(l).or_default() -= 1;
            } else {
                *net.entry(w).or_default() += 1;
            }
        }
        let p = self.pos[x];
        let mut best = (p, 0i64);
        let mut delta = 0;
        for q in p + 1..self.order.len() {
            delta += net.get(&self.order[q]).copied().unwrap_or(0);
            if delta < best.1 {
                best = (q, delta);
            }
        }
        delta = 0;
        for q in (0..p).rev() {
            delta -= net.get(&self.order[q]).copied().unwrap_or(0);
            if delta < best.1 || (delta == best.1 && best.0 != p && p - q < best.0.abs_diff(p)) {
                best = (q, delta);
            }
        }
        best
    }

    fn move_to(&mut self, x: usize, q: usize) {
        let p = self.pos[x];
        let item = self.order.remove(p);
        self.order.insert(q, item);
        for i in p.min(q)..=p.max(q) {
            self.pos[self.order[i]] = i;
        }
    }

    fn exchange(&mut self, a: usize, b: usize) {
        let (pa, pb) = (self.pos[a], self.pos[b]);
        self.order.swap(pa, pb);
        self.pos[a] = pb;
        self.pos[b] = pa;
    }
}

/// Strongly connected components of the win graph, losers first, with a
/// seeded shuffle inside each component. Records between components are
/// all satisfied by this layout and no optimum is excluded by it.
fn initial_layout(n: usize, edges: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    for &(w, l) in edges {
        g.update_edge(NodeIndex::new(w), NodeIndex::new(l), ());
    }
    // Components come back in reverse topological order, sinks first.
    let mut order = Vec::with_capacity(n);
    for scc in tarjan_scc(&g) {
        let mut members: Vec<usize> = scc.into_iter().map(|v| v.index()).collect();
        members.sort_unstable();
        members.shuffle(rng);
        order.extend(members);
    }
    order
}

/// Order documents so that as few comparisons as possible are violated.
///
/// Starts from [`initial_layout`]. Each pass first sweeps adjacent
/// positions in shuffled order, then sweeps currently violated records in
/// shuffled order and tries exchanging their two documents, then moves
/// each document to its best position if that helps. Improving moves
/// are always taken. Moves that leave the count unchanged are taken until
/// the pass's plateau budget is spent. Sorting stops after a pass without
/// any improving move or after `max_passes`.
pub fn sort_by_comparisons(
    records: &[ComparisonRecord],
    doc_ids: &[DocId],
    cfg: &SortConfig,
) -> Result<RankingState, EvalError> {
    let mut docs: Vec<DocId> = doc_ids.to_vec();
    docs.sort();
    docs.dedup();
    let index: HashMap<&DocId, usize> = docs.iter().enumerate().map(|(i, d)| (d, i)).collect();
    let n = docs.len();

    let mut edges = Vec::with_capacity(records.len());
    let mut incident = vec![Vec::new(); n];
    let mut wins: HashMap<(usize, usize), i64> = HashMap::new();
    for r in records {
        let w = *index.get(&r.winner).ok_or_else(|| EvalError::UnknownDocument(r.winner.clone()))?;
        let l = *index.get(r.loser()).ok_or_else(|| EvalError::UnknownDocument(r.loser().clone()))?;
        let e = edges.len();
        edges.push((w, l));
        incident[w].push(e);
        incident[l].push(e);
        *wins.entry((w, l)).or_default() += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let order = initial_layout(n, &edges, &mut rng);
    let mut pos = vec![0; n];
    for (i, &d) in order.iter().enumerate() {
        pos[d] = i;
    }
    let mut s = Sorter {
        edges,
        incident,
        wins,
        order,
        pos,
    };

    let initial = s.total();
    let mut current = initial as i64;
    let plateau_budget = cfg.plateau_budget.unwrap_or(n);
    let mut passes = 0;
    while passes < cfg.max_passes && current > 0 {
        passes += 1;
        let mut improved = 0usize;
        let mut plateau = 0usize;
        let mut accept = |delta: i64, plateau: &mut usize| -> bool {
            if delta < 0 {
                improved += 1;
                true
            } else if delta == 0 && *plateau < plateau_budget {
                *plateau += 1;
                true
            } else {
                false
            }
        };

        let mut slots: Vec<usize> = (0..n.saturating_sub(1)).collect();
        slots.shuffle(&mut rng);
        for i in slots {
            if let Some(delta) = s.adjacent_delta(i) {
                if accept(delta, &mut plateau) {
                    let (a, b) = (s.order[i], s.order[i + 1]);
                    s.exchange(a, b);
                    current += delta;
                }
            }
        }

        let mut rec: Vec<usize> = (0..s.edges.len()).collect();
        rec.shuffle(&mut rng);
        for e in rec {
            let (w, l) = s.edges[e];
            if !s.misordered((w, l)) {
                continue;
            }
            let delta = s.exchange_delta(w, l);
            if accept(delta, &mut plateau) {
                s.exchange(w, l);
                current += delta;
            }
        }

        let mut movers: Vec<usize> = (0..n).collect();
        movers.shuffle(&mut rng);
        for x in movers {
            let (q, delta) = s.best_insertion(x);
            if delta < 0 {
                improved += 1;
                s.move_to(x, q);
                current += delta;
            }
        }

        debug_assert_eq!(current, s.total() as i64);
        if improved == 0 {
            break;
        }
    }

    Ok(RankingState {
        ordering: s.order.iter().map(|&i| docs[i].clone()).collect(),
        misordered_count: current as usize,
        initial_misordered: initial,
        passes,
        records: records.to_vec(),
    })
}

use std::collections::{BTreeSet, HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use super::ComparisonRecord;
use crate::ingest::DocId;

/// Directed cycles in the winner-to-loser graph, one per strongly connected
/// component that has any. Each cycle starts at its smallest id and does
/// not repeat the first node at the end. Empty exactly when the records are
/// acyclic.
pub fn find_cycles(records: &[ComparisonRecord]) -> Vec<Vec<DocId>> {
    let docs: BTreeSet<&DocId> = records.iter().flat_map(|r| [&r.doc_a, &r.doc_b]).collect();
    let mut graph: DiGraph<&DocId, ()> = DiGraph::new();
    let nodes: HashMap<&DocId, NodeIndex> = docs.iter().map(|d| (*d, graph.add_node(*d))).collect();
    for r in records {
        let (w, l) = (nodes[&r.winner], nodes[r.loser()]);
        if graph.find_edge(w, l).is_none() {
            graph.add_edge(w, l, ());
        }
    }

    let mut cycles: Vec<Vec<DocId>> = tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1)
        .map(|scc| {
            let members: BTreeSet<NodeIndex> = scc.iter().copied().collect();
            let start = *scc.iter().min_by_key(|n| graph[**n]).unwrap();
            shortest_cycle_through(&graph, start, &members)
                .into_iter()
                .map(|n| graph[n].clone())
                .collect()
        })
        .collect();
    cycles.sort();
    cycles
}

/// Breadth-first search from `start` back to itself inside one component.
fn shortest_cycle_through(
    graph: &DiGraph<&DocId, ()>,
    start: NodeIndex,
    members: &BTreeSet<NodeIndex>,
) -> Vec<NodeIndex> {
    let mut parent: HashMap<NodeIndex, NodeIndex> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        let mut next: Vec<NodeIndex> = graph.neighbors(n).filter(|m| members.contains(m)).collect();
        next.sort_by_key(|m| graph[*m]);
        for m in next {
            if m == start {
                let mut path = vec![n];
                let mut cur = n;
                while cur != start {
                    cur = parent[&cur];
                    path.push(cur);
                }
                path.reverse();
                return path;
            }
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(m) {
                e.insert(n);
                queue.push_back(m);
            }
        }
    }
    unreachable!("every node of a non-trivial component lies on a cycle")
}

//! Heterogeneous typed graphs and meta-path-based association networks.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{GrafError, Result};
use crate::parallel::par_map_indexed;
use crate::sparse::ArcSet;

/// Node-type counts plus typed edge lists between node types.
#[derive(Debug, Clone, Default)]
pub struct TypedGraph {
    types: BTreeMap<String, usize>,
    edges: BTreeMap<(String, String), Vec<(u32, u32)>>,
}

impl TypedGraph {
    pub fn new() -> Self {
        TypedGraph::default()
    }

    pub fn add_type(&mut self, name: impl Into<String>, count: usize) {
        self.types.insert(name.into(), count);
    }

    pub fn type_count(&self, name: &str) -> Option<usize> {
        self.types.get(name).copied()
    }

    /// Register the edge list for a (src type, dst type) relation. Endpoints
    /// are validated against the registered type counts.
    pub fn add_relation(&mut self, src: &str, dst: &str, pairs: Vec<(u32, u32)>) -> Result<()> {
        let ns = self
            .types
            .get(src)
            .copied()
            .ok_or_else(|| GrafError::Composition(format!("unknown node type {src}")))?;
        let nd = self
            .types
            .get(dst)
            .copied()
            .ok_or_else(|| GrafError::Composition(format!("unknown node type {dst}")))?;
        for &(a, b) in &pairs {
            if a as usize >= ns || b as usize >= nd {
                return Err(GrafError::Index(format!(
                    "edge ({a}, {b}) out of range for {src}({ns}) -> {dst}({nd})"
                )));
            }
        }
        let key = (src.to_string(), dst.to_string());
        if self.edges.contains_key(&key) {
            return Err(GrafError::Data(format!("duplicate relation {src}-{dst}")));
        }
        self.edges.insert(key, pairs);
        Ok(())
    }

    /// Adjacency lists for one hop, using the stored relation in either
    /// direction.
    fn hop_adjacency(&self, from: &str, to: &str) -> Result<Vec<Vec<u32>>> {
        let n_from = self
            .types
            .get(from)
            .copied()
            .ok_or_else(|| GrafError::Composition(format!("unknown node type {from}")))?;
        let mut adj = vec![Vec::new(); n_from];
        if let Some(pairs) = self.edges.get(&(from.to_string(), to.to_string())) {
            for &(a, b) in pairs {
                adj[a as usize].push(b);
            }
        } else if let Some(pairs) = self.edges.get(&(to.to_string(), from.to_string())) {
            for &(b, a) in pairs {
                adj[a as usize].push(b);
            }
        } else {
            return Err(GrafError::Composition(format!(
                "no relation between {from} and {to}"
            )));
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(adj)
    }
}

/// One association: a symmetric, self-looped, binary network over the anchor
/// node type, stored as directed arcs.
#[derive(Debug, Clone)]
pub struct AssociationNetwork {
    pub name: String,
    pub n: usize,
    pub arcs: Arc<ArcSet>,
}

impl AssociationNetwork {
    /// Build from undirected pairs: both directions are inserted and every
    /// node receives its self-loop.
    pub fn from_undirected(
        name: impl Into<String>,
        n: usize,
        pairs: &[(u32, u32)],
    ) -> Result<Self> {
        let mut directed = Vec::with_capacity(pairs.len() * 2 + n);
        for &(a, b) in pairs {
            directed.push((a, b));
            directed.push((b, a));
        }
        for i in 0..n as u32 {
            directed.push((i, i));
        }
        let arcs = Arc::new(ArcSet::from_pairs(n, &directed)?);
        Ok(AssociationNetwork {
            name: name.into(),
            n,
            arcs: Arc::clone(&arcs),
        })
    }

    /// Neighbors of `i`, self-loop included.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.arcs.cols()[self.arcs.row_range(i)]
    }

    /// Directed arc count (each undirected pair twice, self-loops once).
    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn undirected_pair_count(&self) -> usize {
        self.arcs.undirected_pair_count()
    }
}

/// Connect anchor nodes joined by at least one walk along the type sequence.
/// The result is binarized, symmetrized, and self-looped for every anchor
/// node.
pub fn compose_meta_path(graph: &TypedGraph, path: &[String]) -> Result<AssociationNetwork> {
    if path.len() < 2 {
        return Err(GrafError::Composition(format!(
            "meta-path {path:?} too short"
        )));
    }
    if path.first() != path.last() {
        return Err(GrafError::Composition(format!(
            "meta-path {path:?} must start and end at the anchor type"
        )));
    }
    let anchor = &path[0];
    let n = graph
        .type_count(anchor)
        .ok_or_else(|| GrafError::Composition(format!("unknown anchor type {anchor}")))?;

    let mut hops = Vec::with_capacity(path.len() - 1);
    for step in path.windows(2) {
        hops.push(graph.hop_adjacency(&step[0], &step[1])?);
    }

    // Per anchor node, walk the hop sequence keeping the reachable frontier.
    let per_node: Vec<Vec<u32>> = par_map_indexed(n, |start| {
        let mut frontier = vec![start as u32];
        for hop in &hops {
            let mut next: Vec<u32> = Vec::new();
            for &v in &frontier {
                next.extend_from_slice(&hop[v as usize]);
            }
            next.sort_unstable();
            next.dedup();
            frontier = next;
        }
        frontier
    });

    let mut pairs = Vec::new();
    for (i, reach) in per_node.iter().enumerate() {
        for &j in reach {
            if j as usize != i {
                pairs.push((i as u32, j));
            }
        }
    }
    let name: String = path.join("");
    AssociationNetwork::from_undirected(name, n, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_author_graph() -> TypedGraph {
        let mut g = TypedGraph::new();
        g.add_type("P", 3);
        g.add_type("A", 1);
        // p1, p2 written by a1; p3 isolated.
        g.add_relation("P", "A", vec![(0, 0), (1, 0)]).unwrap();
        g
    }

    #[test]
    fn pap_hand_composition() {
        let g = paper_author_graph();
        let net = compose_meta_path(&g, &["P".into(), "A".into(), "P".into()]).unwrap();
        let mut arcs: Vec<(u32, u32)> = net.arcs.iter().collect();
        arcs.sort_unstable();
        assert_eq!(arcs, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)]);
        assert_eq!(net.name, "PAP");
    }

    #[test]
    fn empty_relation_gives_self_loops_only() {
        let mut g = TypedGraph::new();
        g.add_type("P", 4);
        g.add_type("A", 2);
        g.add_relation("P", "A", vec![]).unwrap();
        let net = compose_meta_path(&g, &["P".into(), "A".into(), "P".into()]).unwrap();
        assert_eq!(net.arc_count(), 4);
        assert!(net.arcs.has_full_self_loop_diagonal());
    }

    #[test]
    fn composition_uses_reversed_relation() {
        let mut g = TypedGraph::new();
        g.add_type("P", 2);
        g.add_type("A", 1);
        // Stored as A -> P; composing P-A-P must still work.
        g.add_relation("A", "P", vec![(0, 0), (0, 1)]).unwrap();
        let net = compose_meta_path(&g, &["P".into(), "A".into(), "P".into()]).unwrap();
        assert!(net.arcs.find(0, 1).is_some());
        assert!(net.arcs.find(1, 0).is_some());
    }

    #[test]
    fn unknown_type_pair_is_a_composition_error() {
        let g = paper_author_graph();
        let err = compose_meta_path(&g, &["P".into(), "S".into(), "P".into()]);
        assert!(matches!(err, Err(GrafError::Composition(_))));
    }

    #[test]
    fn meta_path_must_anchor_both_ends() {
        let g = paper_author_graph();
        assert!(compose_meta_path(&g, &["P".into(), "A".into()]).is_err());
    }

    #[test]
    fn association_network_is_symmetric_with_self_loops() {
        let net = AssociationNetwork::from_undirected("T", 5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        assert!(net.arcs.is_symmetric());
        assert!(net.arcs.has_full_self_loop_diagonal());
        assert_eq!(net.arc_count(), 5 + 6);
        assert_eq!(net.undirected_pair_count(), 5 + 3);
        assert_eq!(net.neighbors(1), &[0, 1, 2]);
    }
}

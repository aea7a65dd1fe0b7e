//! Fuse attention-weighted association networks into one directed graph.
//!
//! Every arc that occurs in any association receives a score; the three
//! variants combine node-level and association-level attention differently:
//!
//! - full: sum of beta * alpha over the associations containing the arc,
//! - node_only: sum of alpha alone (every association weighted equally),
//! - assoc_only: mean of beta over the associations containing the arc.
//!
//! Optional elimination keeps each non-self-loop arc with probability
//! score / max_score; surviving arcs keep their original scores and
//! self-loops always survive.

use std::path::Path;
use std::sync::Arc;

use serde_json::json;

use crate::attention::AttentionBundle;
use crate::error::{GrafError, Result};
use crate::graph::AssociationNetwork;
use crate::rng::rng_from;
use crate::sparse::ArcSet;

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreVariant {
    Full,
    NodeOnly,
    AssocOnly,
}

impl ScoreVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreVariant::Full => "full",
            ScoreVariant::NodeOnly => "node_only",
            ScoreVariant::AssocOnly => "assoc_only",
        }
    }
}

/// Directed weighted graph produced by fusion.
#[derive(Debug, Clone)]
pub struct FusedGraph {
    pub n: usize,
    pub arcs: Arc<ArcSet>,
    pub scores: Vec<f64>,
    pub variant: ScoreVariant,
    pub eliminated: bool,
    pub elimination_seed: Option<u64>,
}

impl FusedGraph {
    pub fn max_score(&self) -> f64 {
        self.scores.iter().cloned().fold(0.0, f64::max)
    }

    pub fn score_of(&self, row: u32, col: u32) -> Option<f64> {
        self.arcs.find(row, col).map(|e| self.scores[e])
    }

    /// `src<TAB>dst<TAB>score` with 9 significant digits.
    pub fn write_edges(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (e, (i, j)) in self.arcs.iter().enumerate() {
            out.push_str(&format!("{i}\t{j}\t{:.8e}\n", self.scores[e]));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        let meta = json!({
            "variant": self.variant.as_str(),
            "eliminated": self.eliminated,
            "seed": self.elimination_seed,
            "max_score": self.max_score(),
            "nodes": self.n,
            "arcs": self.arcs.len(),
        });
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Pair each network with the bundle entry of the same name, verifying the
/// bundle covers every arc.
fn aligned_indices(bundle: &AttentionBundle, nets: &[AssociationNetwork]) -> Result<Vec<usize>> {
    let mut indices = Vec::with_capacity(nets.len());
    for net in nets {
        let idx = bundle
            .associations
            .iter()
            .position(|a| a.name == net.name)
            .ok_or_else(|| {
                GrafError::Consistency(format!("association {} missing from bundle", net.name))
            })?;
        let assoc = &bundle.associations[idx];
        if !Arc::ptr_eq(&assoc.arcs, &net.arcs) {
            if assoc.arcs.len() != net.arcs.len() {
                return Err(GrafError::Consistency(format!(
                    "bundle lists {} arcs for association {}, network has {}",
                    assoc.arcs.len(),
                    net.name,
                    net.arcs.len()
                )));
            }
            for (i, j) in net.arcs.iter() {
                if assoc.arcs.find(i, j).is_none() {
                    return Err(GrafError::Consistency(format!(
                        "arc ({i}, {j}) of association {} missing from bundle",
                        net.name
                    )));
                }
            }
        }
        indices.push(idx);
    }
    Ok(indices)
}

fn score_with(
    bundle: &AttentionBundle,
    nets: &[AssociationNetwork],
    variant: ScoreVariant,
) -> Result<FusedGraph> {
    if nets.is_empty() {
        return Err(GrafError::Config(
            "fusion needs at least one association".into(),
        ));
    }
    let indices = aligned_indices(bundle, nets)?;
    let n = nets[0].n;
    for net in nets {
        if net.n != n {
            return Err(GrafError::Consistency(
                "associations disagree on node count".into(),
            ));
        }
    }
    let mut union_pairs = Vec::new();
    for net in nets {
        union_pairs.extend(net.arcs.iter());
    }
    let arcs = Arc::new(ArcSet::from_pairs(n, &union_pairs)?);

    let mut scores = vec![0.0; arcs.len()];
    for (e, (i, j)) in arcs.iter().enumerate() {
        let mut acc = 0.0;
        let mut present = 0usize;
        for &bi in &indices {
            let assoc = &bundle.associations[bi];
            if let Some(idx) = assoc.arcs.find(i, j) {
                present += 1;
                match variant {
                    ScoreVariant::Full => acc += bundle.beta[bi] * assoc.alpha[idx],
                    ScoreVariant::NodeOnly => acc += assoc.alpha[idx],
                    ScoreVariant::AssocOnly => acc += bundle.beta[bi],
                }
            }
        }
        scores[e] = match variant {
            ScoreVariant::AssocOnly => acc / present as f64,
            _ => acc,
        };
    }
    Ok(FusedGraph {
        n,
        arcs,
        scores,
        variant,
        eliminated: false,
        elimination_seed: None,
    })
}

/// score(i, j) = sum over associations containing (i, j) of beta * alpha.
pub fn score_full(bundle: &AttentionBundle, nets: &[AssociationNetwork]) -> Result<FusedGraph> {
    score_with(bundle, nets, ScoreVariant::Full)
}

/// score(i, j) = sum of alpha alone: every association counts the same.
pub fn score_node_only(
    bundle: &AttentionBundle,
    nets: &[AssociationNetwork],
) -> Result<FusedGraph> {
    score_with(bundle, nets, ScoreVariant::NodeOnly)
}

/// score(i, j) = mean of beta over the associations containing (i, j).
pub fn score_assoc_only(
    bundle: &AttentionBundle,
    nets: &[AssociationNetwork],
) -> Result<FusedGraph> {
    score_with(bundle, nets, ScoreVariant::AssocOnly)
}

pub fn score_variant(
    bundle: &AttentionBundle,
    nets: &[AssociationNetwork],
    variant: ScoreVariant,
) -> Result<FusedGraph> {
    score_with(bundle, nets, variant)
}

/// Keep each non-self-loop arc with probability score / max_score; self-loops
/// always survive and surviving arcs keep their scores. Reproducible from the
/// seed.
pub fn eliminate_edges(g: &FusedGraph, seed: u64) -> Result<FusedGraph> {
    if g.eliminated {
        return Err(GrafError::Usage(
            "fused graph already went through elimination".into(),
        ));
    }
    let max = g.max_score();
    if max.is_nan() || max <= 0.0 {
        return Err(GrafError::Consistency(
            "fused graph has no positive scores".into(),
        ));
    }
    let mut rng = rng_from(seed);
    let mut kept_pairs = Vec::new();
    let mut kept_scores = Vec::new();
    for (e, (i, j)) in g.arcs.iter().enumerate() {
        let keep = if i == j {
            // Draw anyway so arc decisions line up positionally across graphs
            // with equal arc sets.
            let _ = rng.random::<f64>();
            true
        } else {
            rng.random::<f64>() < g.scores[e] / max
        };
        if keep {
            kept_pairs.push((i, j));
            kept_scores.push(g.scores[e]);
        }
    }
    let arcs = Arc::new(ArcSet::from_pairs(g.n, &kept_pairs)?);
    Ok(FusedGraph {
        n: g.n,
        arcs,
        scores: kept_scores,
        variant: g.variant,
        eliminated: true,
        elimination_seed: Some(seed),
    })
}

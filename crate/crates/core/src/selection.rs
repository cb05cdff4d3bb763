//! Leaf scoring on the flattened tree (every leaf against the root) and
//! beam selection.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::partition::{NodeStats, PartitionTree, inverse_density_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UcbMode {
    /// Density-adaptive score.
    Rho,
    /// Count-based UCB1 (predecessor behaviour).
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UcbScore {
    pub leaf_id: usize,
    pub exploitation: f64,
    pub exploration: f64,
    pub total: f64,
}

impl UcbScore {
    fn new(leaf_id: usize, exploitation: f64, exploration: f64) -> Self {
        Self {
            leaf_id,
            exploitation,
            exploration,
            total: exploitation + exploration,
        }
    }
}

/// `ρ̄ = Σ w·ρ` with inverse-density weights over the node's own records.
pub fn node_mean_density(rho: &[f64]) -> f64 {
    inverse_density_weights(rho)
        .iter()
        .zip(rho)
        .map(|(w, r)| w * r)
        .sum()
}

/// `c_p · ln(ρ̄_parent / ρ̄_child) / ln(adapt)`, with `adapt` clamped to
/// `1 + 1e-9` from below. Zero when the densities are equal.
pub fn rho_exploration(c_p: f64, parent: f64, child: f64, adapt: f64) -> f64 {
    if parent == child {
        return 0.0;
    }
    c_p * (parent / child).ln() / adapt.max(1.0 + 1e-9).ln()
}

/// Scores `leaves` against `root` with the density-adaptive rule.
/// `Adapt` ranges over the leaves scored in this call.
pub fn score_rho(root: &NodeStats, leaves: &[(usize, NodeStats)], c_p: f64) -> Vec<UcbScore> {
    let parent = root.mean_density();
    let densest = leaves
        .iter()
        .map(|(_, s)| s.mean_density())
        .fold(f64::NEG_INFINITY, f64::max);
    score_rho_with_adapt(root, leaves, c_p, densest / parent)
}

/// As [`score_rho`] with a caller-supplied logarithm base.
pub fn score_rho_with_adapt(
    root: &NodeStats,
    leaves: &[(usize, NodeStats)],
    c_p: f64,
    adapt: f64,
) -> Vec<UcbScore> {
    let parent = root.mean_density();
    leaves
        .iter()
        .map(|(id, s)| {
            debug_assert!(s.count > 0, "leaves are never empty");
            UcbScore::new(
                *id,
                s.weighted_mean_y(),
                rho_exploration(c_p, parent, s.mean_density(), adapt),
            )
        })
        .collect()
}

/// `mean y + 2·c_p·√(2 ln n_parent / n_child)`; an empty child scores +∞.
pub fn ucb_one(leaf_id: usize, n_parent: usize, child: &NodeStats, c_p: f64) -> UcbScore {
    if child.count == 0 {
        return UcbScore::new(leaf_id, 0.0, f64::INFINITY);
    }
    let exploration =
        2.0 * c_p * (2.0 * (n_parent as f64).ln() / child.count as f64).sqrt();
    UcbScore::new(leaf_id, child.mean_y(), exploration)
}

pub fn score_leaves(tree: &PartitionTree, c_p: f64, mode: UcbMode) -> Vec<UcbScore> {
    let root = tree.root().stats;
    match mode {
        UcbMode::Rho => {
            let leaves: Vec<(usize, NodeStats)> =
                tree.leaves().iter().map(|&l| (l, tree.node(l).stats)).collect();
            score_rho(&root, &leaves, c_p)
        }
        UcbMode::One => tree
            .leaves()
            .iter()
            .map(|&l| ucb_one(l, root.count, &tree.node(l).stats, c_p))
            .collect(),
    }
}

/// Top `width` scores by total, ties broken by smaller leaf id.
pub fn top_k(mut scores: Vec<UcbScore>, width: usize) -> Vec<UcbScore> {
    scores.sort_by(|a, b| {
        b.total
            .total_cmp(&a.total)
            .then(a.leaf_id.cmp(&b.leaf_id))
    });
    scores.truncate(width.max(1));
    scores
}

/// Leaf ids of the beam, best first.
pub fn select_beam(tree: &PartitionTree, c_p: f64, width: usize, mode: UcbMode) -> Vec<usize> {
    top_k(score_leaves(tree, c_p, mode), width)
        .into_iter()
        .map(|s| s.leaf_id)
        .collect()
}

/// Score table as CSV rows `round,leaf,exploitation,exploration,total`.
pub fn scores_csv(round: usize, scores: &[UcbScore]) -> String {
    let mut out = String::new();
    for s in scores {
        let _ = writeln!(
            out,
            "{round},{},{},{},{}",
            s.leaf_id, s.exploitation, s.exploration, s.total
        );
    }
    out
}

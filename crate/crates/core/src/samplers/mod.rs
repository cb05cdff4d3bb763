//! Point generators restricted to a leaf subspace. Everything here works in
//! unit-cube coordinates; membership is supplied as a predicate.

pub mod gp;
pub mod sobol;
pub mod trust_region;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::partition::PartitionTree;
use sobol::SobolStream;

/// Membership predicate of one leaf.
pub fn leaf_predicate(tree: &PartitionTree, leaf: usize) -> impl Fn(&[f64]) -> bool + '_ {
    move |u| tree.leaf_membership(leaf, u)
}

/// Source of candidate points over the whole unit cube.
#[derive(Debug, Clone)]
pub enum Proposal {
    Uniform { rng: ChaCha8Rng, dim: usize },
    Sobol(SobolStream),
}

impl Proposal {
    pub fn uniform(dim: usize, seed: u64) -> Self {
        Proposal::Uniform {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
        }
    }

    pub fn sobol(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.random::<u32>()).collect();
        Ok(Proposal::Sobol(SobolStream::new(dim)?.shifted(shift)))
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        match self {
            Proposal::Uniform { rng, dim } => (0..*dim).map(|_| rng.random::<f64>()).collect(),
            Proposal::Sobol(s) => s.next_point(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RejectOutcome {
    pub points: Vec<Vec<f64>>,
    pub proposals: usize,
    /// The proposal allowance ran out before `n` points were accepted.
    pub thin: bool,
}

/// Draws proposals over the whole cube and keeps leaf members, giving up
/// after `n * max_tries` proposals.
pub fn reject_sample(
    member: &dyn Fn(&[f64]) -> bool,
    n: usize,
    proposal: &mut Proposal,
    max_tries: usize,
) -> RejectOutcome {
    let limit = n.saturating_mul(max_tries.max(1));
    let mut points = Vec::with_capacity(n);
    let mut proposals = 0;
    while points.len() < n && proposals < limit {
        let p = proposal.next_point();
        proposals += 1;
        if member(&p) {
            points.push(p);
        }
    }
    let thin = points.len() < n;
    if thin {
        log::debug!("thin subspace: {} of {n} points after {proposals} proposals", points.len());
    }
    RejectOutcome {
        points,
        proposals,
        thin,
    }
}

/// Initial cube edge for candidate expansion, as a fraction of the box.
pub const EXPAND_START_EDGE: f64 = 1.0 / 64.0;

fn cube_around(center: &[f64], edge: f64, u: &[f64]) -> Vec<f64> {
    center
        .iter()
        .zip(u)
        .map(|(c, t)| {
            let lo = (c - edge / 2.0).max(0.0);
            let hi = (c + edge / 2.0).min(1.0);
            lo + t * (hi - lo)
        })
        .collect()
}

/// Grows a Sobol-filled cube around each anchor, doubling the edge while every
/// point of the batch stays inside the leaf; at the first edge producing
/// outsiders (or once the cube spans the box) the insiders are kept.
pub fn expand_candidates_around(
    member: &dyn Fn(&[f64]) -> bool,
    anchors: &[Vec<f64>],
    per_anchor: usize,
    stream: &mut SobolStream,
) -> Vec<Vec<f64>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for anchor in anchors {
        if !member(anchor) {
            log::warn!("expansion anchor {anchor:?} is not in the leaf; skipped");
            continue;
        }
        let mut edge = EXPAND_START_EDGE;
        loop {
            let batch: Vec<Vec<f64>> = (0..per_anchor)
                .map(|_| cube_around(anchor, edge, &stream.next_point()))
                .collect();
            let inside: Vec<Vec<f64>> = batch.iter().filter(|p| member(p)).cloned().collect();
            let spans_box = edge >= 2.0;
            if inside.len() < batch.len() || spans_box {
                for p in inside {
                    let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
                    if seen.insert(key) {
                        out.push(p);
                    }
                }
                break;
            }
            edge *= 2.0;
        }
    }
    out
}

/// Axis-aligned box `(lower, upper)` in unit coordinates.
pub type UnitBox = (Vec<f64>, Vec<f64>);

/// Minimum side of an approximated boundary.
pub const MIN_BOX_WIDTH: f64 = 1e-3;

fn floor_width(lo: &mut [f64], hi: &mut [f64]) {
    for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
        if *h - *l < MIN_BOX_WIDTH {
            let c = 0.5 * (*l + *h);
            *l = (c - MIN_BOX_WIDTH / 2.0).max(0.0);
            *h = (*l + MIN_BOX_WIDTH).min(1.0);
            *l = *h - MIN_BOX_WIDTH;
        }
    }
}

/// Outer axis-aligned box of a leaf: starts from the records' bounding box
/// and repeatedly probes a margin around it, growing the box to every member
/// found, until a round finds nothing new. The box never shrinks.
pub fn approximate_boundary(
    member: &dyn Fn(&[f64]) -> bool,
    records: &[Vec<f64>],
    stream: &mut SobolStream,
) -> UnitBox {
    let dim = stream.dim();
    let mut lo = vec![1.0; dim];
    let mut hi = vec![0.0; dim];
    for r in records {
        for j in 0..dim {
            lo[j] = f64::min(lo[j], r[j]);
            hi[j] = f64::max(hi[j], r[j]);
        }
    }
    floor_width(&mut lo, &mut hi);
    let probes = 64 * dim;
    for _ in 0..64 {
        let margin: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| (0.25 * (h - l)).max(0.05))
            .collect();
        let plo: Vec<f64> = (0..dim).map(|j| (lo[j] - margin[j]).max(0.0)).collect();
        let phi: Vec<f64> = (0..dim).map(|j| (hi[j] + margin[j]).min(1.0)).collect();
        let mut grew = false;
        for _ in 0..probes {
            let t = stream.next_point();
            let p: Vec<f64> = (0..dim).map(|j| plo[j] + t[j] * (phi[j] - plo[j])).collect();
            if !member(&p) {
                continue;
            }
            for j in 0..dim {
                if p[j] < lo[j] {
                    lo[j] = p[j];
                    grew = true;
                }
                if p[j] > hi[j] {
                    hi[j] = p[j];
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    (lo, hi)
}

/// Latin hypercube of `n` points in `bounds`.
pub fn latin_hypercube(n: usize, bounds: &UnitBox, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let dim = bounds.0.len();
    let mut pts = vec![vec![0.0; dim]; n];
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        for (p, s) in pts.iter_mut().zip(strata) {
            let t = (s as f64 + rng.random::<f64>()) / n as f64;
            p[j] = bounds.0[j] + t * (bounds.1[j] - bounds.0[j]);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Dataset, SampleRecord, SearchSpace};
    use crate::partition::{TreeParams, Weighting, treeify_with_rho};

    fn half_space_tree() -> PartitionTree {
        let pts = SobolStream::new(2).unwrap().next_n(64);
        let mut d = Dataset::new(SearchSpace::unit(2));
        for p in &pts {
            d.push(SampleRecord {
                x: p.clone(),
                y: if p[0] > 0.5 { 1.0 } else { 0.0 },
            })
            .unwrap();
        }
        treeify_with_rho(
            &d,
            vec![1.0; 64],
            &TreeParams {
                leafsize: 2,
                max_depth: 1,
                weighting: Weighting::Uniform,
                seed: 0,
            },
        )
    }

    #[test]
    fn whole_box_accepts_everything() {
        let all = |_: &[f64]| true;
        let out = reject_sample(&all, 100, &mut Proposal::sobol(2, 1).unwrap(), 10);
        assert_eq!((out.points.len(), out.proposals), (100, 100));
    }

    #[test]
    fn half_space_leaf() {
        let tree = half_space_tree();
        let member = leaf_predicate(&tree, 1);
        let out = reject_sample(&member, 200, &mut Proposal::uniform(2, 3), 100);
        assert_eq!(out.points.len(), 200);
        assert!(out.points.iter().all(|p| p[0] > 0.4 && tree.leaf_membership(1, p)));
    }

    #[test]
    fn acceptance_matches_volume() {
        // a 0.1 x 0.1 corner has 1% of the volume
        let member = |u: &[f64]| u[0] < 0.1 && u[1] < 0.1;
        let out = reject_sample(&member, 100_000, &mut Proposal::uniform(2, 5), 1);
        let rate = out.points.len() as f64 / out.proposals as f64;
        assert!((0.005..0.02).contains(&rate), "{rate}");
        assert!(out.thin);
    }

    #[test]
    fn expansion_in_whole_box_stays_in_bounds() {
        let all = |_: &[f64]| true;
        let mut s = SobolStream::new(2).unwrap();
        let c = expand_candidates_around(&all, &[vec![0.5, 0.5]], 8, &mut s);
        assert_eq!(c.len(), 8);
        assert!(c.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        // the last batch spans the box
        assert!(c.iter().any(|p| (p[0] - 0.5).abs() > 0.2));
    }

    #[test]
    fn expansion_near_separator_stays_inside() {
        let member = |u: &[f64]| u[0] >= 0.5;
        let mut s = SobolStream::new(2).unwrap();
        let c = expand_candidates_around(&member, &[vec![0.505, 0.5], vec![0.2, 0.2]], 8, &mut s);
        assert!(!c.is_empty());
        assert!(c.iter().all(|p| member(p)));
    }

    fn dispersion(cands: &[Vec<f64>], member: &dyn Fn(&[f64]) -> bool) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=40 {
            for j in 0..=40 {
                let g = [i as f64 / 40.0, j as f64 / 40.0];
                if !member(&g) {
                    continue;
                }
                let d = cands
                    .iter()
                    .map(|c| crate::kdtree::dist2(c, &g))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(d.sqrt());
            }
        }
        worst
    }

    #[test]
    fn expansion_dispersion_improves_with_batch() {
        let member = |u: &[f64]| u[0] <= 0.75;
        let anchors: Vec<Vec<f64>> = SobolStream::new(2)
            .unwrap()
            .next_n(8)
            .into_iter()
            .filter(|p| member(p))
            .collect();
        let mut last = f64::INFINITY;
        for per in [4, 8, 16, 32, 64] {
            let mut s = SobolStream::new(2).unwrap();
            let c = expand_candidates_around(&member, &anchors, per, &mut s);
            let d = dispersion(&c, &member);
            assert!(d < last, "{per}: {d} !< {last}");
            last = d;
        }
    }

    #[test]
    fn boundary_of_whole_box() {
        let all = |_: &[f64]| true;
        let corners = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let (lo, hi) = approximate_boundary(&all, &corners, &mut SobolStream::new(2).unwrap());
        assert!(lo.iter().all(|v| *v < 0.05) && hi.iter().all(|v| *v > 0.95));
    }

    #[test]
    fn boundary_recovers_half_space() {
        let member = |u: &[f64]| u[0] >= 0.5;
        let recs = vec![vec![0.7, 0.4], vec![0.6, 0.6]];
        let (lo, hi) = approximate_boundary(&member, &recs, &mut SobolStream::new(2).unwrap());
        assert!((lo[0] - 0.5).abs() < 0.05 && hi[0] > 0.95, "{lo:?} {hi:?}");
        assert!(lo[1] < 0.05 && hi[1] > 0.95, "{lo:?} {hi:?}");
    }

    #[test]
    fn boundary_of_thin_leaf_has_floor() {
        let member = |u: &[f64]| (u[0] - 0.3).abs() < 1e-6;
        let recs = vec![vec![0.3, 0.3]];
        let (lo, hi) = approximate_boundary(&member, &recs, &mut SobolStream::new(2).unwrap());
        for j in 0..2 {
            assert!(lo[j] <= 0.3 && hi[j] >= 0.3);
            assert!(hi[j] - lo[j] >= MIN_BOX_WIDTH - 1e-15);
        }
    }

    #[test]
    fn latin_hypercube_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = (vec![0.2, 0.0], vec![0.6, 1.0]);
        let pts = latin_hypercube(30, &b, &mut rng);
        for j in 0..2 {
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| (((p[j] - b.0[j]) / (b.1[j] - b.0[j])) * 30.0) as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..30).collect::<Vec<_>>());
        }
    }
}

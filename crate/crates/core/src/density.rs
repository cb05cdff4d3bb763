//! Adaptive Gaussian KDE with a per-query bandwidth equal to the distance of
//! the k-th nearest sample.
//!
//! Points appended after a build are kept in a linearly scanned side list, so
//! queries stay exact between rebuilds; rebuilding only restores speed.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kdtree::{KdTree, Neighbor, dist2};

/// Bandwidth floor for coincident samples.
pub const MIN_BANDWIDTH: f64 = 1e-9;
/// Bandwidth used when a query has no neighbour to measure against.
pub const FALLBACK_BANDWIDTH: f64 = 0.5;
/// Kernel terms beyond this many bandwidths are below 1e-21 and skipped.
const CUTOFF: f64 = 10.0;

/// Default neighbour count: 8 up to three dimensions, 16 above.
pub fn default_k(dim: usize) -> usize {
    if dim <= 3 { 8 } else { 16 }
}

#[derive(Debug, Clone)]
pub struct DensityModel {
    dim: usize,
    k: usize,
    tree: KdTree,
    indexed: usize,
    pending: Vec<Vec<f64>>,
    staleness: usize,
}

impl DensityModel {
    /// `points` are normalized coordinates.
    pub fn build(points: &[Vec<f64>], k: usize) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyPointSet)?;
        if k == 0 {
            return Err(Error::Config("density k must be at least 1".into()));
        }
        Ok(Self {
            dim: first.len(),
            k,
            tree: KdTree::build(points),
            indexed: points.len(),
            pending: Vec::new(),
            staleness: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indexed + self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn staleness(&self) -> usize {
        self.staleness
    }

    /// Adds a point without rebuilding the index.
    pub fn append(&mut self, point: Vec<f64>) {
        debug_assert_eq!(point.len(), self.dim);
        self.pending.push(point);
        self.staleness += 1;
    }

    /// Whether `interval` appended points have accumulated since the last build.
    pub fn refresh_policy(&self, interval: usize) -> bool {
        self.staleness >= interval
    }

    /// Rebuilds the index over every point seen so far.
    pub fn rebuild(&mut self, all_points: &[Vec<f64>]) -> Result<()> {
        *self = Self::build(all_points, self.k)?;
        Ok(())
    }

    fn neighbors(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let mut nn = self.tree.knn(query, k);
        nn.extend(self.pending.iter().enumerate().map(|(i, p)| Neighbor {
            id: self.indexed + i,
            dist2: dist2(query, p),
        }));
        nn.sort();
        nn.truncate(k);
        nn
    }

    /// Distance from `query` to its k-th nearest sample, one coincident sample
    /// excluded. Uses the farthest available neighbour when fewer exist.
    pub fn bandwidth_at(&self, query: &[f64]) -> f64 {
        let mut nn = self.neighbors(query, self.k + 1);
        if nn.first().is_some_and(|n| n.dist2 == 0.0) {
            nn.remove(0);
        }
        nn.truncate(self.k);
        match nn.last() {
            None => FALLBACK_BANDWIDTH,
            Some(n) => n.dist2.sqrt().max(MIN_BANDWIDTH),
        }
    }

    /// `ρ(q) = (1/n) Σ_j N(q; x_j, h(q)² I)`, always positive.
    pub fn density_at(&self, query: &[f64]) -> f64 {
        let h = self.bandwidth_at(query);
        let norm = (2.0 * PI * h * h).powf(-0.5 * self.dim as f64);
        let r2max = (CUTOFF * h).powi(2);
        let inv = 1.0 / (2.0 * h * h);
        let mut sum = 0.0;
        self.tree.within(query, r2max, &mut |_, d2| sum += (-d2 * inv).exp());
        for p in &self.pending {
            let d2 = dist2(query, p);
            if d2 <= r2max {
                sum += (-d2 * inv).exp();
            }
        }
        (norm * sum / self.len() as f64).max(f64::MIN_POSITIVE)
    }
}

//! Regressors fitted to a sample history, used only to score coverage.
//!
//! Everything here works in unit-cube coordinates. Up to three dimensions the
//! regressor is piecewise-linear over a Delaunay triangulation and undefined
//! outside the convex hull of the samples; above that it is inverse-distance
//! weighted k-NN.

use std::collections::HashSet;

use nalgebra::DMatrix;
use qhull::Qh;

use crate::error::{Error, Result};
use crate::kdtree::KdTree;

/// Barycentric slack when testing simplex membership.
const BARY_TOL: f64 = 1e-10;
pub const IDW_K: usize = 8;
pub const IDW_POWER: f64 = 2.0;

#[derive(Debug, Clone)]
pub enum Regressor {
    /// Sorted 1-D linear interpolation.
    Linear1d { xs: Vec<f64>, ys: Vec<f64> },
    Simplicial(Triangulation),
    Idw { tree: KdTree, ys: Vec<f64>, k: usize },
    /// Fallback for degenerate point sets.
    Nearest { tree: KdTree, ys: Vec<f64> },
}

impl Regressor {
    /// `None` means undefined (outside the hull).
    pub fn predict(&self, u: &[f64]) -> Option<f64> {
        match self {
            Regressor::Linear1d { xs, ys } => interp_1d(xs, ys, u[0]),
            Regressor::Simplicial(t) => t.interpolate(u),
            Regressor::Idw { tree, ys, k } => Some(idw(tree, ys, u, *k)),
            Regressor::Nearest { tree, ys } => tree.knn(u, 1).first().map(|n| ys[n.id]),
        }
    }

    pub fn predict_many(&self, us: &[Vec<f64>]) -> Vec<Option<f64>> {
        us.iter().map(|u| self.predict(u)).collect()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Regressor::Linear1d { .. } => "linear-1d",
            Regressor::Simplicial(_) => "simplicial",
            Regressor::Idw { .. } => "idw-knn",
            Regressor::Nearest { .. } => "nearest",
        }
    }
}

/// Fits the coverage regressor to unit-cube points `us` with values `ys`.
/// Requires at least `dim + 1` points.
pub fn fit_regressor(us: &[Vec<f64>], ys: &[f64]) -> Result<Regressor> {
    if us.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: us.len(),
            got: ys.len(),
        });
    }
    let Some(dim) = us.first().map(Vec::len) else {
        return Err(Error::EmptyPointSet);
    };
    if us.len() < dim + 1 {
        return Err(Error::Numerical(format!(
            "{} points cannot support a {dim}-D regressor",
            us.len()
        )));
    }
    let (us, ys) = dedupe(us, ys);
    if dim == 1 {
        let mut order: Vec<usize> = (0..us.len()).collect();
        order.sort_by(|&a, &b| us[a][0].total_cmp(&us[b][0]));
        return Ok(Regressor::Linear1d {
            xs: order.iter().map(|&i| us[i][0]).collect(),
            ys: order.iter().map(|&i| ys[i]).collect(),
        });
    }
    if dim > 3 {
        return Ok(Regressor::Idw {
            tree: KdTree::build(&us),
            ys,
            k: IDW_K,
        });
    }
    match Triangulation::build(&us, &ys) {
        Some(t) => Ok(Regressor::Simplicial(t)),
        None => {
            log::warn!(
                "degenerate geometry for {} points in {dim}-D; using nearest-neighbour regression",
                us.len()
            );
            Ok(Regressor::Nearest {
                tree: KdTree::build(&us),
                ys,
            })
        }
    }
}

/// Drops exact duplicate points, keeping the first occurrence.
fn dedupe(us: &[Vec<f64>], ys: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut seen = HashSet::new();
    let mut out_u = Vec::with_capacity(us.len());
    let mut out_y = Vec::with_capacity(us.len());
    for (u, &y) in us.iter().zip(ys) {
        let key: Vec<u64> = u.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert(key) {
            out_u.push(u.clone());
            out_y.push(y);
        }
    }
    (out_u, out_y)
}

fn interp_1d(xs: &[f64], ys: &[f64], q: f64) -> Option<f64> {
    let (first, last) = (*xs.first()?, *xs.last()?);
    if q < first || q > last {
        return None;
    }
    let i = xs.partition_point(|&x| x < q);
    if i < xs.len() && xs[i] == q {
        return Some(ys[i]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (q - x0) / (x1 - x0);
    Some(ys[i - 1] + t * (ys[i] - ys[i - 1]))
}

fn idw(tree: &KdTree, ys: &[f64], q: &[f64], k: usize) -> f64 {
    let nn = tree.knn(q, k);
    if let Some(hit) = nn.iter().find(|n| n.dist2 == 0.0) {
        return ys[hit.id];
    }
    let (mut num, mut den) = (0.0, 0.0);
    for n in &nn {
        let w = n.dist2.sqrt().powf(-IDW_POWER);
        num += w * ys[n.id];
        den += w;
    }
    num / den
}

#[derive(Debug, Clone)]
struct Simplex {
    vertices: Vec<usize>,
    origin: Vec<f64>,
    /// Row-major inverse of the edge matrix `[v1-v0 .. vd-v0]`.
    inverse: Vec<f64>,
}

/// Delaunay triangulation with a uniform bucket grid for point location.
#[derive(Debug, Clone)]
pub struct Triangulation {
    dim: usize,
    ys: Vec<f64>,
    simplices: Vec<Simplex>,
    cells: usize,
    buckets: Vec<Vec<u32>>,
}

impl Triangulation {
    fn build(us: &[Vec<f64>], ys: &[f64]) -> Option<Self> {
        let dim = us[0].len();
        let qh = Qh::new_delaunay(us.iter().map(|u| u.iter().copied())).ok()?;
        let mut simplices = Vec::new();
        for f in qh
            .simplices()
            .filter(|f| !f.is_sentinel() && !f.upper_delaunay())
        {
            let vertices: Option<Vec<usize>> =
                f.vertices()?.iter().map(|v| v.index(&qh)).collect();
            let vertices = vertices?;
            if vertices.len() != dim + 1 {
                continue;
            }
            if let Some(s) = Simplex::new(us, vertices) {
                simplices.push(s);
            }
        }
        drop(qh);
        if simplices.is_empty() {
            return None;
        }
        let cells = ((simplices.len() as f64 / 2.0).powf(1.0 / dim as f64).floor() as usize)
            .clamp(1, if dim == 2 { 256 } else { 64 });
        let mut buckets = vec![Vec::new(); cells.pow(dim as u32)];
        for (si, s) in simplices.iter().enumerate() {
            let mut lo = vec![usize::MAX; dim];
            let mut hi = vec![0usize; dim];
            for &v in &s.vertices {
                for a in 0..dim {
                    let c = cell_of(us[v][a], cells);
                    lo[a] = lo[a].min(c);
                    hi[a] = hi[a].max(c);
                }
            }
            for_each_cell(&lo, &hi, cells, &mut |flat| buckets[flat].push(si as u32));
        }
        Some(Self {
            dim,
            ys: ys.to_vec(),
            simplices,
            cells,
            buckets,
        })
    }

    pub fn simplex_count(&self) -> usize {
        self.simplices.len()
    }

    /// Vertex index lists of all simplices.
    pub fn simplices(&self) -> impl Iterator<Item = &[usize]> {
        self.simplices.iter().map(|s| s.vertices.as_slice())
    }

    pub fn interpolate(&self, q: &[f64]) -> Option<f64> {
        if q.iter().any(|v| !(-BARY_TOL..=1.0 + BARY_TOL).contains(v)) {
            return None;
        }
        let flat = q
            .iter()
            .rev()
            .fold(0, |acc, &v| acc * self.cells + cell_of(v, self.cells));
        let mut best: Option<(f64, usize)> = None;
        let mut lambda = vec![0.0; self.dim + 1];
        for &si in &self.buckets[flat] {
            let s = &self.simplices[si as usize];
            s.barycentric(q, &mut lambda);
            let worst = lambda.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some(s.combine(&lambda, &self.ys));
            }
            if worst >= -BARY_TOL && best.is_none_or(|(w, _)| worst > w) {
                best = Some((worst, si as usize));
            }
        }
        let (_, si) = best?;
        let s = &self.simplices[si];
        s.barycentric(q, &mut lambda);
        Some(s.combine(&lambda, &self.ys))
    }
}

impl Simplex {
    fn new(us: &[Vec<f64>], vertices: Vec<usize>) -> Option<Self> {
        let d = us[0].len();
        let origin = us[vertices[0]].clone();
        let m = DMatrix::from_fn(d, d, |r, c| us[vertices[c + 1]][r] - origin[r]);
        // Reject slivers with no volume; they cannot host a query.
        let scale: f64 = (0..d).map(|c| m.column(c).norm()).product();
        if scale == 0.0 || m.determinant().abs() <= 1e-12 * scale {
            return None;
        }
        let inv = m.try_inverse()?;
        let inverse = (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| inv[(r, c)])
            .collect();
        Some(Self {
            vertices,
            origin,
            inverse,
        })
    }

    fn barycentric(&self, q: &[f64], out: &mut [f64]) {
        let d = self.origin.len();
        let mut rest = 0.0;
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += self.inverse[r * d + c] * (q[c] - self.origin[c]);
            }
            out[r + 1] = acc;
            rest += acc;
        }
        out[0] = 1.0 - rest;
    }

    fn combine(&self, lambda: &[f64], ys: &[f64]) -> f64 {
        self.vertices
            .iter()
            .zip(lambda)
            .map(|(&v, l)| l * ys[v])
            .sum()
    }
}

fn cell_of(v: f64, cells: usize) -> usize {
    ((v * cells as f64).floor().max(0.0) as usize).min(cells - 1)
}

/// Visits every flat cell index in the inclusive box `lo..=hi`.
fn for_each_cell(lo: &[usize], hi: &[usize], cells: usize, f: &mut dyn FnMut(usize)) {
    let d = lo.len();
    let mut cur = lo.to_vec();
    loop {
        let flat = cur.iter().rev().fold(0, |acc, &c| acc * cells + c);
        f(flat);
        let mut a = 0;
        loop {
            if a == d {
                return;
            }
            if cur[a] < hi[a] {
                cur[a] += 1;
                break;
            }
            cur[a] = lo[a];
            a += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    #[test]
    fn reproduces_samples_exactly() {
        let us = random_points(200, 2, 1);
        let ys: Vec<f64> = us.iter().map(|u| (7.0 * u[0]).sin() + u[1] * u[1]).collect();
        let r = fit_regressor(&us, &ys).unwrap();
        assert_eq!(r.kind(), "simplicial");
        for (u, y) in us.iter().zip(&ys) {
            let p = r.predict(u).unwrap();
            assert!((p - y).abs() < 1e-9, "{p} vs {y}");
        }
    }

    #[test]
    fn linear_data_is_exact_in_2d_and_3d() {
        for dim in [2, 3] {
            let mut us = random_points(150, dim, 7);
            // pin the hull to the full cube
            for corner in 0..(1usize << dim) {
                us.push((0..dim).map(|a| ((corner >> a) & 1) as f64).collect());
            }
            let a = [0.3, -1.7, 2.2];
            let f = |u: &[f64]| 0.5 + u.iter().zip(&a).map(|(x, c)| x * c).sum::<f64>();
            let ys: Vec<f64> = us.iter().map(|u| f(u)).collect();
            let r = fit_regressor(&us, &ys).unwrap();
            for q in random_points(500, dim, 99) {
                let p = r.predict(&q).expect("inside the cube hull");
                assert!((p - f(&q)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn outside_hull_is_undefined() {
        let us = vec![
            vec![0.2, 0.2],
            vec![0.8, 0.2],
            vec![0.2, 0.8],
            vec![0.8, 0.8],
            vec![0.5, 0.5],
        ];
        let ys = vec![1.0; 5];
        let r = fit_regressor(&us, &ys).unwrap();
        assert!(r.predict(&[0.1, 0.5]).is_none());
        assert!(r.predict(&[0.9, 0.9]).is_none());
        assert_eq!(r.predict(&[0.5, 0.3]), Some(1.0));
    }

    #[test]
    fn brute_force_barycentric_oracle() {
        // Independent oracle: scan every simplex with a Cramer's-rule solve.
        let us = random_points(120, 2, 3);
        let ys: Vec<f64> = us.iter().map(|u| (u[0] * 5.0).cos() * u[1]).collect();
        let Regressor::Simplicial(t) = fit_regressor(&us, &ys).unwrap() else {
            panic!("expected triangulation");
        };
        let oracle = |q: &[f64]| -> Option<f64> {
            for s in t.simplices() {
                let (a, b, c) = (&us[s[0]], &us[s[1]], &us[s[2]]);
                let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
                let l0 = ((b[1] - c[1]) * (q[0] - c[0]) + (c[0] - b[0]) * (q[1] - c[1])) / det;
                let l1 = ((c[1] - a[1]) * (q[0] - c[0]) + (a[0] - c[0]) * (q[1] - c[1])) / det;
                let l2 = 1.0 - l0 - l1;
                if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
                    return Some(l0 * ys[s[0]] + l1 * ys[s[1]] + l2 * ys[s[2]]);
                }
            }
            None
        };
        let mut inside = 0;
        for q in random_points(2000, 2, 4) {
            match (t.interpolate(&q), oracle(&q)) {
                (Some(a), Some(b)) => {
                    inside += 1;
                    assert!((a - b).abs() < 1e-9, "{a} vs {b} at {q:?}");
                }
                (None, None) => {}
                (a, b) => panic!("disagree at {q:?}: {a:?} vs {b:?}"),
            }
        }
        assert!(inside > 1500);
    }

    #[test]
    fn degenerate_points_fall_back_to_nearest() {
        let us: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0, i as f64 / 9.0]).collect();
        let ys: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let r = fit_regressor(&us, &ys).unwrap();
        assert_eq!(r.kind(), "nearest");
        assert_eq!(r.predict(&[0.0, 0.05]), Some(0.0));
    }

    #[test]
    fn too_few_points() {
        assert!(fit_regressor(&[vec![0.0, 0.0], vec![1.0, 1.0]], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn one_dimensional_interpolation() {
        let us = vec![vec![1.0], vec![0.0], vec![0.5]];
        let ys = vec![2.0, 0.0, 4.0];
        let r = fit_regressor(&us, &ys).unwrap();
        assert_eq!(r.predict(&[0.25]), Some(2.0));
        assert_eq!(r.predict(&[0.75]), Some(3.0));
        assert_eq!(r.predict(&[1.0]), Some(2.0));
    }

    #[test]
    fn idw_in_high_dimension() {
        let us = random_points(300, 5, 11);
        let ys: Vec<f64> = us.iter().map(|u| u[0]).collect();
        let r = fit_regressor(&us, &ys).unwrap();
        assert_eq!(r.kind(), "idw-knn");
        assert_eq!(r.predict(&us[17]), Some(ys[17]));
        // Oracle: brute-force 8-NN with 1/d² weights.
        let q = vec![0.4, 0.6, 0.5, 0.3, 0.7];
        let mut d: Vec<(f64, f64)> = us
            .iter()
            .zip(&ys)
            .map(|(u, &y)| (crate::kdtree::dist2(u, &q), y))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (num, den) = d[..8]
            .iter()
            .fold((0.0, 0.0), |(n, w), (d2, y)| (n + y / d2, w + 1.0 / d2));
        assert!((r.predict(&q).unwrap() - num / den).abs() < 1e-12);
    }
}

//! Exact k-nearest-neighbour and fixed-radius search over a static point set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const BUCKET: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist2: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    /// Builds over `points`; neighbour ids are positions in this slice.
    pub fn build(points: &[Vec<f64>]) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            Self::build_rec(points, &mut order, 0, &mut nodes);
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for &i in &order {
            coords.extend_from_slice(&points[i]);
        }
        Self {
            dim,
            coords,
            ids: order,
            nodes,
        }
    }

    fn build_rec(
        points: &[Vec<f64>],
        order: &mut [usize],
        offset: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let me = nodes.len();
        let n = order.len();
        if n <= BUCKET {
            nodes.push(Node::Leaf {
                start: offset,
                end: offset + n,
            });
            return me;
        }
        let dim = points[order[0]].len();
        let axis = (0..dim)
            .map(|a| {
                let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(points[i][a]), hi.max(points[i][a]))
                });
                (a, hi - lo)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .map_or(0, |(a, _)| a);
        let mid = n / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = points[order[mid]][axis];
        nodes.push(Node::Leaf { start: 0, end: 0 });
        let (lo, hi) = order.split_at_mut(mid);
        let left = Self::build_rec(points, lo, offset, nodes);
        let right = Self::build_rec(points, hi, offset + mid, nodes);
        nodes[me] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        me
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn point(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    /// The `k` nearest points, closest first (ties by id).
    pub fn knn(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.is_empty() {
            self.knn_rec(0, query, k, &mut heap);
        }
        heap.into_sorted_vec()
    }

    fn knn_rec(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let cand = Neighbor {
                        id: self.ids[slot],
                        dist2: dist2(q, self.point(slot)),
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// Calls `f(id, dist2)` for every point with `dist2 <= r2`.
    pub fn within(&self, query: &[f64], r2: f64, f: &mut impl FnMut(usize, f64)) {
        if !self.is_empty() {
            self.within_rec(0, query, r2, f);
        }
    }

    fn within_rec(&self, node: usize, q: &[f64], r2: f64, f: &mut impl FnMut(usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let d2 = dist2(q, self.point(slot));
                    if d2 <= r2 {
                        f(self.ids[slot], d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                if diff < 0.0 || diff * diff <= r2 {
                    self.within_rec(left, q, r2, f);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.within_rec(right, q, r2, f);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_knn(points: &[Vec<f64>], q: &[f64], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(id, p)| Neighbor { id, dist2: dist2(q, p) })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    proptest! {
        #[test]
        fn knn_matches_scan(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..300),
            q in proptest::collection::vec(0.0f64..1.0, 3),
            k in 1usize..20,
        ) {
            let tree = KdTree::build(&pts);
            prop_assert_eq!(tree.knn(&q, k), brute_knn(&pts, &q, k));
        }

        #[test]
        fn radius_matches_scan(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 2), 1..300),
            q in proptest::collection::vec(0.0f64..1.0, 2),
            r in 0.0f64..0.5,
        ) {
            let tree = KdTree::build(&pts);
            let mut got = Vec::new();
            tree.within(&q, r * r, &mut |id, _| got.push(id));
            got.sort();
            let want: Vec<usize> = (0..pts.len()).filter(|&i| dist2(&q, &pts[i]) <= r * r).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn duplicates_and_ties() {
        let pts = vec![vec![0.5, 0.5]; 40];
        let tree = KdTree::build(&pts);
        let nn = tree.knn(&[0.5, 0.5], 3);
        assert_eq!(nn.iter().map(|n| n.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}

//! Latent-action partition tree: recursive density-weighted bipartitions of
//! the unit cube, each learned by weighted 2-means pseudo-labelling followed by
//! a weighted linear SVM.

pub mod svm;

use serde::Serialize;

use crate::density::DensityModel;
use crate::domain::Dataset;

/// `side(u) = w·u + b`; `side >= 0` is the good half (boundary included).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hyperplane {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Hyperplane {
    pub fn side(&self, u: &[f64]) -> f64 {
        self.w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    pub fn is_good(&self, u: &[f64]) -> bool {
        self.side(u) >= 0.0
    }

    fn flipped(&self) -> Self {
        Self {
            w: self.w.iter().map(|v| -v).collect(),
            b: -self.b,
        }
    }
}

/// How samples are weighted when learning splits and scoring nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Normalized inverse sampling density.
    InverseDensity,
    /// Every sample counts the same (predecessor behaviour).
    Uniform,
}

/// Running sums from which every node statistic is derived.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NodeStats {
    pub count: usize,
    pub sum_y: f64,
    pub sum_inv_rho: f64,
    pub sum_y_inv_rho: f64,
}

impl NodeStats {
    fn add(&mut self, y: f64, rho: f64) {
        self.count += 1;
        self.sum_y += y;
        self.sum_inv_rho += 1.0 / rho;
        self.sum_y_inv_rho += y / rho;
    }

    pub fn mean_y(&self) -> f64 {
        self.sum_y / self.count as f64
    }

    /// `Σ w·y` with inverse-density weights.
    pub fn weighted_mean_y(&self) -> f64 {
        self.sum_y_inv_rho / self.sum_inv_rho
    }

    /// `ρ̄ = Σ w·ρ`, which reduces to the harmonic mean `n / Σ 1/ρ`.
    pub fn mean_density(&self) -> f64 {
        self.count as f64 / self.sum_inv_rho
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    #[serde(skip)]
    pub records: Vec<usize>,
    pub separator: Option<Hyperplane>,
    /// `(good, bad)` child ids.
    pub children: Option<(usize, usize)>,
    pub stats: NodeStats,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub leafsize: usize,
    pub max_depth: usize,
    pub weighting: Weighting,
    pub seed: u64,
}

/// Arena-allocated partition tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    nodes: Vec<TreeNode>,
    leaves: Vec<usize>,
    rho: Vec<f64>,
    ys: Vec<f64>,
    weighting: Weighting,
}

/// Inverse-density weights: `(1/ρ_i) / Σ_j (1/ρ_j)`.
pub fn inverse_density_weights(rho: &[f64]) -> Vec<f64> {
    let total: f64 = rho.iter().map(|r| 1.0 / r).sum();
    rho.iter().map(|r| (1.0 / r) / total).collect()
}

fn weights_for(rho: &[f64], weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::InverseDensity => inverse_density_weights(rho),
        Weighting::Uniform => vec![1.0 / rho.len() as f64; rho.len()],
    }
}

fn weighted_mean(values: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (s, w) = values.fold((0.0, 0.0), |(s, t), (v, w)| (s + v * w, t + w));
    s / w
}

/// Weighted 2-means on `[u; scaled y]`, seeded at the min-y and max-y
/// records. Returns `true` for members of the higher-mean cluster, or `None`
/// when a cluster empties.
fn two_means(xs: &[&[f64]], ys: &[f64], weights: &[f64]) -> Option<Vec<bool>> {
    let (ymin, ymax) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let feats: Vec<Vec<f64>> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let mut f = x.to_vec();
            f.push((y - ymin) / (ymax - ymin));
            f
        })
        .collect();
    let argmin = (0..ys.len()).min_by(|&a, &b| ys[a].total_cmp(&ys[b])).unwrap();
    let argmax = (0..ys.len()).max_by(|&a, &b| ys[a].total_cmp(&ys[b]).then(b.cmp(&a))).unwrap();
    let mut centers = [feats[argmin].clone(), feats[argmax].clone()];
    let mut assign = vec![0usize; feats.len()];
    for iter in 0..50 {
        let mut changed = false;
        for (i, f) in feats.iter().enumerate() {
            let d0 = crate::kdtree::dist2(f, &centers[0]);
            let d1 = crate::kdtree::dist2(f, &centers[1]);
            let c = usize::from(d1 < d0);
            if c != assign[i] || iter == 0 {
                changed |= c != assign[i];
                assign[i] = c;
            }
        }
        if iter > 0 && !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let mut acc = vec![0.0; center.len()];
            let mut wsum = 0.0;
            for (i, f) in feats.iter().enumerate().filter(|(i, _)| assign[*i] == c) {
                wsum += weights[i];
                for (a, v) in acc.iter_mut().zip(f) {
                    *a += weights[i] * v;
                }
            }
            if wsum == 0.0 {
                return None;
            }
            *center = acc.into_iter().map(|a| a / wsum).collect();
        }
    }
    let count1 = assign.iter().filter(|&&c| c == 1).count();
    if count1 == 0 || count1 == assign.len() {
        return None;
    }
    let mean = |c: usize| {
        weighted_mean(
            (0..ys.len())
                .filter(|&i| assign[i] == c)
                .map(|i| (ys[i], weights[i])),
        )
    };
    let good = usize::from(mean(1) >= mean(0));
    Some(assign.into_iter().map(|c| c == good).collect())
}

/// Labels records above the weighted median of y as good, keeping both
/// classes non-empty.
fn median_split(ys: &[f64], weights: &[f64]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let mut acc = 0.0;
    let mut median = ys[order[0]];
    for &i in &order {
        acc += weights[i];
        if acc >= 0.5 {
            median = ys[i];
            break;
        }
    }
    let above: Vec<bool> = ys.iter().map(|&y| y > median).collect();
    if above.iter().any(|&g| g) {
        above
    } else {
        ys.iter().map(|&y| y >= median).collect()
    }
}

/// Learns one latent action over the given records (unit coordinates).
/// `None` means the node cannot be split.
pub fn learn_latent_action(
    xs: &[&[f64]],
    ys: &[f64],
    weights: &[f64],
    seed: u64,
) -> Option<Hyperplane> {
    if xs.len() < 2 || ys.iter().all(|&y| y == ys[0]) {
        return None;
    }
    let labels = two_means(xs, ys, weights).unwrap_or_else(|| median_split(ys, weights));

    // Fit in the node's own bounding box so C = 1 means the same at every depth.
    let dim = xs[0].len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in xs {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let span: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l).max(1e-12)).collect();
    let local: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..dim).map(|j| (x[j] - lo[j]) / span[j]).collect())
        .collect();
    let local_refs: Vec<&[f64]> = local.iter().map(Vec::as_slice).collect();
    // Each pseudo-class carries half of the total cost, so a small good
    // cluster is not absorbed by the hinge loss of a large bad one.
    let n = xs.len() as f64;
    let class_weight = |good: bool| {
        (0..xs.len())
            .filter(|&i| labels[i] == good)
            .map(|i| weights[i])
            .sum::<f64>()
    };
    let (wg, wb) = (class_weight(true), class_weight(false));
    let mut plane = None;
    for boost in [1.0, 10.0, 100.0, 1000.0] {
        let cost: Vec<f64> = (0..xs.len())
            .map(|i| boost * n * weights[i] / (2.0 * if labels[i] { wg } else { wb }))
            .collect();
        let (wl, bl) = svm::train(&local_refs, &labels, &cost, seed);
        let w: Vec<f64> = wl.iter().zip(&span).map(|(a, s)| a / s).collect();
        let b = bl - wl.iter().zip(&lo).zip(&span).map(|((a, l), s)| a * l / s).sum::<f64>();
        let candidate = Hyperplane { w, b };
        let good = xs.iter().filter(|x| candidate.is_good(x)).count();
        if good > 0 && good < xs.len() && candidate.w.iter().any(|v| *v != 0.0) {
            plane = Some(candidate);
            break;
        }
    }
    let mut plane = plane?;

    let good_mean = |p: &Hyperplane| {
        let (mut g, mut bd) = (Vec::new(), Vec::new());
        for i in 0..xs.len() {
            if p.is_good(xs[i]) { &mut g } else { &mut bd }.push((ys[i], weights[i]));
        }
        if g.is_empty() || bd.is_empty() {
            None
        } else {
            Some(weighted_mean(g.into_iter()) - weighted_mean(bd.into_iter()))
        }
    };
    match good_mean(&plane) {
        None => return None,
        Some(d) if d >= 0.0 => {}
        Some(_) => {
            plane = plane.flipped();
            if good_mean(&plane)? < 0.0 {
                return None;
            }
        }
    }
    Some(plane)
}

fn split_seed(seed: u64, node: usize) -> u64 {
    seed ^ (node as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Computes `ρ` at every record and builds the tree.
pub fn treeify(dataset: &Dataset, density: &DensityModel, params: &TreeParams) -> PartitionTree {
    let rho: Vec<f64> = dataset
        .unit_points()
        .iter()
        .map(|u| density.density_at(u))
        .collect();
    treeify_with_rho(dataset, rho, params)
}

/// Builds the tree from precomputed per-record densities.
pub fn treeify_with_rho(dataset: &Dataset, rho: Vec<f64>, params: &TreeParams) -> PartitionTree {
    assert_eq!(rho.len(), dataset.len());
    let ys: Vec<f64> = dataset.ys().collect();
    let mut tree = PartitionTree {
        nodes: Vec::new(),
        leaves: Vec::new(),
        rho,
        ys,
        weighting: params.weighting,
    };
    let root = tree.new_node(None, 0, (0..dataset.len()).collect());
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let node = &tree.nodes[id];
        if node.records.len() < params.leafsize || node.depth >= params.max_depth {
            continue;
        }
        let recs = &node.records;
        let xs: Vec<&[f64]> = recs.iter().map(|&i| dataset.unit(i)).collect();
        let ys: Vec<f64> = recs.iter().map(|&i| tree.ys[i]).collect();
        let rho: Vec<f64> = recs.iter().map(|&i| tree.rho[i]).collect();
        let weights = weights_for(&rho, params.weighting);
        let Some(plane) = learn_latent_action(&xs, &ys, &weights, split_seed(params.seed, id)) else {
            continue;
        };
        let (good, bad): (Vec<usize>, Vec<usize>) =
            recs.iter().partition(|&&i| plane.is_good(dataset.unit(i)));
        let depth = node.depth + 1;
        let g = tree.new_node(Some(id), depth, good);
        let b = tree.new_node(Some(id), depth, bad);
        tree.nodes[id].separator = Some(plane);
        tree.nodes[id].children = Some((g, b));
        stack.push(b);
        stack.push(g);
    }
    tree.leaves = tree.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect();
    tree
}

impl PartitionTree {
    fn new_node(&mut self, parent: Option<usize>, depth: usize, records: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let mut stats = NodeStats::default();
        for &i in &records {
            stats.add(self.ys[i], self.rho[i]);
        }
        self.nodes.push(TreeNode {
            id,
            parent,
            depth,
            records,
            separator: None,
            children: None,
            stats,
        });
        id
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Leaf ids in ascending order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Density recorded for record `i` when it entered the tree.
    pub fn rho(&self, i: usize) -> f64 {
        self.rho[i]
    }

    /// Weights of a node's records, in `records` order.
    pub fn node_weights(&self, id: usize) -> Vec<f64> {
        let rho: Vec<f64> = self.nodes[id].records.iter().map(|&i| self.rho[i]).collect();
        weights_for(&rho, self.weighting)
    }

    /// Weighted mean objective of a node under the tree's weighting.
    pub fn value(&self, id: usize) -> f64 {
        let s = &self.nodes[id].stats;
        match self.weighting {
            Weighting::InverseDensity => s.weighted_mean_y(),
            Weighting::Uniform => s.mean_y(),
        }
    }

    /// The leaf whose region contains `u`.
    pub fn route(&self, u: &[f64]) -> usize {
        let mut id = 0;
        while let (Some(plane), Some((g, b))) = (&self.nodes[id].separator, self.nodes[id].children) {
            id = if plane.is_good(u) { g } else { b };
        }
        id
    }

    /// Whether `u` satisfies every side constraint on the root→leaf path.
    pub fn leaf_membership(&self, leaf: usize, u: &[f64]) -> bool {
        let mut id = leaf;
        while let Some(p) = self.nodes[id].parent {
            let parent = &self.nodes[p];
            let (g, _) = parent.children.expect("parent has children");
            let plane = parent.separator.as_ref().expect("parent has separator");
            if plane.is_good(u) != (id == g) {
                return false;
            }
            id = p;
        }
        true
    }

    /// Routes a new record (dataset index `index`) to its leaf and updates
    /// statistics along the path. Returns the leaf id.
    pub fn backpropagate(&mut self, index: usize, u: &[f64], y: f64, rho: f64) -> usize {
        assert_eq!(index, self.ys.len(), "records must be added in order");
        self.ys.push(y);
        self.rho.push(rho);
        let mut id = 0;
        loop {
            let node = &mut self.nodes[id];
            node.records.push(index);
            node.stats.add(y, rho);
            match (&node.separator, node.children) {
                (Some(plane), Some((g, b))) => id = if plane.is_good(u) { g } else { b },
                _ => return id,
            }
        }
    }

    /// Recomputes a node's statistics from its record set.
    pub fn recompute_stats(&self, id: usize) -> NodeStats {
        let mut s = NodeStats::default();
        for &i in &self.nodes[id].records {
            s.add(self.ys[i], self.rho[i]);
        }
        s
    }

    /// One JSON object per node, for inspection.
    pub fn dump(&self) -> String {
        self.nodes
            .iter()
            .map(|n| serde_json::to_string(n).expect("node serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

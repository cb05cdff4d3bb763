//! Single trust-region surrogate search confined to one leaf.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gp::{SurrogateModel, surrogate_thompson_select};
use super::sobol::SobolStream;
use super::{UnitBox, expand_candidates_around, latin_hypercube};
use crate::error::Result;
use crate::kdtree::dist2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionParams {
    pub init_points: usize,
    pub batch: usize,
    pub success_tolerance: usize,
    /// `None` means `max(5, dim)`.
    pub failure_tolerance: Option<usize>,
    /// Initial length as a fraction of the boundary extent.
    pub initial_fraction: f64,
    /// Stop once the length falls below `initial / 2^halvings`.
    pub halvings: u32,
    pub max_candidates: usize,
    /// Surrogate training points: the ones nearest the centre are kept.
    pub max_train: usize,
}

impl Default for TrustRegionParams {
    fn default() -> Self {
        Self {
            init_points: 30,
            batch: 5,
            success_tolerance: 3,
            failure_tolerance: None,
            initial_fraction: 0.8,
            halvings: 7,
            max_candidates: 512,
            max_train: 128,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrustRegion {
    pub center: Vec<f64>,
    pub length: Vec<f64>,
    pub success_count: usize,
    pub failure_count: usize,
    pub min_length: Vec<f64>,
}

impl TrustRegion {
    fn bounds(&self, outer: &UnitBox) -> UnitBox {
        let lo = (0..self.center.len())
            .map(|j| (self.center[j] - self.length[j] / 2.0).max(outer.0[j]))
            .collect();
        let hi = (0..self.center.len())
            .map(|j| (self.center[j] + self.length[j] / 2.0).min(outer.1[j]))
            .collect();
        (lo, hi)
    }

    fn collapsed(&self) -> bool {
        self.length.iter().zip(&self.min_length).any(|(l, m)| l < m)
    }
}

/// What a local campaign evaluated, in evaluation order (unit coordinates).
#[derive(Debug, Clone, Default)]
pub struct LocalRun {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub halved: usize,
    pub collapsed: bool,
}

fn inside(b: &UnitBox, u: &[f64]) -> bool {
    u.iter().enumerate().all(|(j, v)| *v >= b.0[j] && *v <= b.1[j])
}

/// Runs one trust-region campaign inside the leaf described by `member` and
/// its approximated `boundary`.
///
/// `history` holds the leaf's existing records (unit coordinates, values);
/// `evaluate` maps unit points to objective values and is called at most
/// `budget` times in total.
#[allow(clippy::too_many_arguments)]
pub fn trust_region_campaign(
    member: &dyn Fn(&[f64]) -> bool,
    boundary: &UnitBox,
    history: &[(Vec<f64>, f64)],
    budget: usize,
    params: &TrustRegionParams,
    seed: u64,
    evaluate: &mut dyn FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
) -> Result<LocalRun> {
    let dim = boundary.0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = SobolStream::new(dim)?.shifted(
        (0..dim)
            .map(|_| rand::Rng::random::<u32>(&mut rng))
            .collect(),
    );
    let mut run = LocalRun::default();
    let mut data: Vec<(Vec<f64>, f64)> = history.to_vec();

    // (a) Latin-hypercube initialization filtered by membership.
    let want = params.init_points.min(budget);
    let mut init = Vec::new();
    for _ in 0..20 {
        if init.len() >= want {
            break;
        }
        for p in latin_hypercube(params.init_points, boundary, &mut rng) {
            if init.len() < want && member(&p) {
                init.push(p);
            }
        }
    }
    if init.len() < want {
        let anchors: Vec<Vec<f64>> = history.iter().map(|(u, _)| u.clone()).collect();
        let extra = expand_candidates_around(member, &anchors, 2 * dim, &mut stream);
        init.extend(extra.into_iter().take(want - init.len()));
    }
    if !init.is_empty() {
        let ys = evaluate(&init)?;
        for (p, y) in init.into_iter().zip(ys) {
            run.points.push(p.clone());
            run.values.push(y);
            data.push((p, y));
        }
    }
    if data.is_empty() || run.points.len() >= budget {
        return Ok(run);
    }

    // (b) Centre on the incumbent with 0.8 of the boundary extent.
    let best = |data: &[(Vec<f64>, f64)]| {
        data.iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("non-empty")
    };
    let (center, mut incumbent) = best(&data);
    let full: Vec<f64> = (0..dim).map(|j| boundary.1[j] - boundary.0[j]).collect();
    let initial: Vec<f64> = full.iter().map(|l| l * params.initial_fraction).collect();
    let mut tr = TrustRegion {
        center,
        min_length: initial
            .iter()
            .map(|l| l / 2f64.powi(params.halvings as i32))
            .collect(),
        length: initial,
        success_count: 0,
        failure_count: 0,
    };
    let fail_tol = params.failure_tolerance.unwrap_or(dim.max(5));

    // (c) Adapt until the region collapses or the budget is spent.
    while run.points.len() < budget {
        if tr.collapsed() {
            run.collapsed = true;
            break;
        }
        let region = tr.bounds(boundary);
        let mut train: Vec<&(Vec<f64>, f64)> = data.iter().filter(|d| inside(&region, &d.0)).collect();
        if train.len() < 2 {
            train = data.iter().collect();
        }
        if train.len() > params.max_train {
            // stable sort keeps the order deterministic on distance ties
            train.sort_by(|a, b| dist2(&a.0, &tr.center).total_cmp(&dist2(&b.0, &tr.center)));
            train.truncate(params.max_train);
        }
        let n_cand = params.max_candidates.min(100 * dim).max(params.batch);
        let mut cands: Vec<Vec<f64>> = (0..n_cand)
            .map(|_| {
                let t = stream.next_point();
                (0..dim).map(|j| region.0[j] + t[j] * (region.1[j] - region.0[j])).collect()
            })
            .filter(|p: &Vec<f64>| member(p))
            .collect();
        let batch = params.batch.min(budget - run.points.len());
        if cands.len() < batch {
            let in_tr = |u: &[f64]| member(u) && inside(&region, u);
            let anchors: Vec<Vec<f64>> = train.iter().map(|d| d.0.clone()).filter(|u| in_tr(u)).collect();
            cands.extend(expand_candidates_around(&in_tr, &anchors, 2 * dim, &mut stream));
        }
        if cands.is_empty() {
            break;
        }
        let picks = if train.len() >= 2 {
            let model = SurrogateModel::fit(
                train.iter().map(|d| d.0.clone()).collect(),
                &train.iter().map(|d| d.1).collect::<Vec<_>>(),
            )?;
            surrogate_thompson_select(&model, &cands, batch, true, &mut rng)?
        } else {
            (0..batch.min(cands.len())).collect()
        };
        let chosen: Vec<Vec<f64>> = picks.iter().map(|&i| cands[i].clone()).collect();
        let ys = evaluate(&chosen)?;
        let batch_best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (p, y) in chosen.into_iter().zip(ys) {
            run.points.push(p.clone());
            run.values.push(y);
            data.push((p, y));
        }
        if batch_best > incumbent + 1e-3 * incumbent.abs() {
            tr.success_count += 1;
            tr.failure_count = 0;
        } else {
            tr.success_count = 0;
            tr.failure_count += 1;
        }
        if tr.success_count >= params.success_tolerance {
            tr.length = tr.length.iter().zip(&full).map(|(l, f)| (2.0 * l).min(*f)).collect();
            tr.success_count = 0;
        } else if tr.failure_count >= fail_tol {
            tr.length.iter_mut().for_each(|l| *l /= 2.0);
            tr.failure_count = 0;
            run.halved += 1;
        }
        let (c, v) = best(&data);
        tr.center = c;
        incumbent = incumbent.max(v);
    }
    Ok(run)
}

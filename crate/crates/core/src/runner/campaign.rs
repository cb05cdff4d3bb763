//! The LAMBDA search loop and the sampling baselines.
//!
//! Initial Sobol design → (density refresh → treeify → rounds of beam
//! selection, local sampling and backpropagation) until the budget is spent.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, CampaignConfig, LocalSampler};
use crate::density::DensityModel;
use crate::domain::{BudgetState, Dataset, Objective, evaluate_batch};
use crate::error::{Error, Result};
use crate::partition::{PartitionTree, TreeParams, Weighting, treeify};
use crate::samplers::sobol::SobolStream;
use crate::samplers::trust_region::trust_region_campaign;
use crate::samplers::{
    Proposal, approximate_boundary, expand_candidates_around, leaf_predicate, reject_sample,
};
use crate::selection::{UcbMode, select_beam};

/// Rejection proposals allowed per requested point before falling back to
/// candidate expansion around the leaf's records.
const MAX_REJECT_TRIES: usize = 20_000;

/// Hooks into a running campaign; default methods do nothing.
pub trait CampaignObserver {
    fn treeified(&mut self, _tree: &PartitionTree, _dataset: &Dataset) {}
    fn backpropagated(&mut self, _tree: &PartitionTree, _dataset: &Dataset) {}
}

pub struct NoObserver;

impl CampaignObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub dataset: Dataset,
    /// Per-record wall time in milliseconds; all zero unless timing is on.
    pub wall_ms: Vec<f64>,
    /// Set when the objective failed and the run stopped early.
    pub truncation: Option<String>,
    pub treeifications: usize,
    /// JSON-lines tree dumps, one per treeification, when enabled.
    pub trees: Vec<String>,
}

/// Derives an independent stream seed from the campaign seed (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Recorder<'a> {
    objective: &'a dyn Objective,
    dataset: Dataset,
    budget: BudgetState,
    wall_ms: Vec<f64>,
    timing: bool,
}

impl Recorder<'_> {
    /// Evaluates unit-cube points and appends them. Returns the new values.
    fn eval(&mut self, units: &[Vec<f64>]) -> Result<Vec<f64>> {
        if units.is_empty() {
            return Ok(Vec::new());
        }
        let space = self.dataset.space().clone();
        let xs: Vec<Vec<f64>> = units.iter().map(|u| space.denormalize(u)).collect();
        let t0 = Instant::now();
        let recs = evaluate_batch(self.objective, &xs, &mut self.budget)?;
        let per_point = if self.timing {
            t0.elapsed().as_secs_f64() * 1e3 / recs.len() as f64
        } else {
            0.0
        };
        let ys = recs.iter().map(|r| r.y).collect();
        self.dataset.extend(recs)?;
        self.wall_ms.resize(self.dataset.len(), per_point);
        Ok(ys)
    }

    fn exhausted(&self) -> bool {
        self.budget.is_exhausted()
    }

    fn remaining(&self) -> usize {
        self.budget.remaining()
    }
}

/// Runs the configured algorithm against `objective`. Objective failures end
/// the run early and are reported in [`CampaignOutcome::truncation`].
pub fn run_campaign(
    config: &CampaignConfig,
    objective: &dyn Objective,
    observer: &mut dyn CampaignObserver,
) -> Result<CampaignOutcome> {
    config.validate()?;
    let space = config.objective.space()?;
    let mut rec = Recorder {
        objective,
        dataset: Dataset::new(space),
        budget: BudgetState::new(config.budget),
        wall_ms: Vec::new(),
        timing: config.timing,
    };
    let mut trees = Vec::new();
    let result = match config.algorithm {
        Algorithm::Lambda | Algorithm::LambdaPredecessorMode => {
            lambda(config, &mut rec, observer, &mut trees)
        }
        Algorithm::Random | Algorithm::Sobol => baseline(config, &mut rec).map(|_| 0),
    };
    let (treeifications, truncation) = match result {
        Ok(n) => (n, None),
        Err(e @ (Error::Evaluation { .. } | Error::Protocol(_))) => {
            log::warn!("run truncated after {} records: {e}", rec.dataset.len());
            (0, Some(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    Ok(CampaignOutcome {
        dataset: rec.dataset,
        wall_ms: rec.wall_ms,
        truncation,
        treeifications,
        trees,
    })
}

fn baseline(config: &CampaignConfig, rec: &mut Recorder) -> Result<()> {
    let dim = rec.dataset.space().dim();
    const CHUNK: usize = 256;
    match config.algorithm {
        Algorithm::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 7));
            while !rec.exhausted() {
                let n = CHUNK.min(rec.remaining());
                let pts: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                    .collect();
                rec.eval(&pts)?;
            }
        }
        Algorithm::Sobol => {
            let mut s = SobolStream::new(dim)?;
            while !rec.exhausted() {
                let n = CHUNK.min(rec.remaining());
                rec.eval(&s.next_n(n))?;
            }
        }
        _ => unreachable!("not a baseline"),
    }
    Ok(())
}

struct Search<'t> {
    density: DensityModel,
    tree: &'t mut PartitionTree,
}

impl Search<'_> {
    /// Adds records `from..` of the dataset to the density model and the tree.
    fn absorb(&mut self, dataset: &Dataset, from: usize, observer: &mut dyn CampaignObserver) {
        for i in from..dataset.len() {
            let u = dataset.unit(i);
            self.density.append(u.to_vec());
            let rho = self.density.density_at(u);
            self.tree.backpropagate(i, u, dataset.record(i).y, rho);
            observer.backpropagated(self.tree, dataset);
        }
    }
}

fn lambda(
    config: &CampaignConfig,
    rec: &mut Recorder,
    observer: &mut dyn CampaignObserver,
    trees: &mut Vec<String>,
) -> Result<usize> {
    let dim = rec.dataset.space().dim();
    let predecessor = config.algorithm == Algorithm::LambdaPredecessorMode;
    let (mode, weighting, beam) = if predecessor {
        (UcbMode::One, Weighting::Uniform, 1)
    } else {
        (UcbMode::Rho, Weighting::InverseDensity, config.beam_width)
    };
    let per_selection = match config.local_sampler {
        LocalSampler::RejectSobol => config.samples_per_selection,
        LocalSampler::TrustRegion => config.trust_region.batch,
    };
    let eval_cap = config.selections_per_treeification * beam * per_selection;
    let tr_params = config.trust_region.params();

    // (1) Initial Sobol design.
    let mut init = Proposal::sobol(dim, derive_seed(config.seed, 1))?;
    let n0 = config.init_samples.min(config.budget);
    let pts: Vec<Vec<f64>> = (0..n0).map(|_| init.next_point()).collect();
    rec.eval(&pts)?;
    if rec.exhausted() {
        return Ok(0);
    }

    let mut density = DensityModel::build(rec.dataset.unit_points(), config.effective_density_k())?;
    let mut proposal = Proposal::sobol(dim, derive_seed(config.seed, 2))?;
    let mut aux = shifted_stream(dim, derive_seed(config.seed, 3))?;
    let mut cycle = 0usize;
    let mut local_runs = 0u64;

    while !rec.exhausted() {
        // (2) Treeification on a fresh density estimate.
        if density.refresh_policy(config.rebuild_interval) {
            density.rebuild(rec.dataset.unit_points())?;
        }
        let params = TreeParams {
            leafsize: config.leafsize,
            max_depth: config.depth,
            weighting,
            seed: derive_seed(config.seed, 1_000 + cycle as u64),
        };
        let mut tree = treeify(&rec.dataset, &density, &params);
        observer.treeified(&tree, &rec.dataset);
        if config.tree_dumps {
            trees.push(tree.dump());
        }
        cycle += 1;

        let mut search = Search {
            density,
            tree: &mut tree,
        };
        let start = rec.dataset.len();
        let mut rounds = 0;
        while rounds < config.selections_per_treeification
            && rec.dataset.len() - start < eval_cap
            && !rec.exhausted()
        {
            // (3) Selection over the flattened tree.
            let leaves = select_beam(search.tree, config.c_p, beam, mode);
            for leaf in leaves {
                if rec.exhausted() {
                    break;
                }
                let before = rec.dataset.len();
                // (4) Simulation inside the leaf.
                let outcome = match config.local_sampler {
                    LocalSampler::RejectSobol => {
                        let member = leaf_predicate(search.tree, leaf);
                        let n = per_selection.min(rec.remaining());
                        let mut pts = reject_sample(&member, n, &mut proposal, MAX_REJECT_TRIES).points;
                        if pts.len() < n {
                            let anchors = leaf_units(search.tree, &rec.dataset, leaf);
                            let extra = expand_candidates_around(&member, &anchors, 2 * dim, &mut aux);
                            pts.extend(extra.into_iter().take(n - pts.len()));
                        }
                        rec.eval(&pts).map(|_| ())
                    }
                    LocalSampler::TrustRegion => {
                        let member = leaf_predicate(search.tree, leaf);
                        let anchors = leaf_units(search.tree, &rec.dataset, leaf);
                        let history: Vec<(Vec<f64>, f64)> = search
                            .tree
                            .node(leaf)
                            .records
                            .iter()
                            .map(|&i| (rec.dataset.unit(i).to_vec(), rec.dataset.record(i).y))
                            .collect();
                        let boundary = approximate_boundary(&member, &anchors, &mut aux);
                        let local_budget = config.trust_region.local_budget.min(rec.remaining());
                        local_runs += 1;
                        trust_region_campaign(
                            &member,
                            &boundary,
                            &history,
                            local_budget,
                            &tr_params,
                            derive_seed(config.seed, 1 << 32 | local_runs),
                            &mut |pts| rec.eval(pts),
                        )
                        .map(|_| ())
                    }
                };
                // (5) Back-propagation, also of whatever a failing sampler
                // evaluated before the failure.
                search.absorb(&rec.dataset, before, observer);
                outcome?;
            }
            rounds += 1;
        }
        density = search.density;
        if rec.dataset.len() == start && !rec.exhausted() {
            // No leaf yielded a point: spend one global proposal to move on.
            log::debug!("selection cycle {cycle} produced nothing; sampling globally");
            let p = proposal.next_point();
            rec.eval(&[p])?;
            density.append(rec.dataset.unit(rec.dataset.len() - 1).to_vec());
        }
    }
    Ok(cycle)
}

fn leaf_units(tree: &PartitionTree, dataset: &Dataset, leaf: usize) -> Vec<Vec<f64>> {
    tree.node(leaf)
        .records
        .iter()
        .map(|&i| dataset.unit(i).to_vec())
        .collect()
}

fn shifted_stream(dim: usize, seed: u64) -> Result<SobolStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(SobolStream::new(dim)?.shifted((0..dim).map(|_| rng.random::<u32>()).collect()))
}

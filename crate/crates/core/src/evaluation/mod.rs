//! Coverage scoring: regress the sample history, classify a validation grid
//! and compare against ground truth with the F2 score.
//!
//! The evaluator only sees a dataset prefix and a validation set, so it can
//! score any algorithm's record stream after the fact.

pub mod grid;
pub mod regressor;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Objective, SearchSpace};
use crate::error::{Error, Result};
pub use grid::{GroundTruth, axis_values, connected_components, grid_points};
pub use regressor::{Regressor, fit_regressor};

/// Where validation labels come from.
pub enum TruthSource<'a> {
    Objective(&'a dyn Objective),
    /// Precomputed grid values; labels are recomputed with the requested delta.
    Grid(&'a GroundTruth),
}

/// Labelled grid over the search space.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub space: SearchSpace,
    pub resolution: Vec<usize>,
    pub delta: f64,
    pub points: Vec<Vec<f64>>,
    /// Same points in unit-cube coordinates.
    pub unit: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub truth: Vec<bool>,
}

impl ValidationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.truth.iter().filter(|&&t| t).count()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.positives() as f64 / self.len() as f64
    }

    /// Face-connected critical regions on the grid.
    pub fn critical_regions(&self) -> usize {
        connected_components(&self.resolution, &self.truth).1
    }
}

pub fn build_validation_set(
    space: &SearchSpace,
    resolution: &[usize],
    source: TruthSource<'_>,
    delta: f64,
) -> Result<ValidationSet> {
    let points = grid_points(space, resolution)?;
    let values = match source {
        TruthSource::Objective(f) => f.evaluate_batch(&points)?,
        TruthSource::Grid(gt) => {
            if gt.resolution != resolution {
                return Err(Error::TruthShape(format!(
                    "truth grid is {:?}, validation wants {resolution:?}",
                    gt.resolution
                )));
            }
            if gt.space != *space {
                return Err(Error::TruthShape(format!(
                    "truth grid bounds {:?}..{:?} differ from the search space",
                    gt.space.lower(),
                    gt.space.upper()
                )));
            }
            gt.values.clone()
        }
    };
    let unit = points
        .iter()
        .map(|p| space.normalize(p))
        .collect::<Result<_>>()?;
    let truth = values.iter().map(|&y| y > delta).collect();
    Ok(ValidationSet {
        space: space.clone(),
        resolution: resolution.to_vec(),
        delta,
        points,
        unit,
        values,
        truth,
    })
}

/// Strict threshold; undefined predictions are non-critical.
pub fn classify(regressor: &Regressor, delta: f64, unit_points: &[Vec<f64>]) -> Vec<bool> {
    unit_points
        .iter()
        .map(|u| regressor.predict(u).is_some_and(|y| y > delta))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[bool], truth: &[bool]) -> Self {
        assert_eq!(predictions.len(), truth.len(), "prediction/truth length");
        let mut c = Self::default();
        for (&p, &t) in predictions.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }
}

/// F-beta with beta = 2.
pub fn f2_score(precision: f64, recall: f64) -> f64 {
    let den = 4.0 * precision + recall;
    if den > 0.0 {
        5.0 * precision * recall / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub counts: ConfusionCounts,
    pub recall: f64,
    pub precision: f64,
    pub f2: f64,
    pub budget_used: usize,
}

impl CoverageReport {
    pub fn from_counts(counts: ConfusionCounts, budget_used: usize) -> Self {
        let (recall, precision) = (counts.recall(), counts.precision());
        Self {
            counts,
            recall,
            precision,
            f2: f2_score(precision, recall),
            budget_used,
        }
    }
}

pub fn confusion_and_metrics(predictions: &[bool], truth: &[bool]) -> CoverageReport {
    CoverageReport::from_counts(ConfusionCounts::from_predictions(predictions, truth), 0)
}

/// Scores the first `n` records of `dataset`.
pub fn score_prefix(dataset: &Dataset, n: usize, validation: &ValidationSet) -> Result<CoverageReport> {
    let n = n.min(dataset.len());
    let ys: Vec<f64> = dataset.records()[..n].iter().map(|r| r.y).collect();
    let reg = fit_regressor(&dataset.unit_points()[..n], &ys)?;
    let pred = classify(&reg, validation.delta, &validation.unit);
    let counts = ConfusionCounts::from_predictions(&pred, &validation.truth);
    Ok(CoverageReport::from_counts(counts, n))
}

/// One point on the F2-vs-budget curve. `report` is `None` when the prefix
/// was too small to fit a regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub budget: usize,
    pub report: Option<CoverageReport>,
}

/// Budgets at every multiple of `cadence`, plus the full length.
pub fn checkpoint_budgets(len: usize, cadence: usize) -> Vec<usize> {
    let cadence = cadence.max(1);
    let mut out: Vec<usize> = (1..=len / cadence).map(|i| i * cadence).collect();
    if len > 0 && out.last() != Some(&len) {
        out.push(len);
    }
    out
}

/// Fits a regressor on every checkpoint prefix and scores it. Checkpoints are
/// independent and are spread over the available cores.
pub fn f2_checkpoints(
    dataset: &Dataset,
    validation: &ValidationSet,
    cadence: usize,
) -> Result<Vec<Checkpoint>> {
    if cadence == 0 {
        return Err(Error::Config("checkpoint cadence must be at least 1".into()));
    }
    let budgets = checkpoint_budgets(dataset.len(), cadence);
    let min_fit = dataset.space().dim() + 1;
    let score = |b: usize| -> Result<Checkpoint> {
        if b < min_fit {
            return Ok(Checkpoint {
                budget: b,
                report: None,
            });
        }
        match score_prefix(dataset, b, validation) {
            Ok(r) => Ok(Checkpoint {
                budget: b,
                report: Some(r),
            }),
            Err(Error::Numerical(msg)) => {
                log::debug!("checkpoint {b} skipped: {msg}");
                Ok(Checkpoint {
                    budget: b,
                    report: None,
                })
            }
            Err(e) => Err(e),
        }
    };
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(budgets.len().max(1));
    if workers <= 1 {
        return budgets.into_iter().map(score).collect();
    }
    let mut slots: Vec<Option<Result<Checkpoint>>> = (0..budgets.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = slots
            .chunks_mut(budgets.len().div_ceil(workers))
            .enumerate()
            .collect();
        let chunk_len = budgets.len().div_ceil(workers);
        for (ci, chunk) in chunks {
            let budgets = &budgets;
            let score = &score;
            s.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(score(budgets[ci * chunk_len + j]));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

/// `budget,recall,precision,f2`; skipped checkpoints become `# skipped` lines.
pub fn write_metrics_csv(out: impl Write, checkpoints: &[Checkpoint]) -> Result<()> {
    let mut out = out;
    writeln!(out, "budget,recall,precision,f2")?;
    for c in checkpoints {
        match &c.report {
            Some(r) => writeln!(out, "{},{},{},{}", c.budget, r.recall, r.precision, r.f2)?,
            None => writeln!(out, "# skipped budget={}", c.budget)?,
        }
    }
    Ok(())
}

/// Reads back what [`write_metrics_csv`] wrote, as `(budget, recall, precision, f2)`.
pub fn read_metrics_csv(input: impl std::io::Read) -> Result<Vec<(usize, f64, f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SampleRecord;
    use crate::objectives::{HolderTable, holder_table};
    use proptest::prelude::*;

    fn holder_validation(res: usize) -> ValidationSet {
        build_validation_set(
            &HolderTable::space(),
            &[res, res],
            TruthSource::Objective(&holder_table),
            18.0,
        )
        .unwrap()
    }

    #[test]
    fn holder_grid_has_four_sparse_clusters() {
        let v = holder_validation(100);
        assert_eq!(v.len(), 10_000);
        assert_eq!(v.critical_regions(), 4);
        assert!(v.positive_fraction() > 0.0 && v.positive_fraction() < 0.05);
    }

    #[test]
    fn delta_above_max_has_no_positives() {
        let v = build_validation_set(
            &HolderTable::space(),
            &[30, 30],
            TruthSource::Objective(&holder_table),
            20.0,
        )
        .unwrap();
        assert_eq!(v.positives(), 0);
    }

    #[test]
    fn truth_grid_must_match() {
        let gt = GroundTruth::generate(&holder_table, &HolderTable::space(), &[10, 10], 18.0)
            .unwrap();
        let ok = build_validation_set(&HolderTable::space(), &[10, 10], TruthSource::Grid(&gt), 18.0);
        assert!(ok.is_ok());
        let bad = build_validation_set(&HolderTable::space(), &[10, 11], TruthSource::Grid(&gt), 18.0);
        assert!(matches!(bad, Err(Error::TruthShape(_))));
    }

    #[test]
    fn f2_arithmetic() {
        let c = ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 0,
            tn: 7,
        };
        let r = CoverageReport::from_counts(c, 0);
        assert_eq!(r.precision, 2.0 / 3.0);
        assert_eq!(r.recall, 1.0);
        assert!((r.f2 - 10.0 / 11.0).abs() < 1e-15);

        let perfect = confusion_and_metrics(&[true, false, true], &[true, false, true]);
        assert_eq!((perfect.recall, perfect.precision, perfect.f2), (1.0, 1.0, 1.0));

        let miss = confusion_and_metrics(&[false, false], &[true, false]);
        assert_eq!((miss.recall, miss.f2), (0.0, 0.0));
    }

    #[test]
    fn equal_to_delta_is_not_critical() {
        let us = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.9, 0.8],
            vec![0.4, 0.6],
        ];
        let reg = fit_regressor(&us, &[5.0; 5]).unwrap();
        assert_eq!(reg.kind(), "simplicial");
        assert_eq!(classify(&reg, 5.0, &[vec![0.5, 0.5]]), vec![false]);
        assert_eq!(classify(&reg, 4.0, &[vec![0.5, 0.5], vec![0.95, 0.95]]), vec![true, false]);
    }

    #[test]
    fn all_positive_classifier() {
        let v = holder_validation(100);
        let r = confusion_and_metrics(&vec![true; v.len()], &v.truth);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.precision, v.positive_fraction());
    }

    #[test]
    fn exhaustive_grid_reconstructs_holder() {
        let v = holder_validation(100);
        let mut ds = Dataset::new(HolderTable::space());
        for x in grid_points(&HolderTable::space(), &[200, 200]).unwrap() {
            let y = holder_table(&x);
            ds.push(SampleRecord { x, y }).unwrap();
        }
        let cps = f2_checkpoints(&ds, &v, 40_000).unwrap();
        assert_eq!(cps.len(), 1);
        let f2 = cps[0].report.unwrap().f2;
        assert!(f2 >= 0.99, "f2 = {f2}");
    }

    #[test]
    fn checkpoint_schedule() {
        assert_eq!(checkpoint_budgets(100, 10).len(), 10);
        assert_eq!(checkpoint_budgets(105, 10).last(), Some(&105));
        assert_eq!(checkpoint_budgets(5, 10), vec![5]);
        assert!(checkpoint_budgets(0, 10).is_empty());
    }

    #[test]
    fn checkpoints_skip_tiny_prefixes() {
        let v = holder_validation(20);
        let mut ds = Dataset::new(HolderTable::space());
        for i in 0..25 {
            let x = vec![-9.0 + 0.7 * i as f64, 9.0 - 0.73 * (i * i % 25) as f64];
            let y = holder_table(&x);
            ds.push(SampleRecord { x, y }).unwrap();
        }
        let cps = f2_checkpoints(&ds, &v, 2).unwrap();
        assert!(cps[0].report.is_none());
        assert!(cps.iter().skip(2).all(|c| c.report.is_some()));
        assert_eq!(cps.last().unwrap().budget, 25);
        assert!(cps.windows(2).all(|w| w[0].budget < w[1].budget));

        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &cps).unwrap();
        let rows = read_metrics_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), cps.iter().filter(|c| c.report.is_some()).count());
    }

    proptest! {
        #[test]
        fn flipping_fn_to_tp_never_hurts(
            pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200),
            pick in any::<proptest::sample::Index>(),
        ) {
            let (mut pred, truth): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let before = confusion_and_metrics(&pred, &truth);
            let misses: Vec<usize> = (0..pred.len()).filter(|&i| truth[i] && !pred[i]).collect();
            prop_assume!(!misses.is_empty());
            pred[misses[pick.index(misses.len())]] = true;
            let after = confusion_and_metrics(&pred, &truth);
            prop_assert!(after.recall >= before.recall);
            prop_assert!(after.f2 >= before.f2);
        }

        #[test]
        fn recall_emphasis(a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
            // Same product P·R; the pair with the larger recall scores higher.
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(f2_score(lo, hi) > f2_score(hi, lo));
        }

        #[test]
        fn counts_partition_the_set(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..100)) {
            let (pred, truth): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let r = confusion_and_metrics(&pred, &truth);
            prop_assert_eq!(r.counts.total(), pred.len());
            for m in [r.recall, r.precision, r.f2] {
                prop_assert!((0.0..=1.0).contains(&m));
            }
        }
    }
}

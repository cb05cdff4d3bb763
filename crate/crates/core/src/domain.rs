//! Core problem types: the box-shaped search space, evaluation records and
//! the budgeted evaluation entry point.
//!
//! All partitioning, density and surrogate geometry works in unit-cube
//! coordinates; objectives are always called with raw coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounded box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidSpace("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidSpace(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSpace(format!(
                    "dimension {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn unit(dim: usize) -> Self {
        Self::cube(dim, 0.0, 1.0).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Boundary points are inside.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutOfBounds { point: x.to_vec() });
        }
        Ok(())
    }

    /// Raw point to unit-cube coordinates.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x
            .iter()
            .enumerate()
            .map(|(i, v)| ((v - self.lower[i]) / self.width(i)).clamp(0.0, 1.0))
            .collect())
    }

    /// Unit-cube point back to raw coordinates. Inputs are clamped to the cube.
    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.dim());
        u.iter()
            .enumerate()
            .map(|(i, v)| {
                let t = v.clamp(0.0, 1.0);
                if t == 1.0 {
                    self.upper[i]
                } else {
                    self.lower[i] + t * self.width(i)
                }
            })
            .collect()
    }
}

/// One evaluated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Append-only evaluation history. Insertion order is evaluation order.
#[derive(Debug, Clone)]
pub struct Dataset {
    space: SearchSpace,
    records: Vec<SampleRecord>,
    unit: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(space: SearchSpace) -> Self {
        Self {
            space,
            records: Vec::new(),
            unit: Vec::new(),
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: SampleRecord) -> Result<()> {
        let u = self.space.normalize(&record.x)?;
        self.records.push(record);
        self.unit.push(u);
        Ok(())
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = SampleRecord>) -> Result<()> {
        for r in records {
            self.push(r)?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SampleRecord {
        &self.records[i]
    }

    /// Normalized coordinates of record `i`.
    pub fn unit(&self, i: usize) -> &[f64] {
        &self.unit[i]
    }

    pub fn unit_points(&self) -> &[Vec<f64>] {
        &self.unit
    }

    pub fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.y)
    }

    /// The first `n` records as a new dataset.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            space: self.space.clone(),
            records: self.records[..n].to_vec(),
            unit: self.unit[..n].to_vec(),
        }
    }
}

/// `objective(x) > delta`, strictly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub delta: f64,
}

impl Criterion {
    pub fn new(delta: f64) -> Self {
        Self { delta }
    }

    pub fn is_critical(&self, y: f64) -> bool {
        y > self.delta
    }
}

/// An objective together with its criticality threshold.
pub struct BlackBoxInequality<'a> {
    pub objective: &'a dyn Objective,
    pub criterion: Criterion,
}

impl BlackBoxInequality<'_> {
    pub fn is_critical(&self, x: &[f64]) -> Result<bool> {
        Ok(self.criterion.is_critical(self.objective.evaluate(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetState {
    pub total: usize,
    pub used: usize,
}

impl BudgetState {
    pub fn new(total: usize) -> Self {
        Self { total, used: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.total - self.used
    }

    pub fn is_exhausted(&self) -> bool {
        self.used >= self.total
    }

    fn reserve(&mut self, n: usize) -> Result<()> {
        if n > self.remaining() {
            return Err(Error::BudgetExhausted {
                requested: n,
                remaining: self.remaining(),
            });
        }
        self.used += n;
        Ok(())
    }
}

/// A deterministic black-box function over raw coordinates.
pub trait Objective: Send + Sync {
    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    /// Evaluate several points; results are in input order.
    fn evaluate_batch(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.iter().map(|p| self.evaluate(p)).collect()
    }
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

/// Evaluates `points` (raw coordinates) against the budget. On success one
/// record per point is returned in input order and the budget is charged.
pub fn evaluate_batch(
    objective: &dyn Objective,
    points: &[Vec<f64>],
    budget: &mut BudgetState,
) -> Result<Vec<SampleRecord>> {
    if points.len() > budget.remaining() {
        return Err(Error::BudgetExhausted {
            requested: points.len(),
            remaining: budget.remaining(),
        });
    }
    let ys = objective.evaluate_batch(points).map_err(|e| match e {
        e @ Error::Evaluation { .. } => e,
        other => Error::Evaluation {
            point: points.first().cloned().unwrap_or_default(),
            reason: other.to_string(),
        },
    })?;
    if ys.len() != points.len() {
        return Err(Error::Protocol(format!(
            "objective returned {} values for {} points",
            ys.len(),
            points.len()
        )));
    }
    if let Some(i) = ys.iter().position(|y| y.is_nan()) {
        return Err(Error::Evaluation {
            point: points[i].clone(),
            reason: "objective returned NaN".into(),
        });
    }
    budget.reserve(points.len())?;
    Ok(points
        .iter()
        .cloned()
        .zip(ys)
        .map(|(x, y)| SampleRecord { x, y })
        .collect())
}

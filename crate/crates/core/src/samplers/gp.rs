//! Exact GP regression with an isotropic squared-exponential kernel, used as
//! the local surrogate for Thompson sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kdtree::dist2;

const LOG_LS_MIN: f64 = -5.298_317_366_548_036; // ln 0.005
const LOG_LS_MAX: f64 = std::f64::consts::LN_2;
const JITTERS: [f64; 3] = [1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    xs: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    pub length_scale: f64,
    pub noise: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn kernel(a: &[f64], b: &[f64], ls: f64) -> f64 {
    (-0.5 * dist2(a, b) / (ls * ls)).exp()
}

fn gram(xs: &[Vec<f64>], ls: f64, noise: f64) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| kernel(&xs[i], &xs[j], ls) + if i == j { noise } else { 0.0 })
}

fn factor(xs: &[Vec<f64>], ls: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    JITTERS
        .iter()
        .find_map(|&noise| Cholesky::new(gram(xs, ls, noise)).map(|c| (c, noise)))
}

fn log_likelihood(xs: &[Vec<f64>], y: &DVector<f64>, log_ls: f64) -> f64 {
    let Some((chol, _)) = factor(xs, log_ls.exp()) else {
        return f64::NEG_INFINITY;
    };
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    -0.5 * y.dot(&alpha) - 0.5 * log_det
}

/// Golden-section maximization of `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd { (c, fc) } else { (d, fd) }
}

impl SurrogateModel {
    /// Fits on unit-cube inputs. The length-scale maximizes the marginal
    /// likelihood over three sub-intervals of `[0.005, 2]` (one golden-section
    /// search each); targets are standardized.
    pub fn fit(xs: Vec<Vec<f64>>, ys: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::Numerical("surrogate needs at least 2 points".into()));
        }
        let n = ys.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - y_mean) / y_std));

        let third = (LOG_LS_MAX - LOG_LS_MIN) / 3.0;
        let (log_ls, _) = (0..3)
            .map(|k| {
                let a = LOG_LS_MIN + k as f64 * third;
                golden_max(|t| log_likelihood(&xs, &y, t), a, a + third, 20)
            })
            .fold((LOG_LS_MIN, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 { cur } else { best }
            });
        let length_scale = log_ls.exp();
        let (chol, noise) = factor(&xs, length_scale)
            .ok_or_else(|| Error::Numerical("kernel matrix not positive definite".into()))?;
        let alpha = chol.solve(&y);
        Ok(Self {
            xs,
            y_mean,
            y_std,
            length_scale,
            noise,
            chol,
            alpha,
        })
    }

    fn cross(&self, cands: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(self.xs.len(), cands.len(), |i, j| {
            kernel(&self.xs[i], &cands[j], self.length_scale)
        })
    }

    /// Posterior mean in original units.
    pub fn mean(&self, cands: &[Vec<f64>]) -> Vec<f64> {
        let ks = self.cross(cands);
        (ks.transpose() * &self.alpha)
            .iter()
            .map(|m| self.y_mean + self.y_std * m)
            .collect()
    }

    /// One joint posterior draw over `cands`, in original units.
    pub fn sample(&self, cands: &[Vec<f64>], rng: &mut impl Rng) -> Result<Vec<f64>> {
        let ks = self.cross(cands);
        let mean = ks.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let m = cands.len();
        let prior = DMatrix::from_fn(m, m, |i, j| kernel(&cands[i], &cands[j], self.length_scale));
        let cov = prior - v.transpose() * v;
        let l = JITTERS
            .iter()
            .find_map(|&j| Cholesky::new(&cov + DMatrix::identity(m, m) * j))
            .ok_or_else(|| Error::Numerical("posterior covariance not positive definite".into()))?;
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let f = mean + l.l() * z;
        Ok(f.iter().map(|v| self.y_mean + self.y_std * v).collect())
    }
}

/// Thompson sampling: indices of the `n_select` best candidates under one
/// joint posterior draw, best first.
pub fn surrogate_thompson_select(
    model: &SurrogateModel,
    candidates: &[Vec<f64>],
    n_select: usize,
    maximize: bool,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if n_select >= candidates.len() {
        return Ok((0..candidates.len()).collect());
    }
    let draw = model.sample(candidates, rng)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let o = draw[b].total_cmp(&draw[a]);
        (if maximize { o } else { o.reverse() }).then(a.cmp(&b))
    });
    order.truncate(n_select);
    Ok(order)
}

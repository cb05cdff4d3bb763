//! Built-in benchmark objectives and the external ask/tell evaluator.

pub mod protocol;
pub mod scenario;

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::domain::{Objective, SearchSpace};
use crate::error::{Error, Result};

fn check(space: &SearchSpace, x: &[f64]) -> Result<()> {
    if x.len() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: x.len(),
        });
    }
    if !space.contains(x) {
        return Err(Error::OutOfBounds { point: x.to_vec() });
    }
    Ok(())
}

/// `|sin x₁ cos x₂ exp(|1 − ‖x‖/π|)|` on `[−10, 10]²`.
pub fn holder_table(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let r = (x1 * x1 + x2 * x2).sqrt();
    (x1.sin() * x2.cos() * (1.0 - r / PI).abs().exp()).abs()
}

/// The four global maximizers.
pub const HOLDER_MAXIMA: [[f64; 2]; 4] = [
    [8.05502, 9.66459],
    [8.05502, -9.66459],
    [-8.05502, 9.66459],
    [-8.05502, -9.66459],
];

#[derive(Debug, Clone, Copy, Default)]
pub struct HolderTable;

impl HolderTable {
    pub fn space() -> SearchSpace {
        SearchSpace::cube(2, -10.0, 10.0).expect("valid box")
    }
}

impl Objective for HolderTable {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check(&Self::space(), x)?;
        Ok(holder_table(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RipplesParams {
    pub dim: usize,
    pub bias: f64,
    pub sigma: f64,
    pub k: f64,
    pub omega: f64,
}

impl Default for RipplesParams {
    fn default() -> Self {
        Self {
            dim: 2,
            bias: 3.0,
            sigma: 1.0,
            k: 0.1,
            omega: 2.0 * SQRT_2,
        }
    }
}

impl RipplesParams {
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("ripples dim must be at least 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("ripples sigma must be positive".into()));
        }
        let m = self.omega / SQRT_2;
        if !(m >= 1.0 && (m - m.round()).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "ripples omega must be a positive multiple of √2, got {}",
                self.omega
            )));
        }
        Ok(())
    }

    /// One modality centre per axis: `−bias·eᵢ`.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| {
                let mut c = vec![0.0; self.dim];
                c[i] = -self.bias;
                c
            })
            .collect()
    }
}

/// `Σᵢ exp(−rᵢ²/2σ²) + k·cos(ω rᵢ) − k` with `rᵢ = ‖x + bias·eᵢ‖`.
pub fn ripples(x: &[f64], p: &RipplesParams) -> f64 {
    let base: f64 = x.iter().map(|v| v * v).sum();
    (0..x.len())
        .map(|i| {
            // ‖x + b eᵢ‖² = ‖x‖² + 2 b xᵢ + b²
            let r = (base + 2.0 * p.bias * x[i] + p.bias * p.bias).max(0.0).sqrt();
            (-r * r / (2.0 * p.sigma * p.sigma)).exp() + p.k * (p.omega * r).cos() - p.k
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct Ripples {
    pub params: RipplesParams,
    space: SearchSpace,
}

impl Ripples {
    pub fn new(params: RipplesParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            space: Self::space(params.dim),
        })
    }

    pub fn space(dim: usize) -> SearchSpace {
        SearchSpace::cube(dim, -5.0, 5.0).expect("valid box")
    }
}

impl Objective for Ripples {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check(&self.space, x)?;
        Ok(ripples(x, &self.params))
    }
}

/// Time to collision: `gap / (v_follow − v_lead)`; +∞ without closing speed,
/// 0 once the vehicles overlap.
pub fn ttc(gap: f64, v_follow: f64, v_lead: f64) -> f64 {
    if gap < 0.0 {
        0.0
    } else if v_follow > v_lead && gap > 0.0 {
        gap / (v_follow - v_lead)
    } else if v_follow < v_lead || gap > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // scalar re-implementations written from the formulas, not shared code
    fn holder_oracle(x1: f64, x2: f64) -> f64 {
        let e = (1.0 - f64::hypot(x1, x2) / PI).abs();
        (x1.sin() * x2.cos()).abs() * e.exp()
    }

    fn g(r: f64) -> f64 {
        (-r * r / 2.0).exp() + 0.1 * (2.0 * SQRT_2 * r).cos() - 0.1
    }

    fn ripples_oracle(x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..x.len() {
            let mut shifted = x.to_vec();
            shifted[i] += 3.0;
            total += g(shifted.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        total
    }

    #[test]
    fn holder_values() {
        assert!((holder_table(&[8.05502, 9.66459]) - 19.2085).abs() < 1e-3);
        assert_eq!(holder_table(&[0.0, 0.0]), 0.0);
        assert!((holder_table(&[1.0, 1.0]) - holder_oracle(1.0, 1.0)).abs() < 1e-10);
        for m in HOLDER_MAXIMA {
            assert!((holder_table(&m) - 19.2085).abs() < 1e-3);
        }
        assert!(HolderTable.evaluate(&[10.5, 0.0]).is_err());
    }

    #[test]
    fn ripples_values() {
        let p = RipplesParams::default();
        let at_center = ripples(&[-3.0, 0.0], &p);
        let want = 1.0 + g(3.0 * SQRT_2);
        assert!((at_center - want).abs() < 1e-12);
        assert!((at_center - 0.985).abs() < 1e-3);
        let origin = ripples(&[0.0, 0.0], &p);
        assert!((origin - 2.0 * g(3.0)).abs() < 1e-12);
        assert!((origin + 0.295).abs() < 1e-3);
        assert!(Ripples::new(RipplesParams { omega: 2.5, ..p }).is_err());
        assert!(Ripples::new(RipplesParams { sigma: 0.0, ..p }).is_err());
        assert!(Ripples::new(RipplesParams { omega: 3.0 * SQRT_2, ..p }).is_ok());
    }

    #[test]
    fn ttc_cases() {
        assert_eq!(ttc(50.0, 30.0, 20.0), 5.0);
        assert_eq!(ttc(50.0, 20.0, 30.0), f64::INFINITY);
        assert_eq!(ttc(-1.0, 30.0, 20.0), 0.0);
        assert_eq!(ttc(10.0, 20.0, 20.0), f64::INFINITY);
    }

    // The cross terms g(bias·√2) have non-zero slope, so the exact maximum
    // sits slightly off −bias·eᵢ; each stated centre is checked to lie within
    // 0.1·√(dim−1) of the neighbourhood maximum, within 0.01·(dim−1) of its
    // value, and above
    // every point on the radius-0.5 shell.
    #[test]
    fn ripples_modalities_are_local_peaks() {
        use rand::{Rng, SeedableRng};
        for dim in 2..=5 {
            let p = RipplesParams::with_dim(dim);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(dim as u64);
            for c in p.centers() {
                let at_center = ripples(&c, &p);
                let mut best = (f64::NEG_INFINITY, c.clone());
                for k in 0..10_000 {
                    let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let shell = k % 2 == 0;
                    let r = if shell { 0.5 } else { 0.5 * rng.random::<f64>().powf(1.0 / dim as f64) };
                    let q: Vec<f64> = c.iter().zip(&dir).map(|(a, d)| a + r * d / norm).collect();
                    let v = ripples(&q, &p);
                    if shell {
                        assert!(v < at_center);
                    }
                    if v > best.0 {
                        best = (v, q);
                    }
                }
                let dist = crate::kdtree::dist2(&best.1, &c).sqrt();
                let cross = (dim - 1) as f64;
                assert!(dist < 0.1 * cross.sqrt(), "dim {dim}: argmax {dist} from centre");
                assert!(best.0 - at_center < 0.01 * cross);
            }
        }
    }

    proptest! {
        #[test]
        fn holder_symmetry(x1 in -10.0f64..10.0, x2 in -10.0f64..10.0) {
            let f = holder_table(&[x1, x2]);
            prop_assert_eq!(f, holder_table(&[-x1, x2]));
            prop_assert_eq!(f, holder_table(&[x1, -x2]));
            prop_assert!((f - holder_oracle(x1, x2)).abs() <= 1e-12 * f.max(1.0));
        }

        #[test]
        fn ripples_permutation_symmetry(x in proptest::collection::vec(-5.0f64..5.0, 4), rot in 0usize..4) {
            let p = RipplesParams::with_dim(4);
            let mut y = x.clone();
            y.rotate_left(rot);
            prop_assert!((ripples(&x, &p) - ripples(&y, &p)).abs() < 1e-12);
            prop_assert!((ripples(&x, &p) - ripples_oracle(&x)).abs() < 1e-12);
        }
    }
}

//! Gray-code Sobol sequence with Joe–Kuo direction numbers.

use crate::error::{Error, Result};

const BITS: usize = 32;

// (degree s, coefficient a, initial m_1..m_s) for dimensions 2..=16,
// from new-joe-kuo-6.21201. Dimension 1 is van der Corput.
const JOE_KUO: [(u32, u32, &[u32]); 15] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

pub const MAX_DIM: usize = JOE_KUO.len() + 1;

fn direction_numbers(axis: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if axis == 0 {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1 << (BITS - 1 - i);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[axis - 1];
    let s = s as usize;
    for i in 0..BITS {
        if i < s {
            v[i] = m[i] << (BITS - 1 - i);
        } else {
            let mut x = v[i - s] ^ (v[i - s] >> s);
            for k in 1..s {
                if (a >> (s - 1 - k)) & 1 == 1 {
                    x ^= v[i - k];
                }
            }
            v[i] = x;
        }
    }
    v
}

/// A deterministic Sobol stream over `[0,1)^dim`.
///
/// An optional digital shift (XOR of a fixed word per axis) randomizes the
/// sequence while keeping its net structure.
#[derive(Debug, Clone)]
pub struct SobolStream {
    dim: usize,
    v: Vec<[u32; BITS]>,
    shift: Vec<u32>,
    state: Vec<u32>,
    index: u64,
}

impl SobolStream {
    /// Starts after index 0 (the origin), so the first point is all 0.5.
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_skip(dim, 1)
    }

    pub fn with_skip(dim: usize, skip: u64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!(
                "Sobol sequence supports 1..={MAX_DIM} dimensions, got {dim}"
            )));
        }
        let mut s = Self {
            dim,
            v: (0..dim).map(direction_numbers).collect(),
            shift: vec![0; dim],
            state: vec![0; dim],
            index: 0,
        };
        for _ in 0..skip {
            s.advance();
        }
        Ok(s)
    }

    /// Applies a digital shift; `shift.len()` must equal the dimension.
    pub fn shifted(mut self, shift: Vec<u32>) -> Self {
        assert_eq!(shift.len(), self.dim);
        self.shift = shift;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the point the next call returns.
    pub fn index(&self) -> u64 {
        self.index
    }

    fn advance(&mut self) {
        // point index+1 differs from point index in the bit of the lowest zero of index
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol stream exhausted");
        for (x, v) in self.state.iter_mut().zip(&self.v) {
            *x ^= v[c];
        }
        self.index += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let p = self
            .state
            .iter()
            .zip(&self.shift)
            .map(|(x, s)| (x ^ s) as f64 / (1u64 << BITS) as f64)
            .collect();
        self.advance();
        p
    }

    pub fn next_n(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.next_point()).collect()
    }
}

/// Maximum over all elementary dyadic boxes of volume `2^-m` of
/// `|count/n − volume|`, for `m` up to `max_m`. Used as a discrepancy proxy.
pub fn dyadic_box_deviation(points: &[Vec<f64>], max_m: u32) -> f64 {
    let n = points.len() as f64;
    let dim = points.first().map_or(0, Vec::len);
    let mut worst: f64 = 0.0;
    for m in 0..=max_m {
        for split in compositions(m, dim) {
            let cells: usize = split.iter().map(|&k| 1usize << k).product();
            let mut counts = vec![0usize; cells];
            for p in points {
                let mut idx = 0usize;
                for (x, &k) in p.iter().zip(&split) {
                    let c = ((x * (1u64 << k) as f64) as usize).min((1 << k) - 1);
                    idx = (idx << k) | c;
                }
                counts[idx] += 1;
            }
            let vol = 1.0 / cells as f64;
            for c in counts {
                worst = worst.max((c as f64 / n - vol).abs());
            }
        }
    }
    worst
}

/// All ways to write `m` as an ordered sum of `parts` non-negative integers.
pub fn compositions(m: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 0 {
        return if m == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in compositions(m - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_points_three_dims() {
        // first points of the unscrambled Joe–Kuo sequence, index 0 included
        let expected = [
            [0.0, 0.0, 0.0],
            [0.5, 0.5, 0.5],
            [0.75, 0.25, 0.25],
            [0.25, 0.75, 0.75],
            [0.375, 0.375, 0.625],
            [0.875, 0.875, 0.125],
            [0.625, 0.125, 0.875],
            [0.125, 0.625, 0.375],
        ];
        let mut s = SobolStream::with_skip(3, 0).unwrap();
        for e in expected {
            assert_eq!(s.next_point(), e.to_vec());
        }
    }

    #[test]
    fn first_point_after_skip() {
        let mut s = SobolStream::new(2).unwrap();
        assert_eq!(s.next_point(), vec![0.5, 0.5]);
        assert_eq!(s.next_point(), vec![0.75, 0.25]);
    }

    #[test]
    fn unsupported_dimension() {
        assert!(matches!(SobolStream::new(0), Err(Error::Config(_))));
        assert!(matches!(SobolStream::new(MAX_DIM + 1), Err(Error::Config(_))));
        assert!(SobolStream::new(MAX_DIM).is_ok());
    }

    #[test]
    fn deterministic() {
        let a = SobolStream::new(5).unwrap().next_n(100);
        let b = SobolStream::new(5).unwrap().next_n(100);
        assert_eq!(a, b);
    }

    #[test]
    fn points_in_half_open_cube() {
        let pts = SobolStream::new(MAX_DIM).unwrap().shifted(vec![u32::MAX; MAX_DIM]).next_n(4096);
        assert!(pts.iter().flatten().all(|&x| (0.0..1.0).contains(&x)));
    }

    // independent oracle: count points in every elementary box by brute force
    fn every_box_holds_one(points: &[Vec<f64>], m: u32) -> bool {
        let dim = points[0].len();
        compositions(m, dim).into_iter().all(|split| {
            let mut cells: Vec<Vec<u64>> = vec![vec![]];
            for &k in &split {
                cells = cells
                    .into_iter()
                    .flat_map(|c| {
                        (0..(1u64 << k)).map(move |j| {
                            let mut c = c.clone();
                            c.push(j);
                            c
                        })
                    })
                    .collect();
            }
            cells.iter().all(|cell| {
                let inside = points
                    .iter()
                    .filter(|p| {
                        p.iter().zip(cell).zip(&split).all(|((x, &j), &k)| {
                            let w = 1.0 / (1u64 << k) as f64;
                            *x >= j as f64 * w && *x < (j + 1) as f64 * w
                        })
                    })
                    .count();
                inside == 1
            })
        })
    }

    #[test]
    fn dyadic_net_property() {
        for dim in 1..=2 {
            for m in 0..=4u32 {
                let n = 1usize << m;
                let mut s = SobolStream::with_skip(dim, 0).unwrap();
                // aligned blocks of 2^m consecutive points
                for _ in 0..4 {
                    let block = s.next_n(n);
                    assert!(every_box_holds_one(&block, m), "dim {dim} m {m}");
                }
            }
        }
        // each coordinate on its own is a (0, m, 1)-net in every supported dimension
        let mut s = SobolStream::with_skip(MAX_DIM, 0).unwrap();
        let block = s.next_n(16);
        for axis in 0..MAX_DIM {
            let proj: Vec<Vec<f64>> = block.iter().map(|p| vec![p[axis]]).collect();
            assert!(every_box_holds_one(&proj, 4), "axis {axis}");
        }
    }

    #[test]
    fn digital_shift_keeps_net() {
        let mut s = SobolStream::with_skip(2, 0)
            .unwrap()
            .shifted(vec![0xdead_beef, 0x1234_5678]);
        let block = s.next_n(16);
        assert!(every_box_holds_one(&block, 4));
    }

    #[test]
    fn sobol_more_uniform_than_random() {
        let sobol = SobolStream::new(2).unwrap().next_n(1024);
        let ds = dyadic_box_deviation(&sobol, 4);
        let wins = (0..10u64)
            .filter(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<Vec<f64>> = (0..1024)
                    .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                    .collect();
                ds <= dyadic_box_deviation(&pts, 4)
            })
            .count();
        assert!(wins >= 9, "{wins}/10");
    }
}

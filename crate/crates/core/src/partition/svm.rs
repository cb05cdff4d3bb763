//! Weighted soft-margin linear SVM, L1 hinge loss, solved in the dual by
//! coordinate descent. The bias is an extra constant feature (regularized).

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

const MAX_EPOCHS: usize = 1000;
const TOL: f64 = 1e-4;

/// `labels[i]` is `true` for the positive class. `cost[i]` is the
/// per-sample box constraint `C_i`. Returns `(w, b)`.
pub fn train(xs: &[&[f64]], labels: &[bool], cost: &[f64], seed: u64) -> (Vec<f64>, f64) {
    let n = xs.len();
    let dim = xs.first().map_or(0, |x| x.len());
    let mut w = vec![0.0; dim + 1];
    let mut alpha = vec![0.0; n];
    let q: Vec<f64> = xs
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let sign = |i: usize| if labels[i] { 1.0 } else { -1.0 };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..MAX_EPOCHS {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let yi = sign(i);
            let margin: f64 = xs[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
            let g = yi * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] >= cost[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, cost[i]);
                let step = (alpha[i] - old) * yi;
                for (wj, xj) in w.iter_mut().zip(xs[i].iter()) {
                    *wj += step * xj;
                }
                w[dim] += step;
            }
        }
        if pg_max - pg_min < TOL {
            break;
        }
    }
    let b = w.pop().unwrap_or(0.0);
    (w, b)
}

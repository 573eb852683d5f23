//! Exact t-SNE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub random_state: u64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            n_iter: 3000,
            random_state: 10,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneEmbedding {
    pub points: Vec<[f64; 2]>,
    /// Perplexity actually used (possibly reduced for small inputs).
    pub perplexity: f64,
    pub n_iter: usize,
    pub random_state: u64,
    /// Final KL divergence `C`.
    pub kl_divergence: f64,
    pub sigmas: Vec<f64>,
}

/// Symmetric input affinities `p_ij`, stored row-major `n * n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    pub n: usize,
    pub p: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Shannon perplexity of each conditional row `p_{.|i}`.
    pub row_perplexity: Vec<f64>,
}

impl Affinities {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

const PERPLEXITY_TOL: f64 = 1e-6;
const MAX_BISECTION_STEPS: usize = 200;

fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Conditional row `p_{j|i}` at precision `beta = 1 / (2 sigma^2)`, with its
/// Shannon entropy in nats.
fn conditional_row(d: &[f64], i: usize, beta: f64) -> (Vec<f64>, f64) {
    let n = d.len();
    let min = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = (0..n)
        .map(|j| if j == i { 0.0 } else { (-beta * (d[j] - min)).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    let mut h = sum.ln();
    for j in 0..n {
        if j != i {
            h += beta * (d[j] - min) * p[j] / sum;
        }
        p[j] /= sum;
    }
    (p, h)
}

/// Bandwidth search per row, then `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<Affinities> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Domain("affinities need at least two points".into()));
    }
    if !(perplexity > 0.0) || perplexity > (n - 1) as f64 {
        return Err(Error::Domain(format!("perplexity {perplexity} outside (0, {}]", n - 1)));
    }
    let d = squared_distances(x);
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    let mut sigmas = vec![0.0; n];
    let mut row_perplexity = vec![0.0; n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let (mut p, mut h) = conditional_row(row, i, beta);
        for _ in 0..MAX_BISECTION_STEPS {
            if (h.exp() - perplexity).abs() < PERPLEXITY_TOL {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            (p, h) = conditional_row(row, i, beta);
        }
        cond[i * n..(i + 1) * n].copy_from_slice(&p);
        sigmas[i] = (1.0 / (2.0 * beta)).sqrt();
        row_perplexity[i] = h.exp();
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
            }
        }
    }
    Ok(Affinities {
        n,
        p,
        sigmas,
        row_perplexity,
    })
}

/// Student-t kernel values `(1 + |y_i - y_j|^2)^-1` and their off-diagonal sum.
fn kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    (num, sum)
}

/// Low-dimensional affinities `q_ij`, row-major `n * n`.
pub fn low_dim_affinities(y: &[[f64; 2]]) -> Vec<f64> {
    let (num, sum) = kernel(y);
    num.into_iter().map(|v| v / sum).collect()
}

/// `C = sum p_ij ln(p_ij / q_ij)`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let q = low_dim_affinities(y);
    p.iter()
        .zip(&q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p / q.max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// `dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    gradient(p, y, 1.0)
}

fn gradient(p: &[f64], y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let (num, sum) = kernel(y);
    let mut g = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = i * n + j;
            let m = (exaggeration * p[k] - num[k] / sum) * num[k];
            g[i][0] += 4.0 * m * (y[i][0] - y[j][0]);
            g[i][1] += 4.0 * m * (y[i][1] - y[j][1]);
        }
    }
    g
}

/// Embeds rows of `x` in 2-D. When there are too few rows for the requested
/// perplexity it is lowered to `(n - 1) / 3` with a warning.
pub fn tsne_embed(x: &[Vec<f64>], config: &TsneConfig) -> Result<TsneEmbedding> {
    let n = x.len();
    if n < 4 {
        return Err(Error::Domain(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let mut perplexity = config.perplexity;
    if (n as f64) <= 3.0 * perplexity {
        let reduced = ((n - 1) as f64 / 3.0).max(1.0);
        log::warn!("t-SNE: {n} points is too few for perplexity {perplexity}; using {reduced:.3}");
        perplexity = reduced;
    }
    let aff = joint_probabilities(x, perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.random_state);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    for it in 0..config.n_iter {
        let early = it < config.exaggeration_iters;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early { config.initial_momentum } else { config.final_momentum };
        let g = gradient(&aff.p, &y, exaggeration);
        for i in 0..n {
            for d in 0..2 {
                gains[i][d] = if (g[i][d] > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * g[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = [
            y.iter().map(|p| p[0]).sum::<f64>() / n as f64,
            y.iter().map(|p| p[1]).sum::<f64>() / n as f64,
        ];
        for p in y.iter_mut() {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }
    }
    Ok(TsneEmbedding {
        kl_divergence: kl_divergence(&aff.p, &y),
        points: y,
        perplexity,
        n_iter: config.n_iter,
        random_state: config.random_state,
        sigmas: aff.sigmas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn affinities_are_symmetric_and_normalized() {
        let x = random_points(30, 5, 1);
        let a = joint_probabilities(&x, 8.0).unwrap();
        let sum: f64 = a.p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for i in 0..30 {
            assert_eq!(a.get(i, i), 0.0);
            for j in 0..30 {
                assert!((a.get(i, j) - a.get(j, i)).abs() < 1e-15);
            }
            assert!((a.row_perplexity[i] - 8.0).abs() < 1e-3);
        }
    }

    #[test]
    fn q_sums_to_one() {
        let y: Vec<[f64; 2]> = (0..7).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        assert!((low_dim_affinities(&y).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = random_points(6, 3, 2);
        let a = joint_probabilities(&x, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<[f64; 2]> = (0..6).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let g = kl_gradient(&a.p, &y);
        let h = 1e-6;
        for i in 0..6 {
            for d in 0..2 {
                let (mut plus, mut minus) = (y.clone(), y.clone());
                plus[i][d] += h;
                minus[i][d] -= h;
                let fd = (kl_divergence(&a.p, &plus) - kl_divergence(&a.p, &minus)) / (2.0 * h);
                let rel = (fd - g[i][d]).abs() / g[i][d].abs().max(1e-8);
                assert!(rel < 1e-4, "({i},{d}) analytic {} numeric {fd}", g[i][d]);
            }
        }
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(tsne_embed(&random_points(3, 2, 0), &TsneConfig::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn separated_blobs_stay_separated() {
        let noise = random_points(30, 5, 5);
        let x: Vec<Vec<f64>> = noise
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().enumerate().map(|(d, v)| 0.05 * v + if d == i / 10 { 10.0 } else { 0.0 }).collect())
            .collect();
        let cfg = TsneConfig {
            n_iter: 500,
            ..TsneConfig::default()
        };
        let e = tsne_embed(&x, &cfg).unwrap();
        assert!(e.perplexity < 30.0);
        let dist = |a: usize, b: usize| {
            let (p, q) = (e.points[a], e.points[b]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        for a in 0..30 {
            let nearest = (0..30).filter(|&b| b != a).min_by(|&i, &j| dist(a, i).total_cmp(&dist(a, j))).unwrap();
            assert_eq!(nearest / 10, a / 10, "point {a} nearest to {nearest}");
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let x = random_points(20, 3, 9);
        let cfg = TsneConfig {
            n_iter: 300,
            perplexity: 5.0,
            ..TsneConfig::default()
        };
        let a = tsne_embed(&x, &cfg).unwrap();
        let b = tsne_embed(&x, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.kl_divergence.is_finite() && a.kl_divergence >= 0.0);
    }
}

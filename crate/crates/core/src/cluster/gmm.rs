//! Full-covariance Gaussian mixtures on 2-D points, fitted by EM and
//! compared by BIC.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REGULARIZATION: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITER: usize = 200;
/// Smallest effective point count a component needs to support a full 2-D
/// covariance; fits with a smaller component are degenerate.
pub const MIN_COMPONENT_MASS: f64 = 3.0;

pub type Cov = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<Cov>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub param_count: usize,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Some component holds less than [`MIN_COMPONENT_MASS`] points.
    pub degenerate: bool,
    /// lnL after each EM iteration.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Free parameters of a `k`-component full-covariance 2-D mixture:
/// `2k` means, `3k` covariance entries and `k - 1` weights.
pub fn param_count(k: usize) -> usize {
    6 * k - 1
}

/// `BIC = -2 lnL + p ln N` with `p = 6K - 1`.
pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + param_count(k) as f64 * (n as f64).ln()
}

fn log_density(x: &[f64; 2], mean: &[f64; 2], cov: &Cov) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let dx = x[0] - mean[0];
    let dy = x[1] - mean[1];
    let maha = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
    -0.5 * maha - 0.5 * det.ln() - (2.0 * PI).ln()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the weighted component densities per point, and lnL.
fn e_step(points: &[[f64; 2]], weights: &[f64], means: &[[f64; 2]], covs: &[Cov]) -> (Vec<Vec<f64>>, f64) {
    let mut log_resp = Vec::with_capacity(points.len());
    let mut ll = 0.0;
    for x in points {
        let terms: Vec<f64> = (0..weights.len())
            .map(|k| {
                if weights[k] > 0.0 {
                    weights[k].ln() + log_density(x, &means[k], &covs[k])
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let lse = log_sum_exp(&terms);
        ll += lse;
        log_resp.push(terms.into_iter().map(|t| t - lse).collect());
    }
    (log_resp, ll)
}

fn sample_covariance(points: &[[f64; 2]]) -> Cov {
    let n = points.len() as f64;
    let m = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let mut c = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - m[0], p[1] - m[1]];
        for a in 0..2 {
            for b in 0..2 {
                c[a][b] += d[a] * d[b] / n;
            }
        }
    }
    c
}

fn regularized(mut c: Cov) -> Cov {
    c[0][0] += REGULARIZATION;
    c[1][1] += REGULARIZATION;
    c
}

/// First mean drawn uniformly by `seed`; each further mean is the point
/// farthest from the means chosen so far (ties to the lower index).
fn farthest_point_means(points: &[[f64; 2]], k: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = vec![points[rng.random_range(0..points.len())]];
    let d2 = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut nearest: Vec<f64> = points.iter().map(|p| d2(p, &means[0])).collect();
    while means.len() < k {
        let (idx, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        let m = points[idx];
        means.push(m);
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(d2(p, &m));
        }
    }
    means
}

/// EM from farthest-point seeded means, shared initial covariance and
/// uniform weights. Stops when lnL improves by less than [`TOLERANCE`] or
/// after [`MAX_ITER`] iterations.
pub fn gmm_fit(points: &[[f64; 2]], k: usize, seed: u64) -> Result<GmmModel> {
    let n = points.len();
    if k == 0 {
        return Err(Error::Domain("GMM needs at least one component".into()));
    }
    if k > n {
        return Err(Error::Domain(format!("{k} components for {n} points")));
    }
    let mut means = farthest_point_means(points, k, seed);
    let mut covs = vec![regularized(sample_covariance(points)); k];
    let mut weights = vec![1.0 / k as f64; k];
    let (mut log_resp, mut ll) = e_step(points, &weights, &means, &covs);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        for c in 0..k {
            let r: Vec<f64> = log_resp.iter().map(|row| row[c].exp()).collect();
            let nk: f64 = r.iter().sum();
            if nk < 1e-10 {
                weights[c] = 0.0;
                continue;
            }
            weights[c] = nk / n as f64;
            let m = [
                r.iter().zip(points).map(|(w, p)| w * p[0]).sum::<f64>() / nk,
                r.iter().zip(points).map(|(w, p)| w * p[1]).sum::<f64>() / nk,
            ];
            let mut cov = [[0.0; 2]; 2];
            for (w, p) in r.iter().zip(points) {
                let d = [p[0] - m[0], p[1] - m[1]];
                for a in 0..2 {
                    for b in 0..2 {
                        cov[a][b] += w * d[a] * d[b];
                    }
                }
            }
            for row in cov.iter_mut() {
                for v in row.iter_mut() {
                    *v /= nk;
                }
            }
            cov[1][0] = cov[0][1];
            means[c] = m;
            covs[c] = regularized(cov);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let (lr, new_ll) = e_step(points, &weights, &means, &covs);
        log_resp = lr;
        let gain = new_ll - ll;
        ll = new_ll;
        trace.push(ll);
        if gain < TOLERANCE {
            converged = true;
            break;
        }
    }
    let degenerate = weights.iter().any(|w| w * (n as f64) < MIN_COMPONENT_MASS);
    Ok(GmmModel {
        k,
        degenerate,
        weights,
        means,
        covariances: covs,
        log_likelihood: ll,
        bic: bic(ll, k, n),
        param_count: param_count(k),
        n_points: n,
        iterations,
        converged,
        trace,
    })
}

impl GmmModel {
    /// Posterior component probabilities per point.
    pub fn responsibilities(&self, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        let (log_resp, _) = e_step(points, &self.weights, &self.means, &self.covariances);
        log_resp.into_iter().map(|r| r.into_iter().map(f64::exp).collect()).collect()
    }

    /// Hard assignment by largest responsibility (ties to the lower index).
    pub fn predict(&self, points: &[[f64; 2]]) -> Vec<usize> {
        self.responsibilities(points)
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0
            })
            .collect()
    }

    pub fn log_likelihood_of(&self, points: &[[f64; 2]]) -> f64 {
        e_step(points, &self.weights, &self.means, &self.covariances).1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicPoint {
    pub k: usize,
    pub bic: f64,
    pub log_likelihood: f64,
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best_k: usize,
    pub curve: Vec<BicPoint>,
    pub model: GmmModel,
}

fn restart_seed(seed: u64, k: usize, restart: usize) -> u64 {
    let mut z = seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (restart as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits every `K` in range (in parallel), keeps the best of `restarts` fits by
/// lnL, and returns the `K` with the smallest BIC (ties to the smaller `K`).
/// Degenerate fits lose to any non-degenerate one, both between restarts and
/// between values of `K`.
pub fn select_k(points: &[[f64; 2]], k_range: RangeInclusive<usize>, restarts: usize, seed: u64) -> Result<Selection> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 1 || hi < lo || hi > points.len() {
        return Err(Error::Validation(format!(
            "k range {lo}..={hi} must lie within 1..={}",
            points.len()
        )));
    }
    let restarts = restarts.max(1);
    let fits: Vec<GmmModel> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let mut best: Option<GmmModel> = None;
            for r in 0..restarts {
                let m = gmm_fit(points, k, restart_seed(seed, k, r))?;
                let better = best
                    .as_ref()
                    .is_none_or(|b| (!m.degenerate, m.log_likelihood) > (!b.degenerate, b.log_likelihood));
                if better {
                    best = Some(m);
                }
            }
            Ok(best.expect("at least one restart"))
        })
        .collect::<Result<_>>()?;
    let curve: Vec<BicPoint> = fits
        .iter()
        .map(|m| BicPoint {
            k: m.k,
            bic: m.bic,
            log_likelihood: m.log_likelihood,
            degenerate: m.degenerate,
        })
        .collect();
    let any_sound = fits.iter().any(|m| !m.degenerate);
    let model = fits
        .into_iter()
        .filter(|m| !(any_sound && m.degenerate))
        .fold(None::<GmmModel>, |best, m| match best {
            Some(b) if b.bic <= m.bic => Some(b),
            _ => Some(m),
        })
        .expect("non-empty range");
    Ok(Selection {
        best_k: model.k,
        curve,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(centers: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, sd).unwrap();
        centers
            .iter()
            .flat_map(|c| (0..per).map(|_| [c[0] + nd.sample(&mut rng), c[1] + nd.sample(&mut rng)]).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn bic_hand_arithmetic() {
        assert!((bic(-100.0, 1, 100) - 223.0259).abs() < 1e-4);
        assert_eq!(param_count(42), 251);
        assert!(bic(-100.0, 2, 100) > bic(-100.0, 1, 100));
    }

    #[test]
    fn single_component_is_the_sample_mle() {
        let pts = blobs(&[[1.0, -2.0]], 50, 1.5, 4);
        let m = gmm_fit(&pts, 1, 0).unwrap();
        let n = pts.len() as f64;
        let mean = [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n];
        let cov = sample_covariance(&pts);
        assert!((m.means[0][0] - mean[0]).abs() < 1e-9 && (m.means[0][1] - mean[1]).abs() < 1e-9);
        for a in 0..2 {
            for b in 0..2 {
                let reg = if a == b { REGULARIZATION } else { 0.0 };
                assert!((m.covariances[0][a][b] - cov[a][b] - reg).abs() < 1e-9);
            }
        }
        assert_eq!(m.weights, vec![1.0]);
    }

    #[test]
    fn separated_blobs_recover_means() {
        let truth = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let pts = blobs(&truth, 60, 0.5, 7);
        let m = gmm_fit(&pts, 3, 1).unwrap();
        for t in truth {
            let best = m.means.iter().map(|mu| ((mu[0] - t[0]).powi(2) + (mu[1] - t[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(best < 0.5, "{t:?} -> {best}");
        }
        for r in m.responsibilities(&pts) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let pts = blobs(&[[0.0, 0.0], [3.0, 1.0]], 40, 1.0, 11);
        for k in 1..=5 {
            for seed in 0..3 {
                let m = gmm_fit(&pts, k, seed).unwrap();
                for w in m.trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-8, "k={k} seed={seed}: {} -> {}", w[0], w[1]);
                }
            }
        }
    }

    #[test]
    fn domain_checks() {
        let pts = blobs(&[[0.0, 0.0]], 3, 1.0, 0);
        assert!(matches!(gmm_fit(&pts, 4, 0), Err(Error::Domain(_))));
        assert!(select_k(&pts, 1..=4, 1, 0).is_err());
        let s = select_k(&pts, 1..=1, 2, 0).unwrap();
        assert_eq!(s.best_k, 1);
        assert_eq!(s.curve.len(), 1);
    }

    #[test]
    fn component_on_a_lone_outlier_is_degenerate() {
        let mut pts = blobs(&[[0.0, 0.0], [12.0, 0.0], [6.0, 11.0]], 50, 1.0, 3);
        pts.push([60.0, 60.0]);
        let m = gmm_fit(&pts, 4, 0).unwrap();
        assert!(m.degenerate);
        assert!(!gmm_fit(&pts, 1, 0).unwrap().degenerate);
        let s = select_k(&pts, 1..=5, 3, 0).unwrap();
        assert!(!s.model.degenerate);
        assert!(s.curve.iter().any(|b| b.degenerate));
    }

    #[test]
    fn select_k_finds_three_blobs() {
        let pts = blobs(&[[0.0, 0.0], [12.0, 0.0], [6.0, 11.0]], 50, 1.0, 21);
        let s = select_k(&pts, 1..=6, 3, 5).unwrap();
        assert_eq!(s.best_k, 3);
        assert_eq!(s.curve.len(), 6);
    }
}

//! (μ/μ_w, λ)-CMA-ES with cumulative step-size adaptation, rank-one and
//! rank-μ covariance updates, and box constraints handled by resampling.
//!
//! All randomness comes from a single seeded stream that is consumed
//! independently of objective values, so two runs that rank candidates
//! identically sample identical candidates.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resampling attempts before an out-of-box candidate is clipped.
const MAX_RESAMPLES: usize = 100;
/// Largest accepted covariance condition number.
const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesConfig {
    /// Defaults to `4 + ⌊3 ln n⌋`.
    pub population_size: Option<usize>,
    pub sigma0: f64,
    pub max_evals: usize,
    /// Supplied by the caller; not part of a serialized configuration.
    #[serde(skip)]
    pub seed: u64,
    /// Per-coordinate box; candidates outside are resampled.
    pub bounds_db: Option<(f64, f64)>,
    /// Stop once the best score drops below this value.
    pub target: Option<f64>,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            sigma0: 3.0,
            max_evals: 480,
            seed: 0,
            bounds_db: Some((-20.0, 0.0)),
            target: None,
        }
    }
}

impl CmaesConfig {
    pub fn population(&self, dim: usize) -> usize {
        self.population_size
            .unwrap_or(4 + (3.0 * (dim as f64).ln()).floor() as usize)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidParameter("CMA-ES needs at least one dimension".into()));
        }
        let lambda = self.population(dim);
        if lambda < 4 {
            return Err(Error::config(
                "cmaes.population_size",
                format!("must be at least 4, got {lambda}"),
            ));
        }
        if self.max_evals < lambda {
            return Err(Error::config(
                "cmaes.max_evals",
                format!("budget {} is below one generation of {lambda}", self.max_evals),
            ));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::config("cmaes.sigma0", "must be positive"));
        }
        if let Some((lo, hi)) = self.bounds_db {
            if !(lo < hi) {
                return Err(Error::config("cmaes.bounds_db", format!("need lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub generation: usize,
    pub score: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesResult {
    pub best_x: Vec<f64>,
    pub best_score: f64,
    pub evaluations: Vec<Evaluation>,
    /// Best-ever score after each generation.
    pub generation_best: Vec<f64>,
    pub restarts: usize,
}

/// Strategy parameters that depend only on dimension and population.
struct Constants {
    lambda: usize,
    weights: Vec<f64>,
    mueff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
}

impl Constants {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self {
            lambda,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
        }
    }
}

/// Mutable search distribution.
struct Distribution_ {
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    path_c: DVector<f64>,
    path_s: DVector<f64>,
    generation: usize,
}

impl Distribution_ {
    fn new(x0: &[f64], sigma: f64) -> Self {
        let n = x0.len();
        Self {
            mean: DVector::from_column_slice(x0),
            sigma,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            path_c: DVector::zeros(n),
            path_s: DVector::zeros(n),
            generation: 0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, bounds: Option<(f64, f64)>) -> DVector<f64> {
        let n = self.mean.len();
        let mut draw = || {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut *rng));
            &self.mean + (&self.basis * z.component_mul(&self.scales)) * self.sigma
        };
        let Some((lo, hi)) = bounds else {
            return draw();
        };
        let inside = |x: &DVector<f64>| x.iter().all(|v| (lo..=hi).contains(v));
        let mut x = draw();
        for _ in 0..MAX_RESAMPLES {
            if inside(&x) {
                return x;
            }
            x = draw();
        }
        x.map(|v| v.clamp(lo, hi))
    }

    /// Returns false when the covariance became degenerate.
    fn update(&mut self, ranked: &[&DVector<f64>], k: &Constants) -> bool {
        let n = self.mean.len() as f64;
        let old_mean = self.mean.clone();
        let mut mean = DVector::zeros(self.mean.len());
        for (w, x) in k.weights.iter().zip(ranked) {
            mean += *x * *w;
        }
        self.mean = mean;
        let y_w = (&self.mean - &old_mean) / self.sigma;

        // C^{-1/2} y_w = B D^{-1} Bᵀ y_w
        let whitened = &self.basis * (self.basis.tr_mul(&y_w).component_div(&self.scales));
        self.path_s = &self.path_s * (1.0 - k.cs) + whitened * (k.cs * (2.0 - k.cs) * k.mueff).sqrt();
        let norm_ps = self.path_s.norm();
        let gen = (self.generation + 1) as f64;
        let h_sig = norm_ps / (1.0 - (1.0 - k.cs).powf(2.0 * gen)).sqrt() / k.chi_n < 1.4 + 2.0 / (n + 1.0);
        let h = if h_sig { 1.0 } else { 0.0 };
        self.path_c = &self.path_c * (1.0 - k.cc) + &y_w * (h * (k.cc * (2.0 - k.cc) * k.mueff).sqrt());

        let mut rank_mu = DMatrix::zeros(self.cov.nrows(), self.cov.ncols());
        for (w, x) in k.weights.iter().zip(ranked) {
            let y = (*x - &old_mean) / self.sigma;
            rank_mu += &y * y.transpose() * *w;
        }
        let decay = 1.0 - k.c1 - k.cmu + (1.0 - h) * k.c1 * k.cc * (2.0 - k.cc);
        self.cov = &self.cov * decay + &self.path_c * self.path_c.transpose() * k.c1 + rank_mu * k.cmu;
        self.sigma *= ((k.cs / k.damps) * (norm_ps / k.chi_n - 1.0)).exp();
        self.generation += 1;
        self.decompose()
    }

    fn decompose(&mut self) -> bool {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        if !sym.iter().all(|v| v.is_finite()) || !self.sigma.is_finite() {
            return false;
        }
        let eig = sym.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        if !(min > 0.0) || max / min > MAX_CONDITION || self.sigma * max.sqrt() < 1e-300 {
            return false;
        }
        self.cov = sym;
        self.scales = eig.eigenvalues.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        true
    }
}

/// Minimizes `objective` from `x0`. Candidates of one generation are
/// evaluated in parallel; the returned history is in evaluation order.
/// Non-finite scores rank last.
pub fn cmaes_minimize<F>(objective: F, x0: &[f64], cfg: &CmaesConfig) -> Result<CmaesResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    cfg.validate(n)?;
    let k = Constants::new(n, cfg.population(n));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dist = Distribution_::new(x0, cfg.sigma0);
    let mut restarts = 0;

    let mut evaluations: Vec<Evaluation> = Vec::with_capacity(cfg.max_evals);
    let mut generation_best = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut generation = 0;

    while evaluations.len() < cfg.max_evals {
        let batch = k.lambda.min(cfg.max_evals - evaluations.len());
        let candidates: Vec<DVector<f64>> = (0..batch).map(|_| dist.sample(&mut rng, cfg.bounds_db)).collect();
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|x| objective(x.as_slice()))
            .collect();

        for (x, &score) in candidates.iter().zip(&scores) {
            if score.is_finite() && best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, x.as_slice().to_vec()));
            }
            evaluations.push(Evaluation {
                index: evaluations.len(),
                generation,
                score,
                x: x.as_slice().to_vec(),
            });
        }
        generation_best.push(best.as_ref().map_or(f64::INFINITY, |(b, _)| *b));
        generation += 1;

        if cfg.target.is_some_and(|t| best.as_ref().is_some_and(|(b, _)| *b < t)) {
            break;
        }
        if batch < k.lambda {
            break;
        }

        let mut order: Vec<usize> = (0..batch).collect();
        order.sort_by(|&a, &b| rank_key(scores[a]).total_cmp(&rank_key(scores[b])).then(a.cmp(&b)));
        let ranked: Vec<&DVector<f64>> = order.iter().map(|&i| &candidates[i]).collect();
        if !dist.update(&ranked, &k) {
            if restarts > 0 {
                log::warn!("CMA-ES covariance degenerated again after a restart; stopping");
                break;
            }
            restarts += 1;
            log::warn!("CMA-ES covariance degenerated; restarting with doubled step size");
            dist = Distribution_::new(x0, 2.0 * cfg.sigma0);
        }
    }

    let (best_score, best_x) = best.unwrap_or((f64::INFINITY, x0.to_vec()));
    Ok(CmaesResult {
        best_x,
        best_score,
        evaluations,
        generation_best,
        restarts,
    })
}

fn rank_key(score: f64) -> f64 {
    if score.is_nan() {
        f64::INFINITY
    } else {
        score
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_ten_dimensions() {
        let cfg = CmaesConfig {
            sigma0: 1.0,
            max_evals: 5000,
            seed: 3,
            bounds_db: None,
            ..CmaesConfig::default()
        };
        let res = cmaes_minimize(sphere, &[1.5; 10], &cfg).unwrap();
        assert!(res.best_score < 1e-6, "{}", res.best_score);
        assert!(res.evaluations.len() <= 5000);
    }

    #[test]
    fn one_dimensional_quadratic() {
        // brute-force scan of (x-2)² on a 1e-5 grid puts the minimum at 2
        let scan = (0..=400_000)
            .map(|i| i as f64 * 1e-5)
            .min_by(|a, b| (a - 2.0).powi(2).total_cmp(&(b - 2.0).powi(2)))
            .unwrap();
        assert!((scan - 2.0).abs() < 1e-9);
        let cfg = CmaesConfig {
            sigma0: 1.0,
            max_evals: 2000,
            seed: 1,
            bounds_db: None,
            ..CmaesConfig::default()
        };
        let res = cmaes_minimize(|x: &[f64]| (x[0] - 2.0).powi(2), &[0.0], &cfg).unwrap();
        assert!((res.best_x[0] - scan).abs() < 1e-4);
    }

    #[test]
    fn constant_objective_runs_to_budget() {
        let cfg = CmaesConfig {
            sigma0: 0.5,
            max_evals: 100,
            seed: 2,
            bounds_db: None,
            ..CmaesConfig::default()
        };
        let res = cmaes_minimize(|_: &[f64]| 1.0, &[0.0; 3], &cfg).unwrap();
        assert_eq!(res.evaluations.len(), 100);
        assert_eq!(res.best_score, 1.0);
    }

    #[test]
    fn shifted_objective_samples_same_candidates() {
        let cfg = CmaesConfig {
            sigma0: 0.8,
            max_evals: 200,
            seed: 9,
            bounds_db: Some((-5.0, 5.0)),
            ..CmaesConfig::default()
        };
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 1.0).powi(2)).sum::<f64>();
        let a = cmaes_minimize(f, &[3.0; 4], &cfg).unwrap();
        let b = cmaes_minimize(|x: &[f64]| f(x) + 10.0, &[3.0; 4], &cfg).unwrap();
        let xa: Vec<_> = a.evaluations.iter().map(|e| &e.x).collect();
        let xb: Vec<_> = b.evaluations.iter().map(|e| &e.x).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn bounds_and_monotone_history() {
        let cfg = CmaesConfig {
            sigma0: 3.0,
            max_evals: 300,
            seed: 4,
            bounds_db: Some((-20.0, 0.0)),
            ..CmaesConfig::default()
        };
        let res = cmaes_minimize(|x: &[f64]| x.iter().map(|v| (v + 3.0).powi(2)).sum(), &[-10.0; 5], &cfg).unwrap();
        assert!(res.evaluations.iter().all(|e| e.x.iter().all(|v| (-20.0..=0.0).contains(v))));
        assert!(res.generation_best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn config_checks() {
        let small = CmaesConfig {
            population_size: Some(3),
            ..CmaesConfig::default()
        };
        assert!(small.validate(5).is_err());
        let short = CmaesConfig {
            max_evals: 5,
            ..CmaesConfig::default()
        };
        assert!(short.validate(20).is_err());
        assert_eq!(CmaesConfig::default().population(20), 12);
    }
}

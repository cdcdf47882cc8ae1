//! Readout training: ridge regression on intensity features, the split of a
//! signed weight vector into the two non-negative attenuation masks of a
//! balanced photodiode pair, error metrics, and randomized cross-validation.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::quantize_symbol;

/// `1e-9, 1e-8, ..., 1e-1`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-9..=-1).map(|e| 10f64.powi(e)).collect()
}

/// Fraction of the training rows used to fit candidates during λ selection.
const INNER_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda_grid: Vec<f64>,
    pub washout: usize,
    pub seed: u64,
    pub n_folds: usize,
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidParameter("empty ridge lambda grid".into()));
        }
        if let Some(bad) = self.lambda_grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "ridge lambda must be positive, got {bad}"
            )));
        }
        if self.n_folds == 0 {
            return Err(Error::InvalidParameter("n_folds must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            washout: 0,
            seed: 0,
            n_folds: 100,
        }
    }
}

/// Signed linear readout `y = Σ w_k φ_k + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReadout {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearReadout {
    pub fn predict_row(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        row.into_iter().zip(&self.weights).map(|(f, w)| f * w).sum::<f64>() + self.bias
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<f64> {
        let w = DVector::from_column_slice(&self.weights);
        (features * w).iter().map(|v| v + self.bias).collect()
    }

    fn predict_rows(&self, features: &DMatrix<f64>, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&r| self.predict_row(features.row(r).iter().copied()))
            .collect()
    }
}

/// The physical readout: two non-negative attenuation masks whose squared
/// difference is the signed weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub bias: f64,
}

impl ReadoutWeights {
    /// Balanced-photodiode output for one row of intensities.
    pub fn apply(&self, intensities: impl IntoIterator<Item = f64>) -> f64 {
        intensities
            .into_iter()
            .zip(self.w_plus.iter().zip(&self.w_minus))
            .map(|(i, (p, m))| p * p * i - m * m * i)
            .sum::<f64>()
            + self.bias
    }
}

pub fn split_signed_weights(w: &[f64], bias: f64) -> ReadoutWeights {
    ReadoutWeights {
        w_plus: w.iter().map(|v| v.max(0.0).sqrt()).collect(),
        w_minus: w.iter().map(|v| (-v).max(0.0).sqrt()).collect(),
        bias,
    }
}

/// Centered normal equations of one row subset, reusable across λ values.
struct RidgeSystem {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    feature_mean: DVector<f64>,
    target_mean: f64,
}

impl RidgeSystem {
    fn new(features: &DMatrix<f64>, targets: &[f64], rows: &[usize]) -> Result<Self> {
        let f = features.ncols();
        if rows.is_empty() {
            return Err(Error::InsufficientData("no training rows".into()));
        }
        if rows.len() <= f {
            log::warn!(
                "ridge fit with {} samples for {} features is underdetermined",
                rows.len(),
                f
            );
        }
        let mut x = DMatrix::zeros(rows.len(), f);
        let mut y = DVector::zeros(rows.len());
        for (i, &r) in rows.iter().enumerate() {
            x.row_mut(i).copy_from(&features.row(r));
            y[i] = targets[r];
        }
        if !x.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite features or targets".into()));
        }
        let count = rows.len() as f64;
        let feature_mean = x.row_mean().transpose();
        let target_mean = y.sum() / count;
        for (mut col, mean) in x.column_iter_mut().zip(feature_mean.iter()) {
            col.add_scalar_mut(-mean);
        }
        y.add_scalar_mut(-target_mean);
        Ok(Self {
            gram: x.tr_mul(&x),
            rhs: x.tr_mul(&y),
            feature_mean,
            target_mean,
        })
    }

    fn solve(&self, lambda: f64) -> Result<LinearReadout> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ridge lambda must be positive, got {lambda}"
            )));
        }
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let w = match a.clone().cholesky() {
            Some(ch) => ch.solve(&self.rhs),
            None => a
                .lu()
                .solve(&self.rhs)
                .ok_or_else(|| Error::Numerical("singular ridge system".into()))?,
        };
        let bias = self.target_mean - self.feature_mean.dot(&w);
        Ok(LinearReadout {
            weights: w.iter().copied().collect(),
            bias,
        })
    }
}

/// Minimizes `‖Φw + b - y‖² + λ‖w‖²` with an unpenalized bias.
pub fn ridge_fit(features: &DMatrix<f64>, targets: &[f64], lambda: f64) -> Result<LinearReadout> {
    if features.nrows() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    let rows: Vec<usize> = (0..targets.len()).collect();
    RidgeSystem::new(features, targets, &rows)?.solve(lambda)
}

/// Mean squared error over the target's (population) variance.
pub fn nmse(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            predicted.len(),
            target.len()
        )));
    }
    if target.len() < 2 {
        return Err(Error::InsufficientData("NMSE needs at least two samples".into()));
    }
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let variance = target.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if variance == 0.0 {
        return Err(Error::InvalidParameter("target has zero variance".into()));
    }
    let mse = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / variance)
}

/// Fraction of positions where the symbols differ.
pub fn ser<S: PartialEq>(predicted: &[S], target: &[S]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::Dimension(format!(
            "{} predicted symbols for {} targets",
            predicted.len(),
            target.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::InsufficientData("SER of an empty sequence".into()));
    }
    let wrong = predicted.iter().zip(target).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / target.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nmse,
    Ser,
}

impl Metric {
    /// Scores real-valued predictions. For SER both sides are quantized to
    /// the nearest channel symbol.
    pub fn score(self, predicted: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            Metric::Nmse => nmse(predicted, target),
            Metric::Ser => {
                let p: Vec<_> = predicted.iter().map(|v| quantize_symbol(*v)).collect();
                let t: Vec<_> = target.iter().map(|v| quantize_symbol(*v)).collect();
                ser(&p, &t)
            }
        }
    }

    /// Score reported for a run that could not be evaluated, worse than any
    /// attainable value.
    pub fn penalty(self) -> f64 {
        match self {
            Metric::Nmse => 1e3,
            Metric::Ser => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nmse => "nmse",
            Metric::Ser => "ser",
        }
    }
}

/// Train/test sample counts of one cross-validation partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub mean: f64,
    pub std: f64,
    pub fold_scores: Vec<f64>,
    pub lambdas: Vec<f64>,
}

/// Result of fitting on one random partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub score: f64,
    pub lambda: f64,
    pub readout: LinearReadout,
}

/// Deterministic per-fold generator derived from `(seed, fold)`.
pub fn fold_rng(seed: u64, fold: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold);
    rng
}

/// Fits on one random train/test partition of the post-washout rows: λ is
/// picked on an internal 80/20 split of the training rows, the readout is
/// refit on all training rows and scored on the test rows.
pub fn evaluate_fold(
    features: &DMatrix<f64>,
    targets: &[f64],
    cfg: &RidgeConfig,
    split: SplitSizes,
    metric: Metric,
    fold: u64,
) -> Result<FoldOutcome> {
    let (train, test) = partition(targets.len(), cfg, split, fold)?;
    let n_inner = ((train.len() as f64) * INNER_TRAIN_FRACTION).round() as usize;
    let (inner, validation) = train.split_at(n_inner.clamp(1, train.len() - 1));
    let inner_system = RidgeSystem::new(features, targets, inner)?;
    let validation_targets: Vec<f64> = validation.iter().map(|&r| targets[r]).collect();

    let mut best: Option<(f64, f64, f64)> = None; // (score, tie-break nmse, lambda)
    for &lambda in &cfg.lambda_grid {
        let readout = inner_system.solve(lambda)?;
        let pred = readout.predict_rows(features, validation);
        let score = metric.score(&pred, &validation_targets)?;
        let tie = mse(&pred, &validation_targets);
        let better = match best {
            None => true,
            Some((s, t, _)) => score < s || (score == s && tie < t),
        };
        if better {
            best = Some((score, tie, lambda));
        }
    }
    let (_, _, lambda) = best.expect("lambda grid is non-empty");

    let readout = RidgeSystem::new(features, targets, &train)?.solve(lambda)?;
    let pred = readout.predict_rows(features, &test);
    let test_targets: Vec<f64> = test.iter().map(|&r| targets[r]).collect();
    Ok(FoldOutcome {
        score: metric.score(&pred, &test_targets)?,
        lambda,
        readout,
    })
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

/// Random disjoint train/test rows drawn from `washout..len`.
fn partition(
    len: usize,
    cfg: &RidgeConfig,
    split: SplitSizes,
    fold: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if cfg.washout >= len {
        return Err(Error::InsufficientData(format!(
            "washout of {} leaves no data out of {len} samples",
            cfg.washout
        )));
    }
    let available = len - cfg.washout;
    if split.train < 2 || split.test < 2 || split.train + split.test > available {
        return Err(Error::InsufficientData(format!(
            "need {} train + {} test samples after washout, have {available}",
            split.train, split.test
        )));
    }
    let mut rng = fold_rng(cfg.seed, fold);
    let picked = sample(&mut rng, available, split.train + split.test).into_vec();
    let rows: Vec<usize> = picked.into_iter().map(|i| i + cfg.washout).collect();
    let (train, test) = rows.split_at(split.train);
    Ok((train.to_vec(), test.to_vec()))
}

/// Repeats [`evaluate_fold`] over `cfg.n_folds` independent random
/// partitions and reports the mean and sample standard deviation.
pub fn cross_validate(
    features: &DMatrix<f64>,
    targets: &[f64],
    cfg: &RidgeConfig,
    split: SplitSizes,
    metric: Metric,
) -> Result<CvScore> {
    cfg.validate()?;
    if features.nrows() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    let outcomes: Vec<FoldOutcome> = (0..cfg.n_folds as u64)
        .into_par_iter()
        .map(|fold| evaluate_fold(features, targets, cfg, split, metric, fold))
        .collect::<Result<_>>()?;
    let fold_scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    let (mean, std) = mean_std(&fold_scores);
    Ok(CvScore {
        mean,
        std,
        fold_scores,
        lambdas: outcomes.iter().map(|o| o.lambda).collect(),
    })
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

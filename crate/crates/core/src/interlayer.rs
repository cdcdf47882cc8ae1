//! Tuning of the attenuation mask between the two layers: a sweep over one
//! attenuation shared by all lines, and CMA-ES over every line in dB.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmaes::{cmaes_minimize, CmaesConfig, CmaesResult};
use crate::error::{Error, Result};
use crate::pipeline::{Mode, Pipeline};
use crate::readout::{evaluate_fold, Metric, RidgeConfig, SplitSizes};
use crate::reservoir::InterlayerWeights;

/// Amplitude `α` whose power transmission `α²` is `att_db` decibels.
pub fn db_to_amplitude(att_db: f64) -> f64 {
    10f64.powf(att_db / 20.0)
}

pub fn db_to_weights(weights_db: &[f64]) -> Result<InterlayerWeights> {
    InterlayerWeights::new(weights_db.iter().map(|&d| db_to_amplitude(d)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttenuationSweepConfig {
    pub min_db: f64,
    pub max_db: f64,
    pub n_points: usize,
}

impl Default for AttenuationSweepConfig {
    fn default() -> Self {
        Self {
            min_db: -20.0,
            max_db: 0.0,
            n_points: 21,
        }
    }
}

impl AttenuationSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_db < self.max_db && self.min_db.is_finite() && self.max_db.is_finite()) {
            return Err(Error::config(
                "interlayer.min_db",
                format!("need min_db < max_db, got [{}, {}]", self.min_db, self.max_db),
            ));
        }
        if self.n_points == 0 {
            return Err(Error::config("interlayer.n_points", "must be at least 1"));
        }
        Ok(())
    }

    /// Evenly spaced attenuations from `min_db` to `max_db`; a single point sits at `min_db`.
    pub fn grid(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.min_db];
        }
        let step = (self.max_db - self.min_db) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| {
                if i + 1 == self.n_points {
                    self.max_db
                } else {
                    self.min_db + step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub att_db: f64,
    /// `None` when the objective failed at this point.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_db: f64,
    pub best_score: f64,
    pub best: InterlayerWeights,
    pub curve: Vec<SweepPoint>,
}

/// Evaluates `eval_fn` on uniform masks of `n` lines at every grid point.
/// Failed points are kept in the curve; only an all-failed sweep is an error.
/// Ties go to the lower attenuation index, non-finite scores never win.
pub fn attenuation_sweep<F>(eval_fn: F, cfg: &AttenuationSweepConfig, n: usize) -> Result<SweepResult>
where
    F: Fn(&InterlayerWeights) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let curve: Vec<SweepPoint> = cfg
        .grid()
        .into_par_iter()
        .map(|att_db| {
            let outcome = InterlayerWeights::uniform(n, db_to_amplitude(att_db)).and_then(|w| eval_fn(&w));
            match outcome {
                Ok(score) => SweepPoint {
                    att_db,
                    score: Some(score),
                    error: None,
                },
                Err(e) => {
                    log::warn!("sweep point {att_db} dB failed: {e}");
                    SweepPoint {
                        att_db,
                        score: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let (best_db, best_score) = curve
        .iter()
        .filter_map(|p| p.score.filter(|s| s.is_finite()).map(|s| (p.att_db, s)))
        .fold(None, |acc: Option<(f64, f64)>, (d, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((d, s)),
        })
        .ok_or_else(|| Error::Numerical("every attenuation sweep point failed".into()))?;
    Ok(SweepResult {
        best_db,
        best_score,
        best: InterlayerWeights::uniform(n, db_to_amplitude(best_db))?,
        curve,
    })
}

/// Everything the inter-layer objective holds fixed.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveContext<'a> {
    pub pipeline: &'a Pipeline,
    pub ridge: &'a RidgeConfig,
    pub split: SplitSizes,
    pub metric: Metric,
    /// Index of the single train/validation partition used while optimizing.
    pub fold: u64,
}

impl ObjectiveContext<'_> {
    /// Deep-mode score on the fixed partition; a diverging cascade scores
    /// [`Metric::penalty`].
    pub fn evaluate(&self, w: &InterlayerWeights) -> Result<f64> {
        let features = match self.pipeline.features(Mode::Deep, Some(w)) {
            Ok(f) => f,
            Err(Error::Divergence { layer, step }) => {
                log::debug!("cascade diverged in layer {layer} at step {step}");
                return Ok(self.metric.penalty());
            }
            Err(e) => return Err(e),
        };
        let outcome = evaluate_fold(&features, &self.pipeline.target, self.ridge, self.split, self.metric, self.fold)?;
        Ok(outcome.score)
    }
}

/// Objective over per-line attenuations in dB. Failures other than
/// divergence score NaN, which CMA-ES ranks last.
pub fn objective_from_pipeline(weights_db: &[f64], context: &ObjectiveContext<'_>) -> f64 {
    match db_to_weights(weights_db).and_then(|w| context.evaluate(&w)) {
        Ok(score) => score,
        Err(e) => {
            log::warn!("objective evaluation failed: {e}");
            f64::NAN
        }
    }
}

/// CMA-ES over all `n` attenuations from a uniform start at `x0_db`.
pub fn optimize_cmaes<F>(objective: F, n: usize, x0_db: f64, cfg: &CmaesConfig) -> Result<CmaesResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cmaes_minimize(objective, &vec![x0_db; n], cfg)
}

//! Experiment execution: builds the substrate for a configuration, runs the
//! requested reservoir configuration with cross-validated scoring, and
//! produces self-describing result records.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cmaes::CmaesResult;
use crate::comb::{build_input_vector, line_index};
use crate::config::{ExperimentConfig, InterlayerStrategy, SweepAxis, TaskConfig};
use crate::error::{Error, Result};
use crate::interlayer::{
    attenuation_sweep, db_to_amplitude, db_to_weights, objective_from_pipeline, optimize_cmaes,
    ObjectiveContext, SweepResult,
};
use crate::pipeline::{Mode, Pipeline};
use crate::readout::{cross_validate, CvScore, Metric, SplitSizes};
use crate::reservoir::InterlayerWeights;
use crate::system::PhysicsConfig;
use crate::tasks::{
    channel_task_data, channel_task_data_with_noise, load_series, santa_fe_surrogate, shift_task_data,
    standardize, TaskData,
};

/// Crate version, with the revision appended when `COMBRC_GIT_REV` was set at build time.
pub fn version_string() -> String {
    let version = env!("CARGO_PKG_VERSION");
    match option_env!("COMBRC_GIT_REV") {
        Some(rev) => format!("{version}+{rev}"),
        None => version.to_string(),
    }
}

/// Wall-clock seconds spent per phase of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub physics_s: f64,
    pub dynamics_s: f64,
    pub training_s: f64,
    pub optimization_s: f64,
}

/// Scores of one run together with the exact configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub mode: Mode,
    pub task: String,
    pub metric: Metric,
    /// Set when a single band was scored on its own (1 or 2).
    pub band: Option<usize>,
    pub axis: Option<SweepAxis>,
    pub axis_value: Option<f64>,
    pub mean: f64,
    pub std: f64,
    pub fold_scores: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Inter-layer attenuation per line in deep mode.
    pub interlayer_db: Option<Vec<f64>>,
    pub timing: PhaseTiming,
    pub config: ExperimentConfig,
}

impl ResultRecord {
    /// Bitwise equality of every metric field; timing and version are ignored.
    pub fn same_metrics(&self, other: &ResultRecord) -> bool {
        fn bits(v: &[f64]) -> Vec<u64> {
            v.iter().map(|x| x.to_bits()).collect()
        }
        self.mean.to_bits() == other.mean.to_bits()
            && self.std.to_bits() == other.std.to_bits()
            && bits(&self.fold_scores) == bits(&other.fold_scores)
            && bits(&self.lambdas) == bits(&other.lambdas)
            && self.interlayer_db.as_deref().map(bits) == other.interlayer_db.as_deref().map(bits)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: ResultRecord,
    pub sweep: Option<SweepResult>,
    pub cmaes: Option<CmaesResult>,
}

/// Task data with the split sizes and metric of its protocol.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub data: TaskData,
    pub split: SplitSizes,
    pub washout: usize,
    pub metric: Metric,
}

pub fn load_task(task: &TaskConfig) -> Result<TaskInstance> {
    let data = match task {
        TaskConfig::Channel(spec) => channel_task_data(spec)?,
        TaskConfig::Santafe(sf) => {
            let spec = sf.shift_spec();
            spec.validate()?;
            let needed = spec.total_len() + spec.tau.unsigned_abs() as usize;
            let series = match &sf.dataset {
                Some(path) => load_series(path, needed)?,
                None => {
                    let mut s = santa_fe_surrogate(needed, sf.surrogate_seed);
                    standardize(&mut s)?;
                    s
                }
            };
            shift_task_data(&series, &spec)?
        }
    };
    Ok(TaskInstance {
        data,
        split: SplitSizes {
            train: task.train_len(),
            test: task.test_len(),
        },
        washout: task.washout(),
        metric: task.metric(),
    })
}

fn build_pipeline(cfg: &ExperimentConfig, task: &TaskInstance, noise_seed: u64) -> Result<Pipeline> {
    Pipeline::new(
        &cfg.physics,
        &task.data,
        task.washout + task.split.train,
        task.washout,
        noise_seed,
    )
}

fn seconds(since: Instant) -> f64 {
    since.elapsed().as_secs_f64()
}

fn record(
    cfg: &ExperimentConfig,
    score: CvScore,
    band: Option<usize>,
    interlayer_db: Option<Vec<f64>>,
    timing: PhaseTiming,
) -> Result<ResultRecord> {
    let config = ExperimentConfig {
        sweep: None,
        ..cfg.clone()
    };
    log::info!(
        "run task={} mode={} band={:?} metric={} mean={:.6e} std={:.6e} physics_s={:.3} dynamics_s={:.3} training_s={:.3} optimization_s={:.3}",
        cfg.task.name(),
        cfg.mode,
        band,
        cfg.task.metric().name(),
        score.mean,
        score.std,
        timing.physics_s,
        timing.dynamics_s,
        timing.training_s,
        timing.optimization_s
    );
    Ok(ResultRecord {
        config_hash: config.hash()?,
        version: version_string(),
        seed: cfg.seed,
        mode: cfg.mode,
        task: cfg.task.name().to_string(),
        metric: cfg.task.metric(),
        band,
        axis: None,
        axis_value: None,
        mean: score.mean,
        std: score.std,
        fold_scores: score.fold_scores,
        lambdas: score.lambdas,
        interlayer_db,
        timing,
        config,
    })
}

/// Runs the configured mode once; any sweep section is ignored.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Shallow => run_shallow(cfg),
        Mode::Parallel => run_parallel(cfg),
        Mode::Deep => run_deep(cfg),
    }
}

fn run_feedforward(cfg: &ExperimentConfig, mode: Mode) -> Result<RunOutcome> {
    let mut timing = PhaseTiming::default();
    let t = Instant::now();
    let task = load_task(&cfg.task)?;
    let pipeline = build_pipeline(cfg, &task, cfg.seed)?;
    timing.physics_s = seconds(t);
    let t = Instant::now();
    let features = pipeline.features(mode, None)?;
    timing.dynamics_s = seconds(t);
    let t = Instant::now();
    let score = cross_validate(&features, &pipeline.target, &cfg.ridge_config(), task.split, task.metric)?;
    timing.training_s = seconds(t);
    Ok(RunOutcome {
        record: record(cfg, score, None, None, timing)?,
        sweep: None,
        cmaes: None,
    })
}

/// Band 1 alone on the task.
pub fn run_shallow(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_feedforward(cfg, Mode::Shallow)
}

/// Both bands on the same input, one readout over all lines.
pub fn run_parallel(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_feedforward(cfg, Mode::Parallel)
}

/// Both bands in series: the inter-layer mask is optimized on a fixed
/// partition, then the cascade is scored with the full cross-validation.
pub fn run_deep(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut timing = PhaseTiming::default();
    let t = Instant::now();
    let task = load_task(&cfg.task)?;
    let pipeline = build_pipeline(cfg, &task, cfg.seed)?;
    timing.physics_s = seconds(t);

    let ridge = cfg.ridge_config();
    let context = ObjectiveContext {
        pipeline: &pipeline,
        ridge: &ridge,
        split: task.split,
        metric: task.metric,
        fold: cfg.ridge.optimization_fold,
    };
    let n = cfg.physics.n_lines;
    let t = Instant::now();
    let (weights_db, sweep, cmaes) = match &cfg.interlayer {
        InterlayerStrategy::None => {
            return Err(Error::config("interlayer.strategy", "deep mode needs an inter-layer strategy"));
        }
        InterlayerStrategy::UniformSweep(sweep_cfg) => {
            let result = attenuation_sweep(|w| context.evaluate(w), sweep_cfg, n)?;
            (vec![result.best_db; n], Some(result), None)
        }
        InterlayerStrategy::Cmaes(strategy) => {
            let mut optimizer = strategy.optimizer.clone();
            optimizer.seed = cfg.seed;
            let result = if strategy.evaluation_noise {
                let noisy = |x: &[f64]| noisy_objective(cfg, &task, x);
                optimize_cmaes(noisy, n, strategy.x0_db, &optimizer)?
            } else {
                optimize_cmaes(|x| objective_from_pipeline(x, &context), n, strategy.x0_db, &optimizer)?
            };
            if !result.best_score.is_finite() {
                return Err(Error::Numerical("no CMA-ES candidate produced a finite score".into()));
            }
            (result.best_x.clone(), None, Some(result))
        }
    };
    timing.optimization_s = seconds(t);

    let t = Instant::now();
    let features = pipeline.features(Mode::Deep, Some(&db_to_weights(&weights_db)?))?;
    timing.dynamics_s = seconds(t);
    let t = Instant::now();
    let score = cross_validate(&features, &pipeline.target, &ridge, task.split, task.metric)?;
    timing.training_s = seconds(t);
    Ok(RunOutcome {
        record: record(cfg, score, None, Some(weights_db), timing)?,
        sweep,
        cmaes,
    })
}

/// Seed derived from the candidate itself, so the noise draw is fresh for
/// every distinct candidate yet independent of evaluation order.
fn candidate_seed(seed: u64, x: &[f64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for v in x {
        hasher.update(v.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Objective with the channel noise and detection noise re-drawn per candidate.
fn noisy_objective(cfg: &ExperimentConfig, task: &TaskInstance, x: &[f64]) -> f64 {
    let noise_seed = candidate_seed(cfg.seed, x);
    let outcome = (|| {
        let data = match &cfg.task {
            TaskConfig::Channel(spec) => channel_task_data_with_noise(spec, noise_seed)?,
            TaskConfig::Santafe(_) => task.data.clone(),
        };
        let instance = TaskInstance {
            data,
            ..task.clone()
        };
        let pipeline = build_pipeline(cfg, &instance, noise_seed)?;
        let ridge = cfg.ridge_config();
        let context = ObjectiveContext {
            pipeline: &pipeline,
            ridge: &ridge,
            split: task.split,
            metric: task.metric,
            fold: cfg.ridge.optimization_fold,
        };
        Ok::<f64, Error>(objective_from_pipeline(x, &context))
    })();
    outcome.unwrap_or_else(|e| {
        log::warn!("noisy objective failed: {e}");
        f64::NAN
    })
}

/// Deep mode with the inter-layer mask forced to the given weights.
pub fn run_deep_with_weights(cfg: &ExperimentConfig, weights: &InterlayerWeights) -> Result<CvScore> {
    let task = load_task(&cfg.task)?;
    let pipeline = build_pipeline(cfg, &task, cfg.seed)?;
    let features = pipeline.features(Mode::Deep, Some(weights))?;
    cross_validate(&features, &pipeline.target, &cfg.ridge_config(), task.split, task.metric)
}

/// One band (0 or 1) alone on the task.
pub fn run_band(cfg: &ExperimentConfig, band: usize) -> Result<ResultRecord> {
    let mut timing = PhaseTiming::default();
    let t = Instant::now();
    let task = load_task(&cfg.task)?;
    let pipeline = build_pipeline(cfg, &task, cfg.seed)?;
    timing.physics_s = seconds(t);
    let t = Instant::now();
    let features = pipeline.band_features(band)?;
    timing.dynamics_s = seconds(t);
    let t = Instant::now();
    let score = cross_validate(&features, &pipeline.target, &cfg.ridge_config(), task.split, task.metric)?;
    timing.training_s = seconds(t);
    let shallow = ExperimentConfig {
        mode: Mode::Shallow,
        ..cfg.clone()
    };
    record(&shallow, score, Some(band + 1), None, timing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub version: String,
    pub mode: Mode,
    pub task: String,
    pub metric: Metric,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub best_value: f64,
    pub best_mean: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<RunOutcome>,
    pub summary: SweepSummary,
}

fn sweep_section(cfg: &ExperimentConfig) -> Result<(SweepAxis, Vec<f64>)> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "no sweep section in the configuration"))?;
    Ok((sweep.axis, sweep.values.clone()))
}

/// Runs the configured mode at every sweep value; points run concurrently
/// and are returned in grid order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let (axis, values) = sweep_section(cfg)?;
    let points: Vec<RunOutcome> = values
        .par_iter()
        .map(|&v| {
            let mut outcome = run_experiment(&cfg.at_point(axis, v)?)?;
            outcome.record.axis = Some(axis);
            outcome.record.axis_value = Some(v);
            Ok(outcome)
        })
        .collect::<Result<_>>()?;
    let means: Vec<f64> = points.iter().map(|p| p.record.mean).collect();
    let stds: Vec<f64> = points.iter().map(|p| p.record.std).collect();
    let best = (0..means.len())
        .min_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)))
        .expect("sweep grid is non-empty");
    let summary = SweepSummary {
        config_hash: cfg.hash()?,
        version: version_string(),
        mode: cfg.mode,
        task: cfg.task.name().to_string(),
        metric: cfg.task.metric(),
        axis,
        best_value: values[best],
        best_mean: means[best],
        values,
        means,
        stds,
    };
    Ok(SweepOutcome { points, summary })
}

/// Per-band shallow scores at one line spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaPoint {
    pub omega_ghz: f64,
    pub bands: [ResultRecord; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaScan {
    pub config_hash: String,
    pub version: String,
    pub metric: Metric,
    pub points: Vec<OmegaPoint>,
    /// Best line spacing of each band.
    pub best_omega_ghz: [f64; 2],
}

/// Scores each band alone across the line spacings of an `omega_detuning`
/// sweep; dispersion is re-derived from each spacing.
pub fn run_omega_scan(cfg: &ExperimentConfig) -> Result<OmegaScan> {
    cfg.validate()?;
    let (axis, values) = sweep_section(cfg)?;
    if axis != SweepAxis::OmegaDetuning {
        return Err(Error::config("sweep.axis", "omega scan needs the omega_detuning axis"));
    }
    let points: Vec<OmegaPoint> = values
        .par_iter()
        .map(|&omega| {
            let point = cfg.at_point(axis, omega)?;
            let run = |band: usize| {
                run_band(&point, band).map(|mut r| {
                    r.axis = Some(axis);
                    r.axis_value = Some(omega);
                    r
                })
            };
            Ok(OmegaPoint {
                omega_ghz: omega,
                bands: [run(0)?, run(1)?],
            })
        })
        .collect::<Result<_>>()?;
    let best = |band: usize| {
        points
            .iter()
            .min_by(|a, b| a.bands[band].mean.total_cmp(&b.bands[band].mean))
            .map_or(f64::NAN, |p| p.omega_ghz)
    };
    Ok(OmegaScan {
        config_hash: cfg.hash()?,
        version: version_string(),
        metric: cfg.task.metric(),
        best_omega_ghz: [best(0), best(1)],
        points,
    })
}

/// Re-runs the configuration embedded in `record`.
pub fn reproduce(record: &ResultRecord) -> Result<ResultRecord> {
    let mut again = match record.band {
        Some(band) if band >= 1 => run_band(&record.config, band - 1)?,
        Some(_) => return Err(Error::InvalidParameter("band numbers start at 1".into())),
        None => run_experiment(&record.config)?.record,
    };
    again.axis = record.axis;
    again.axis_value = record.axis_value;
    Ok(again)
}

/// One comb line of the input spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    pub band: usize,
    pub line: usize,
    pub index: i64,
    pub offset_ghz: f64,
    pub wavelength_nm: f64,
    pub input_amplitude: f64,
    /// Line power relative to the strongest line of the band.
    pub power_db: f64,
}

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Input comb `|W_in|` of both bands with line positions.
pub fn comb_spectrum(physics: &PhysicsConfig) -> Result<Vec<SpectrumLine>> {
    physics.validate()?;
    let mut lines = Vec::new();
    for band in 0..2 {
        let (spec, pm_input, _, _) = physics.band_components(band)?;
        let w_in = build_input_vector(&spec, &pm_input)?;
        let peak = w_in.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let center = spec.center_wavelength_nm;
        for (i, z) in w_in.iter().enumerate() {
            let k = line_index(i, spec.n_lines);
            let offset_ghz = k as f64 * spec.line_spacing_ghz;
            let power = z.norm_sqr();
            lines.push(SpectrumLine {
                band: band + 1,
                line: i,
                index: k,
                offset_ghz,
                // nm² · GHz / (m/s) comes out in nm
                wavelength_nm: center - center * center * offset_ghz / SPEED_OF_LIGHT,
                input_amplitude: z.norm(),
                power_db: if peak > 0.0 && power > 0.0 {
                    10.0 * (power / peak).log10()
                } else {
                    f64::NEG_INFINITY
                },
            });
        }
    }
    Ok(lines)
}

/// Uniform mask with attenuation `att_db` on `n` lines.
pub fn uniform_weights(n: usize, att_db: f64) -> Result<InterlayerWeights> {
    InterlayerWeights::uniform(n, db_to_amplitude(att_db))
}

//! Feature extraction for the three ways of using the two-band substrate on
//! one task: a single reservoir, two decoupled reservoirs sharing the
//! readout, and the two reservoirs in series.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::readout::fold_rng;
use crate::reservoir::{
    calibrate_scalers, concat_deep_state, run_deep, run_sequence, InterlayerWeights, LayerState,
    ReservoirParams, SignalScaler, Trace,
};
use crate::system::PhysicsConfig;
use crate::tasks::{scale_to_phase_range, TaskData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Shallow,
    Parallel,
    Deep,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Shallow, Mode::Parallel, Mode::Deep];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Shallow => "shallow",
            Mode::Parallel => "parallel",
            Mode::Deep => "deep",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shallow" => Ok(Mode::Shallow),
            "parallel" => Ok(Mode::Parallel),
            "deep" => Ok(Mode::Deep),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// A built substrate bound to one task instance. Immutable once built, so
/// many feature extractions may run concurrently.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub bands: [ReservoirParams; 2],
    pub drive: Vec<f64>,
    pub target: Vec<f64>,
    pub scalers: Vec<SignalScaler>,
    physics: PhysicsConfig,
    noise_seed: u64,
}

impl Pipeline {
    /// `reference_len` samples at the start of the input fix the input
    /// scaling; the first `washout` samples calibrate the inter-layer gain
    /// at full transmission.
    pub fn new(
        physics: &PhysicsConfig,
        data: &TaskData,
        reference_len: usize,
        washout: usize,
        noise_seed: u64,
    ) -> Result<Self> {
        physics.validate()?;
        if data.input.len() != data.target.len() {
            return Err(Error::Dimension(format!(
                "{} inputs for {} targets",
                data.input.len(),
                data.target.len()
            )));
        }
        let bands = physics.build_bands()?;
        let [lo, hi] = physics.input_phase_range;
        let drive = scale_to_phase_range(&data.input, reference_len, physics.mzm.gamma, lo, hi);
        let reference = [InterlayerWeights::uniform(physics.n_lines, 1.0)?];
        let scalers = calibrate_scalers(
            &drive,
            &bands,
            &reference,
            washout.max(1),
            physics.interlayer_phase_range,
            physics.cascade_timing,
        )?;
        Ok(Self {
            bands,
            drive,
            target: data.target.clone(),
            scalers,
            physics: physics.clone(),
            noise_seed,
        })
    }

    pub fn n_lines(&self) -> usize {
        self.physics.n_lines
    }

    /// Intensities of one band driven alone by the task input.
    pub fn band_features(&self, band: usize) -> Result<DMatrix<f64>> {
        let params = self.bands.get(band).ok_or_else(|| {
            Error::InvalidParameter(format!("band {band} does not exist"))
        })?;
        let mut trace = run_sequence(&self.drive, params, &LayerState::zeros(self.n_lines()), false)
            .map_err(|e| relabel_layer(e, band + 1))?;
        self.add_noise(&mut trace)?;
        Ok(trace.intensities)
    }

    /// Intensity features of `mode`; `interlayer` is required for deep mode and ignored otherwise.
    pub fn features(&self, mode: Mode, interlayer: Option<&InterlayerWeights>) -> Result<DMatrix<f64>> {
        let n = self.n_lines();
        let mut trace = match mode {
            Mode::Shallow => run_sequence(&self.drive, &self.bands[0], &LayerState::zeros(n), false)?,
            Mode::Parallel => {
                let a = run_sequence(&self.drive, &self.bands[0], &LayerState::zeros(n), false)?;
                let b = run_sequence(&self.drive, &self.bands[1], &LayerState::zeros(n), false)
                    .map_err(|e| relabel_layer(e, 2))?;
                concat_deep_state(&[a, b])?
            }
            Mode::Deep => {
                let w = interlayer.ok_or_else(|| {
                    Error::config("interlayer", "deep mode needs inter-layer weights")
                })?;
                let traces = run_deep(
                    &self.drive,
                    &self.bands,
                    std::slice::from_ref(w),
                    &self.scalers,
                    self.physics.cascade_timing,
                )?;
                concat_deep_state(&traces)?
            }
        };
        self.add_noise(&mut trace)?;
        Ok(trace.intensities)
    }

    fn add_noise(&self, trace: &mut Trace) -> Result<()> {
        if self.physics.detection_noise_std > 0.0 {
            let mut rng = fold_rng(self.noise_seed, u64::MAX);
            trace.add_detection_noise(self.physics.detection_noise_std, &mut rng)?;
        }
        Ok(())
    }
}

fn relabel_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::Divergence { step, .. } => Error::Divergence { layer, step },
        other => other,
    }
}

//! Benchmark data: the shifted chaotic-series task and the nonlinear channel
//! equalization task.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftTaskSpec {
    /// Positive values ask for the future, negative for the past.
    pub tau: i32,
    pub train_len: usize,
    pub test_len: usize,
    pub washout: usize,
}

impl Default for ShiftTaskSpec {
    fn default() -> Self {
        Self {
            tau: 1,
            train_len: 6000,
            test_len: 2500,
            washout: 500,
        }
    }
}

impl ShiftTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tau.abs() > 5 {
            return Err(Error::config("task.tau", format!("|tau| must be at most 5, got {}", self.tau)));
        }
        if self.train_len == 0 || self.test_len == 0 {
            return Err(Error::config("task", "train and test lengths must be positive"));
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.washout + self.train_len + self.test_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelTaskSpec {
    pub snr_db: f64,
    pub train_len: usize,
    pub test_len: usize,
    pub washout: usize,
    pub seed: u64,
    /// The readout reconstructs `d(n - target_delay)` from the channel output up to `u(n)`.
    pub target_delay: usize,
}

impl Default for ChannelTaskSpec {
    fn default() -> Self {
        Self {
            snr_db: 28.0,
            train_len: 14000,
            test_len: 30000,
            washout: 1000,
            seed: 0,
            target_delay: 2,
        }
    }
}

impl ChannelTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(8.0..=32.0).contains(&self.snr_db) {
            return Err(Error::config(
                "task.snr_db",
                format!("SNR must lie in [8, 32] dB, got {}", self.snr_db),
            ));
        }
        if self.train_len == 0 || self.test_len == 0 {
            return Err(Error::config("task", "train and test lengths must be positive"));
        }
        if self.target_delay > CHANNEL_LAG {
            return Err(Error::config(
                "task.target_delay",
                format!("target delay must be at most {CHANNEL_LAG}"),
            ));
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.washout + self.train_len + self.test_len
    }
}

/// Reads one decimal sample per line (LF or CRLF; blank lines skipped) and
/// standardizes to zero mean and unit variance.
pub fn load_series(path: &Path, min_len: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("`{line}` is not a number ({e})"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: "non-finite sample".into(),
            });
        }
        values.push(v);
    }
    if values.len() < min_len.max(2) {
        return Err(Error::InsufficientData(format!(
            "{} holds {} samples, need at least {}",
            path.display(),
            values.len(),
            min_len.max(2)
        )));
    }
    standardize(&mut values)?;
    Ok(values)
}

pub fn standardize(values: &mut [f64]) -> Result<()> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::InvalidParameter("series has zero variance".into()));
    }
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Ok(())
}

/// Pairs `(u_t, u_{t+τ})`, trimming the samples where either side is undefined.
pub fn make_shift_target<T: Clone>(u: &[T], tau: i32) -> Result<(Vec<T>, Vec<T>)> {
    let shift = tau.unsigned_abs() as usize;
    if shift >= u.len() {
        return Err(Error::InvalidParameter(format!(
            "shift {tau} needs more than {} samples",
            u.len()
        )));
    }
    let len = u.len() - shift;
    let (inputs, targets) = if tau >= 0 {
        (&u[..len], &u[shift..])
    } else {
        (&u[shift..], &u[..len])
    };
    Ok((inputs.to_vec(), targets.to_vec()))
}

/// Chaotic surrogate for the far-infrared laser series: intensity `x²` of a
/// Lorenz system (the single-mode laser equations), sampled every 0.08 time
/// units. Deterministic per seed.
pub fn santa_fe_surrogate(len: usize, seed: u64) -> Vec<f64> {
    const DT: f64 = 0.01;
    const SUBSTEPS: usize = 8;
    const TRANSIENT: usize = 5000;
    let (sigma, rho, beta) = (10.0, 28.0, 8.0 / 3.0);
    let field = |s: [f64; 3]| {
        [
            sigma * (s[1] - s[0]),
            s[0] * (rho - s[2]) - s[1],
            s[0] * s[1] - beta * s[2],
        ]
    };
    let rk4 = |s: [f64; 3]| {
        let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
        let k1 = field(s);
        let k2 = field(add(s, k1, DT / 2.0));
        let k3 = field(add(s, k2, DT / 2.0));
        let k4 = field(add(s, k3, DT));
        [
            s[0] + DT / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + DT / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            s[2] + DT / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        ]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = [
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(10.0..30.0),
    ];
    for _ in 0..TRANSIENT {
        s = rk4(s);
    }
    (0..len)
        .map(|_| {
            for _ in 0..SUBSTEPS {
                s = rk4(s);
            }
            s[0] * s[0]
        })
        .collect()
}

/// One of the four channel symbols `{-3, -1, +1, +3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol(i8);

impl Symbol {
    pub const ALPHABET: [Symbol; 4] = [Symbol(-3), Symbol(-1), Symbol(1), Symbol(3)];

    pub fn new(value: i8) -> Result<Self> {
        match value {
            -3 | -1 | 1 | 3 => Ok(Symbol(value)),
            _ => Err(Error::InvalidParameter(format!("{value} is not a channel symbol"))),
        }
    }

    pub fn value(self) -> f64 {
        self.0 as f64
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn gen_symbols(length: usize, seed: u64) -> Vec<Symbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..length)
        .map(|_| Symbol::ALPHABET[rng.random_range(0..4)])
        .collect()
}

/// Linear channel taps applied to `d(n + 2), d(n + 1), ..., d(n - 7)`.
pub const CHANNEL_TAPS: [f64; 10] = [0.08, -0.12, 1.0, 0.18, -0.1, 0.091, -0.05, 0.04, 0.03, 0.01];
/// Channel output `u[j]` belongs to symbol index `j + CHANNEL_LAG`.
pub const CHANNEL_LAG: usize = 7;
const CHANNEL_LEAD: usize = 2;

/// Memory-10 linear filter, cubic memoryless distortion and white Gaussian
/// noise at `snr_db` relative to the noiseless output power. An infinite SNR
/// adds no noise.
///
/// The output has `d.len() - 9` samples; `u[j]` is aligned with `d[j + 7]`.
pub fn channel_distort(d: &[Symbol], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if d.len() < 11 {
        return Err(Error::InsufficientData(format!(
            "channel needs at least 11 symbols, got {}",
            d.len()
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidParameter("SNR is NaN".into()));
    }
    let clean: Vec<f64> = (CHANNEL_LAG..d.len() - CHANNEL_LEAD)
        .map(|n| {
            let q: f64 = CHANNEL_TAPS
                .iter()
                .enumerate()
                .map(|(i, tap)| tap * d[n + CHANNEL_LEAD - i].value())
                .sum();
            q + 0.036 * q * q - 0.011 * q * q * q
        })
        .collect();
    if snr_db == f64::INFINITY {
        return Ok(clean);
    }
    let power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let noise_std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, noise_std)
        .map_err(|e| Error::InvalidParameter(format!("channel noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(clean.into_iter().map(|v| v + normal.sample(&mut rng)).collect())
}

/// Nearest channel symbol; exact midpoints go to the smaller symbol.
pub fn quantize_symbol(y: f64) -> Symbol {
    if y <= -2.0 {
        Symbol(-3)
    } else if y <= 0.0 {
        Symbol(-1)
    } else if y <= 2.0 {
        Symbol(1)
    } else {
        Symbol(3)
    }
}

/// Input sequence and aligned regression targets of one benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Channel input `u(n)` paired with `d(n - target_delay)`, `spec.total_len()` samples.
pub fn channel_task_data(spec: &ChannelTaskSpec) -> Result<TaskData> {
    // independent stream for the noise
    channel_task_data_with_noise(spec, spec.seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// As [`channel_task_data`] with the channel noise drawn from `noise_seed`.
pub fn channel_task_data_with_noise(spec: &ChannelTaskSpec, noise_seed: u64) -> Result<TaskData> {
    spec.validate()?;
    let n = spec.total_len();
    let symbols = gen_symbols(n + CHANNEL_LAG + CHANNEL_LEAD, spec.seed);
    let input = channel_distort(&symbols, spec.snr_db, noise_seed)?;
    let target = (0..n)
        .map(|j| symbols[j + CHANNEL_LAG - spec.target_delay].value())
        .collect();
    Ok(TaskData { input, target })
}

/// Shift task on a standardized series, `spec.total_len()` samples.
pub fn shift_task_data(series: &[f64], spec: &ShiftTaskSpec) -> Result<TaskData> {
    spec.validate()?;
    let (input, target) = make_shift_target(series, spec.tau)?;
    let n = spec.total_len();
    if input.len() < n {
        return Err(Error::InsufficientData(format!(
            "series of {} samples is too short for {} shifted pairs",
            series.len(),
            n
        )));
    }
    Ok(TaskData {
        input: input[..n].to_vec(),
        target: target[..n].to_vec(),
    })
}

/// Affine map sending `[min, max]` of `values[..reference_len]` onto
/// `[lo / gamma, hi / gamma]`, so that the modulator phase `gamma * u` spans `[lo, hi]`.
pub fn scale_to_phase_range(values: &[f64], reference_len: usize, gamma: f64, lo: f64, hi: f64) -> Vec<f64> {
    let reference = &values[..reference_len.clamp(1, values.len().max(1)).min(values.len())];
    let min = reference.iter().copied().fold(f64::INFINITY, f64::min);
    let max = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if !(span > 0.0) {
        return vec![(lo + hi) / (2.0 * gamma); values.len()];
    }
    let a = (hi - lo) / (span * gamma);
    let b = lo / gamma - a * min;
    values.iter().map(|v| a * v + b).collect()
}

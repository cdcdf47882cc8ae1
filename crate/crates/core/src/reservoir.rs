//! Discrete-time dynamics of a frequency-multiplexed reservoir and of a
//! serial cascade of such reservoirs.
//!
//! One layer evolves as `x[n] = W x[n-1] + W_in f(u[n])` with the MZM sine
//! nonlinearity `f`. Only comb-line intensities `|x_k|²` are observed. In a
//! cascade, layer `i + 1` is driven by the photodiode signal
//! `Σ_k w_k² |x_k|²` of layer `i`, rescaled into the drive range of the next
//! MZM.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::comb::MzmParams;
use crate::error::{Error, Result};

/// Any comb-line amplitude above this aborts a run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirParams {
    pub w: DMatrix<Complex64>,
    pub w_in: DVector<Complex64>,
    pub mzm: MzmParams,
}

impl ReservoirParams {
    pub fn new(w: DMatrix<Complex64>, w_in: DVector<Complex64>, mzm: MzmParams) -> Result<Self> {
        let params = Self { w, w_in, mzm };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.w.is_square() {
            return Err(Error::Dimension(format!(
                "internal matrix is {}x{}",
                self.w.nrows(),
                self.w.ncols()
            )));
        }
        if self.w_in.len() != self.w.nrows() {
            return Err(Error::Dimension(format!(
                "input vector has {} entries for {} neurons",
                self.w_in.len(),
                self.w.nrows()
            )));
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        if !self.w.iter().all(finite) || !self.w_in.iter().all(finite) {
            return Err(Error::InvalidParameter("non-finite reservoir weights".into()));
        }
        self.mzm.validate()
    }

    pub fn n_neurons(&self) -> usize {
        self.w.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub x: DVector<Complex64>,
}

impl LayerState {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: DVector::zeros(n),
        }
    }

    pub fn from_vec(x: Vec<Complex64>) -> Self {
        Self {
            x: DVector::from_vec(x),
        }
    }

    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().map(|z| z.norm_sqr())
    }
}

/// Time-indexed record of one or more layers: row `n` holds the line
/// intensities after step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub intensities: DMatrix<f64>,
    pub states: Option<DMatrix<Complex64>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.intensities.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.intensities.ncols()
    }

    /// Adds zero-mean Gaussian noise of standard deviation `std` to every
    /// intensity sample.
    pub fn add_detection_noise<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) -> Result<()> {
        if std == 0.0 {
            return Ok(());
        }
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidParameter(format!("detection noise: {e}")))?;
        for v in self.intensities.iter_mut() {
            *v += normal.sample(rng);
        }
        Ok(())
    }
}

/// Diagonal of the attenuation mask between two layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterlayerWeights {
    pub diag: Vec<f64>,
}

impl InterlayerWeights {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if let Some(bad) = diag.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "inter-layer weights must be non-negative, found {bad}"
            )));
        }
        Ok(Self { diag })
    }

    pub fn uniform(n: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![0.0; n] }
    }
}

/// Affine map from photodiode signal to the next layer's MZM input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalScaler {
    pub gain: f64,
    pub offset: f64,
}

impl SignalScaler {
    pub const IDENTITY: SignalScaler = SignalScaler {
        gain: 1.0,
        offset: 0.0,
    };

    pub fn apply(&self, signal: f64) -> f64 {
        self.gain * signal + self.offset
    }

    /// Affine map taking a dark photodiode to `gamma * drive = phase_range[0]`
    /// and the largest observed signal to `phase_range[1]`. Falls back to unit
    /// gain for an all-zero signal.
    pub fn calibrate(signals: &[f64], gamma: f64, phase_range: [f64; 2]) -> Self {
        let [floor, peak] = phase_range;
        let max = signals.iter().copied().fold(0.0, f64::max);
        let gain = if max > 0.0 {
            (peak - floor) / (gamma * max)
        } else {
            1.0
        };
        Self {
            gain,
            offset: floor / gamma,
        }
    }
}

/// When a layer sees the output of the layer before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeTiming {
    /// Layer `i`'s state at step `n` drives layer `i + 1` at step `n`.
    #[default]
    SameStep,
    /// Layer `i`'s state at step `n - 1` drives layer `i + 1` at step `n`.
    OneStepDelay,
}

pub fn input_nonlinearity(u: f64, mzm: &MzmParams) -> f64 {
    mzm.e0 * (mzm.gamma * u).sin()
}

pub fn step(state: &LayerState, u: f64, params: &ReservoirParams) -> Result<LayerState> {
    check_dims(state, params)?;
    let mut next = DVector::zeros(params.n_neurons());
    advance(&mut next, &state.x, u, params);
    Ok(LayerState { x: next })
}

fn check_dims(state: &LayerState, params: &ReservoirParams) -> Result<()> {
    if state.x.len() != params.n_neurons() || params.w_in.len() != params.n_neurons() {
        return Err(Error::Dimension(format!(
            "state of length {} for a {}-neuron reservoir",
            state.x.len(),
            params.n_neurons()
        )));
    }
    Ok(())
}

#[inline]
fn advance(next: &mut DVector<Complex64>, x: &DVector<Complex64>, u: f64, params: &ReservoirParams) {
    let one = Complex64::new(1.0, 0.0);
    next.gemv(one, &params.w, x, Complex64::new(0.0, 0.0));
    next.axpy(Complex64::from(input_nonlinearity(u, &params.mzm)), &params.w_in, one);
}

fn check_bounded(x: &DVector<Complex64>, layer: usize, step: usize) -> Result<()> {
    let ok = x
        .iter()
        .all(|z| z.re.is_finite() && z.im.is_finite() && z.norm() <= DIVERGENCE_THRESHOLD);
    if ok {
        Ok(())
    } else {
        Err(Error::Divergence { layer, step })
    }
}

/// Drives one layer with `u_seq` starting from `x0`.
pub fn run_sequence(
    u_seq: &[f64],
    params: &ReservoirParams,
    x0: &LayerState,
    record_states: bool,
) -> Result<Trace> {
    if u_seq.is_empty() {
        return Err(Error::InsufficientData("empty input sequence".into()));
    }
    check_dims(x0, params)?;
    let n = params.n_neurons();
    let t = u_seq.len();
    let mut intensities = DMatrix::zeros(t, n);
    let mut states = record_states.then(|| DMatrix::zeros(t, n));
    let mut x = x0.x.clone();
    let mut next = DVector::zeros(n);
    for (step_idx, &u) in u_seq.iter().enumerate() {
        advance(&mut next, &x, u, params);
        std::mem::swap(&mut x, &mut next);
        check_bounded(&x, 1, step_idx)?;
        for k in 0..n {
            intensities[(step_idx, k)] = x[k].norm_sqr();
        }
        if let Some(s) = states.as_mut() {
            s.row_mut(step_idx).tr_copy_from(&x);
        }
    }
    Ok(Trace {
        intensities,
        states,
    })
}

/// Signed quadratic readout `Σ (w⁺_k)² |x_k|² - Σ (w⁻_k)² |x_k|²`.
pub fn quadratic_readout(x: &LayerState, w_plus: &[f64], w_minus: &[f64]) -> Result<f64> {
    if w_plus.len() != x.x.len() || w_minus.len() != x.x.len() {
        return Err(Error::Dimension(format!(
            "readout diagonals of length {}/{} for a state of length {}",
            w_plus.len(),
            w_minus.len(),
            x.x.len()
        )));
    }
    if w_plus.iter().chain(w_minus).any(|w| *w < 0.0) {
        return Err(Error::InvalidParameter("readout diagonal entries must be non-negative".into()));
    }
    Ok(x
        .intensities()
        .zip(w_plus.iter().zip(w_minus))
        .map(|(i, (p, m))| (p * p - m * m) * i)
        .sum())
}

/// Photodiode signal behind the attenuation mask, `Σ w_k² |x_k|²`.
pub fn interlayer_signal(x: &LayerState, w: &InterlayerWeights) -> Result<f64> {
    if w.diag.len() != x.x.len() {
        return Err(Error::Dimension(format!(
            "{} inter-layer weights for a state of length {}",
            w.diag.len(),
            x.x.len()
        )));
    }
    Ok(signal_from(&x.x, &w.diag))
}

#[inline]
fn signal_from(x: &DVector<Complex64>, diag: &[f64]) -> f64 {
    x.iter().zip(diag).map(|(z, w)| w * w * z.norm_sqr()).sum()
}

/// Runs a serial cascade from the zero state. Layer 1 sees `u_seq`; layer
/// `i + 1` sees `scalers[i](interlayer_signal(x⁽ⁱ⁾, interlayer[i]))`.
pub fn run_deep(
    u_seq: &[f64],
    layer_params: &[ReservoirParams],
    interlayer: &[InterlayerWeights],
    scalers: &[SignalScaler],
    timing: CascadeTiming,
) -> Result<Vec<Trace>> {
    let n_layers = layer_params.len();
    if n_layers == 0 {
        return Err(Error::InvalidParameter("a cascade needs at least one layer".into()));
    }
    if interlayer.len() != n_layers - 1 || scalers.len() != n_layers - 1 {
        return Err(Error::Dimension(format!(
            "{n_layers} layers need {} inter-layer masks and scalers, got {} and {}",
            n_layers - 1,
            interlayer.len(),
            scalers.len()
        )));
    }
    if u_seq.is_empty() {
        return Err(Error::InsufficientData("empty input sequence".into()));
    }
    for (i, p) in layer_params.iter().enumerate() {
        p.validate()?;
        if i + 1 < n_layers && interlayer[i].diag.len() != p.n_neurons() {
            return Err(Error::Dimension(format!(
                "inter-layer mask {} has {} entries for {} neurons",
                i + 1,
                interlayer[i].diag.len(),
                p.n_neurons()
            )));
        }
    }

    let t = u_seq.len();
    let mut states: Vec<DVector<Complex64>> =
        layer_params.iter().map(|p| DVector::zeros(p.n_neurons())).collect();
    let mut scratch: Vec<DVector<Complex64>> = states.clone();
    let mut out: Vec<DMatrix<f64>> = layer_params
        .iter()
        .map(|p| DMatrix::zeros(t, p.n_neurons()))
        .collect();

    for (n, &u) in u_seq.iter().enumerate() {
        let mut drive = u;
        for layer in 0..n_layers {
            // delayed cascade reads the previous layer's state before this step overwrote it
            let delayed_signal = if layer + 1 < n_layers && timing == CascadeTiming::OneStepDelay {
                Some(signal_from(&states[layer], &interlayer[layer].diag))
            } else {
                None
            };
            advance(&mut scratch[layer], &states[layer], drive, &layer_params[layer]);
            std::mem::swap(&mut states[layer], &mut scratch[layer]);
            check_bounded(&states[layer], layer + 1, n)?;
            for (k, z) in states[layer].iter().enumerate() {
                out[layer][(n, k)] = z.norm_sqr();
            }
            if layer + 1 < n_layers {
                let signal = delayed_signal
                    .unwrap_or_else(|| signal_from(&states[layer], &interlayer[layer].diag));
                drive = scalers[layer].apply(signal);
            }
        }
    }

    Ok(out
        .into_iter()
        .map(|intensities| Trace {
            intensities,
            states: None,
        })
        .collect())
}

/// Feature matrix of the total readout: layer 1's lines first, then layer 2's, ...
pub fn concat_deep_state(traces: &[Trace]) -> Result<Trace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no traces to concatenate".into()))?;
    let t = first.len();
    if let Some(bad) = traces.iter().find(|tr| tr.len() != t) {
        return Err(Error::Dimension(format!(
            "trace lengths differ: {} vs {}",
            t,
            bad.len()
        )));
    }
    let width: usize = traces.iter().map(Trace::width).sum();
    let mut intensities = DMatrix::zeros(t, width);
    let mut col = 0;
    for tr in traces {
        intensities
            .view_mut((0, col), (t, tr.width()))
            .copy_from(&tr.intensities);
        col += tr.width();
    }
    Ok(Trace {
        intensities,
        states: None,
    })
}

/// Gains that map each cascade link's photodiode signal, measured with the
/// `reference` masks over `u_seq[..prefix_len]`, onto `phase_range / γ`.
pub fn calibrate_scalers(
    u_seq: &[f64],
    layer_params: &[ReservoirParams],
    reference: &[InterlayerWeights],
    prefix_len: usize,
    phase_range: [f64; 2],
    timing: CascadeTiming,
) -> Result<Vec<SignalScaler>> {
    let prefix = &u_seq[..prefix_len.clamp(1, u_seq.len())];
    let mut scalers = Vec::with_capacity(reference.len());
    for link in 0..reference.len() {
        // the first `link` scalers are already fixed; the rest do not affect layer `link`
        let mut trial = scalers.clone();
        trial.resize(reference.len(), SignalScaler::IDENTITY);
        let traces = run_deep(prefix, layer_params, reference, &trial, timing)?;
        let weights: Vec<f64> = reference[link].diag.iter().map(|w| w * w).collect();
        let signals: Vec<f64> = traces[link]
            .intensities
            .row_iter()
            .map(|row| row.iter().zip(&weights).map(|(i, w)| i * w).sum())
            .collect();
        scalers.push(SignalScaler::calibrate(
            &signals,
            layer_params[link + 1].mzm.gamma,
            phase_range,
        ));
    }
    Ok(scalers)
}

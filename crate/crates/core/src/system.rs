//! Assembly of the two-band photonic substrate: both combs share the loop,
//! the phase modulators and the RF clock, and differ in dispersion because
//! they sit at different wavelengths. The bands never exchange power.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comb::{
    build_input_vector, build_internal_matrix, CombSpec, LoopParams, ModulatorParams, MzmParams,
    DEFAULT_GUARD_LINES,
};
use crate::error::{Error, Result};
use crate::reservoir::{CascadeTiming, ReservoirParams};

/// Physical description of the substrate. Unset fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub n_lines: usize,
    pub guard_lines: usize,
    pub line_spacing_ghz: f64,
    /// Spacing at which `dispersion_coeff` is specified; the coefficient scales as `(Ω / Ω_ref)²`.
    pub reference_spacing_ghz: f64,
    pub center_wavelengths_nm: [f64; 2],
    /// Depth of the comb-generating modulator outside the loop.
    pub input_modulation_index: f64,
    /// Depth of the in-loop modulator.
    pub loop_modulation_index: f64,
    pub rf_phase: f64,
    /// Extra RF phase seen by band 2 (group-delay difference between the bands).
    pub band2_rf_phase_offset: f64,
    pub feedback_coupling: f64,
    pub gain: f64,
    pub dispersion_coeff: f64,
    pub band2_dispersion_detuning: f64,
    pub spectral_radius_target: Option<f64>,
    pub mzm: MzmParams,
    /// Modulator phase range `γ u` that the task input is mapped onto.
    pub input_phase_range: [f64; 2],
    /// Modulator phases of a dark photodiode and of the largest inter-layer
    /// signal at full transmission.
    pub interlayer_phase_range: [f64; 2],
    pub cascade_timing: CascadeTiming,
    pub detection_noise_std: f64,
    /// When set, RF phases, dispersion and loop modulation depth are drawn
    /// around the configured values from this seed.
    pub seed: Option<u64>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            n_lines: 20,
            guard_lines: DEFAULT_GUARD_LINES,
            line_spacing_ghz: 17.0,
            reference_spacing_ghz: 17.0,
            center_wavelengths_nm: [1550.2, 1555.4],
            input_modulation_index: 3.0,
            loop_modulation_index: 2.0,
            rf_phase: 0.0,
            band2_rf_phase_offset: 1.0,
            feedback_coupling: 0.5,
            gain: 1.0,
            dispersion_coeff: 0.3,
            band2_dispersion_detuning: 1.13,
            spectral_radius_target: None,
            mzm: MzmParams::default(),
            input_phase_range: [0.6, 1.0],
            interlayer_phase_range: [0.0, FRAC_PI_2],
            cascade_timing: CascadeTiming::SameStep,
            detection_noise_std: 0.0,
            seed: None,
        }
    }
}

/// Physics values actually used to build a substrate, after seeded draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPhysics {
    pub loop_modulation_index: f64,
    pub rf_phase: f64,
    pub band2_rf_phase_offset: f64,
    pub dispersion_coeff: f64,
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Error::config(format!("physics.{name}"), msg);
        if self.n_lines == 0 {
            return Err(field("n_lines", "must be at least 1".into()));
        }
        if self.n_lines + 2 * self.guard_lines > crate::comb::MAX_BAND_LINES {
            return Err(field(
                "guard_lines",
                format!("band exceeds {} simulated lines", crate::comb::MAX_BAND_LINES),
            ));
        }
        for (name, v) in [
            ("line_spacing_ghz", self.line_spacing_ghz),
            ("reference_spacing_ghz", self.reference_spacing_ghz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("input_modulation_index", self.input_modulation_index),
            ("loop_modulation_index", self.loop_modulation_index),
        ] {
            if !(0.0..=crate::comb::MAX_BESSEL_ARGUMENT).contains(&v) {
                return Err(field(name, format!("must lie in [0, 50], got {v}")));
            }
        }
        LoopParams::new(
            self.feedback_coupling,
            self.gain,
            self.dispersion_coeff,
            self.spectral_radius_target,
        )
        .map_err(|e| field("loop", e.to_string()))?;
        if !(self.band2_dispersion_detuning.is_finite()) {
            return Err(field("band2_dispersion_detuning", "must be finite".into()));
        }
        self.mzm.validate().map_err(|e| field("mzm", e.to_string()))?;
        let [lo, hi] = self.input_phase_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(field("input_phase_range", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let [lo, hi] = self.interlayer_phase_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(field("interlayer_phase_range", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if !(self.detection_noise_std >= 0.0 && self.detection_noise_std.is_finite()) {
            return Err(field("detection_noise_std", "must be non-negative".into()));
        }
        Ok(())
    }

    pub fn resolve(&self) -> ResolvedPhysics {
        let mut r = ResolvedPhysics {
            loop_modulation_index: self.loop_modulation_index,
            rf_phase: self.rf_phase,
            band2_rf_phase_offset: self.band2_rf_phase_offset,
            dispersion_coeff: self.dispersion_coeff,
        };
        if let Some(seed) = self.seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            r.rf_phase = rng.random_range(0.0..TAU);
            r.band2_rf_phase_offset = rng.random_range(0.0..TAU);
            r.dispersion_coeff *= rng.random_range(0.5..1.5);
            r.loop_modulation_index *= rng.random_range(0.8..1.2);
        }
        r
    }

    pub fn comb_spec(&self, band: usize) -> Result<CombSpec> {
        CombSpec::new(
            self.center_wavelengths_nm[band],
            self.line_spacing_ghz,
            self.n_lines,
            self.guard_lines,
        )
    }

    /// Loop and modulator parameters of `band` (0 or 1).
    pub fn band_components(&self, band: usize) -> Result<(CombSpec, ModulatorParams, ModulatorParams, LoopParams)> {
        let r = self.resolve();
        let spec = self.comb_spec(band)?;
        let spacing = (self.line_spacing_ghz / self.reference_spacing_ghz).powi(2);
        let (detuning, phase_offset) = if band == 0 {
            (1.0, 0.0)
        } else {
            (self.band2_dispersion_detuning, r.band2_rf_phase_offset)
        };
        let phase = r.rf_phase + phase_offset;
        let pm_input = ModulatorParams::new(self.input_modulation_index, phase)?;
        let pm_loop = ModulatorParams::new(r.loop_modulation_index, phase)?;
        let lp = LoopParams::new(
            self.feedback_coupling,
            self.gain,
            r.dispersion_coeff * spacing * detuning,
            self.spectral_radius_target,
        )?;
        Ok((spec, pm_input, pm_loop, lp))
    }

    pub fn build_band(&self, band: usize) -> Result<ReservoirParams> {
        let (spec, pm_input, pm_loop, lp) = self.band_components(band)?;
        let w = build_internal_matrix(&spec, &pm_loop, &lp)?;
        let w_in = build_input_vector(&spec, &pm_input)?;
        ReservoirParams::new(w, w_in, self.mzm)
    }

    pub fn build_bands(&self) -> Result<[ReservoirParams; 2]> {
        Ok([self.build_band(0)?, self.build_band(1)?])
    }
}

//! Comb-line physics of the fiber loop.
//!
//! Each comb line is one neuron. A sinusoidal phase modulator at the line
//! spacing couples line `l` into line `k` with the Bessel weight
//! `J_{k-l}(m)`, dispersion adds a phase quadratic in the line index, and the
//! coupler/amplifier pair scales the whole roundtrip. The loop is simulated on
//! `n_lines + 2 * guard_lines` lines and the central `n_lines` block is kept.
//!
//! Line indices are measured from the comb center: array index `i` of an
//! `M`-line band carries line `k = i - M / 2` (integer division).

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Bessel order accepted by [`bessel_j`].
pub const MAX_BESSEL_ORDER: i32 = 200;
/// Largest Bessel argument accepted by [`bessel_j`].
pub const MAX_BESSEL_ARGUMENT: f64 = 50.0;
/// Largest simulated band (`n_lines + 2 * guard_lines`).
pub const MAX_BAND_LINES: usize = 512;
pub const DEFAULT_GUARD_LINES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub center_wavelength_nm: f64,
    pub line_spacing_ghz: f64,
    pub n_lines: usize,
    pub guard_lines: usize,
}

impl CombSpec {
    pub fn new(
        center_wavelength_nm: f64,
        line_spacing_ghz: f64,
        n_lines: usize,
        guard_lines: usize,
    ) -> Result<Self> {
        let spec = Self {
            center_wavelength_nm,
            line_spacing_ghz,
            n_lines,
            guard_lines,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lines == 0 {
            return Err(Error::InvalidParameter("n_lines must be at least 1".into()));
        }
        if !(self.line_spacing_ghz > 0.0 && self.line_spacing_ghz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "line spacing must be positive, got {}",
                self.line_spacing_ghz
            )));
        }
        if !(self.center_wavelength_nm > 0.0 && self.center_wavelength_nm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "center wavelength must be positive, got {}",
                self.center_wavelength_nm
            )));
        }
        Ok(())
    }

    /// Number of simulated lines including the guard lines on both sides.
    pub fn band_lines(&self) -> usize {
        self.n_lines + 2 * self.guard_lines
    }
}

/// Sinusoidal phase modulation `exp(i m sin(Ωt + φ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulatorParams {
    pub modulation_index: f64,
    pub rf_phase: f64,
}

impl ModulatorParams {
    /// The phase is wrapped into `[0, 2π)`.
    pub fn new(modulation_index: f64, rf_phase: f64) -> Result<Self> {
        if !(modulation_index >= 0.0 && modulation_index.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "modulation index must be non-negative, got {modulation_index}"
            )));
        }
        if !rf_phase.is_finite() {
            return Err(Error::InvalidParameter("rf phase must be finite".into()));
        }
        Ok(Self {
            modulation_index,
            rf_phase: rf_phase.rem_euclid(TAU),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopParams {
    /// Amplitude transmission of the loop coupler.
    pub feedback_coupling: f64,
    /// Amplitude gain of the in-loop amplifier.
    pub gain: f64,
    /// Quadratic spectral phase per squared line index, in radians.
    pub dispersion_coeff: f64,
    pub spectral_radius_target: Option<f64>,
}

impl LoopParams {
    pub fn new(
        feedback_coupling: f64,
        gain: f64,
        dispersion_coeff: f64,
        spectral_radius_target: Option<f64>,
    ) -> Result<Self> {
        let params = Self {
            feedback_coupling,
            gain,
            dispersion_coeff,
            spectral_radius_target,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.feedback_coupling) {
            return Err(Error::InvalidParameter(format!(
                "feedback coupling must lie in [0, 1], got {}",
                self.feedback_coupling
            )));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gain must be non-negative, got {}",
                self.gain
            )));
        }
        if !self.dispersion_coeff.is_finite() {
            return Err(Error::InvalidParameter("dispersion coefficient must be finite".into()));
        }
        if let Some(rho) = self.spectral_radius_target {
            if !(rho > 0.0 && rho <= 1.5) {
                return Err(Error::InvalidParameter(format!(
                    "spectral radius target must lie in (0, 1.5], got {rho}"
                )));
            }
        }
        Ok(())
    }
}

/// Mach-Zehnder input modulator, `f(u) = e0 * sin(gamma * u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MzmParams {
    pub e0: f64,
    pub gamma: f64,
}

impl MzmParams {
    pub fn new(e0: f64, gamma: f64) -> Result<Self> {
        let params = Self { e0, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e0 > 0.0 && self.e0.is_finite()) || !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "MZM parameters must be positive, got e0 = {}, gamma = {}",
                self.e0, self.gamma
            )));
        }
        Ok(())
    }
}

impl Default for MzmParams {
    fn default() -> Self {
        Self { e0: 1.0, gamma: 1.0 }
    }
}

/// Bessel function of the first kind of integer order.
///
/// Accurate to about 1e-15 absolute over the supported domain
/// (`|order| <= 200`, `0 <= argument <= 50`).
pub fn bessel_j(order: i32, argument: f64) -> Result<f64> {
    if order.abs() > MAX_BESSEL_ORDER {
        return Err(Error::Domain(format!(
            "Bessel order {order} exceeds {MAX_BESSEL_ORDER}"
        )));
    }
    if !(0.0..=MAX_BESSEL_ARGUMENT).contains(&argument) {
        return Err(Error::Domain(format!(
            "Bessel argument {argument} outside [0, {MAX_BESSEL_ARGUMENT}]"
        )));
    }
    let n = order.unsigned_abs() as usize;
    let value = bessel_j_sequence(n, argument)[n];
    Ok(if order < 0 && n % 2 == 1 { -value } else { value })
}

/// `J_0(x) ..= J_max_order(x)` for `x >= 0` by Miller's downward recurrence,
/// normalized with `J_0 + 2 Σ J_2k = 1`.
pub(crate) fn bessel_j_sequence(max_order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    if x < 1e-20 {
        // beyond the first two terms everything is below 1e-40
        out[0] = 1.0 - x * x / 4.0;
        if max_order >= 1 {
            out[1] = x / 2.0;
        }
        return out;
    }
    let reach = (max_order as f64).max(x);
    let mut start = (reach + 30.0 + (60.0 * reach).sqrt()).ceil() as usize;
    start += start % 2;

    const RESCALE_ABOVE: f64 = 1e250;
    let two_over_x = 2.0 / x;
    let mut next = 0.0; // J_{k+1}
    let mut current = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = k as f64 * two_over_x * current - next;
        next = current;
        current = prev;
        let order = k - 1;
        if order <= max_order {
            out[order] = current;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * current;
        }
        if current.abs() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            current *= s;
            next *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    norm += current;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// `J_k(x)` for any integer `k`, looked up in a non-negative-order table.
fn signed_order(table: &[f64], k: i64) -> f64 {
    let n = k.unsigned_abs() as usize;
    let v = table.get(n).copied().unwrap_or(0.0);
    if k < 0 && n % 2 == 1 {
        -v
    } else {
        v
    }
}

fn check_modulation_index(m: f64) -> Result<()> {
    if !(0.0..=MAX_BESSEL_ARGUMENT).contains(&m) {
        return Err(Error::Domain(format!(
            "modulation index {m} outside [0, {MAX_BESSEL_ARGUMENT}]"
        )));
    }
    Ok(())
}

/// Line index (from the comb center) of array position `i` in a band of `len` lines.
pub fn line_index(i: usize, len: usize) -> i64 {
    i as i64 - (len / 2) as i64
}

/// Spectral action of the in-loop phase modulator on the full simulated band:
/// `P[k, l] = J_{k-l}(m) exp(i (k - l) φ)`.
pub fn pm_coupling_matrix(spec: &CombSpec, pm: &ModulatorParams) -> Result<DMatrix<Complex64>> {
    spec.validate()?;
    let m = spec.band_lines();
    if m > MAX_BAND_LINES {
        return Err(Error::Size(format!(
            "band of {m} lines exceeds the cap of {MAX_BAND_LINES}"
        )));
    }
    check_modulation_index(pm.modulation_index)?;
    let table = bessel_j_sequence(m, pm.modulation_index);
    Ok(DMatrix::from_fn(m, m, |k, l| {
        let d = k as i64 - l as i64;
        Complex64::from_polar(1.0, d as f64 * pm.rf_phase) * signed_order(&table, d)
    }))
}

/// Diagonal of the dispersion operator, `exp(i θ₂ k²)` per line.
pub fn dispersion_phases(spec: &CombSpec, lp: &LoopParams) -> Result<DVector<Complex64>> {
    spec.validate()?;
    let m = spec.band_lines();
    Ok(DVector::from_fn(m, |i, _| {
        let k = line_index(i, m) as f64;
        Complex64::from_polar(1.0, lp.dispersion_coeff * k * k)
    }))
}

/// One loop roundtrip restricted to the usable lines:
/// the central `n_lines` block of `κ g D(θ₂) P(m)`, optionally rescaled to a
/// target spectral radius.
pub fn build_internal_matrix(
    spec: &CombSpec,
    pm: &ModulatorParams,
    lp: &LoopParams,
) -> Result<DMatrix<Complex64>> {
    lp.validate()?;
    let p = pm_coupling_matrix(spec, pm)?;
    let d = dispersion_phases(spec, lp)?;
    let scale = lp.feedback_coupling * lp.gain;
    let n = spec.n_lines;
    let g = spec.guard_lines;
    let mut w = DMatrix::from_fn(n, n, |r, c| d[g + r] * p[(g + r, g + c)] * scale);

    if let Some(target) = lp.spectral_radius_target {
        let rho = spectral_radius(&w)?;
        if rho <= f64::EPSILON {
            return Err(Error::Numerical(
                "cannot rescale a nilpotent loop matrix to a target spectral radius".into(),
            ));
        }
        w *= Complex64::from(target / rho);
    }
    Ok(w)
}

/// Input weights: the comb generated by phase-modulating a single carrier,
/// `J_k(m) exp(i k φ)` on the central `n_lines` lines.
pub fn build_input_vector(spec: &CombSpec, pm_input: &ModulatorParams) -> Result<DVector<Complex64>> {
    spec.validate()?;
    check_modulation_index(pm_input.modulation_index)?;
    let n = spec.n_lines;
    let table = bessel_j_sequence(n, pm_input.modulation_index);
    Ok(DVector::from_fn(n, |i, _| {
        let k = line_index(i, n);
        Complex64::from_polar(1.0, k as f64 * pm_input.rf_phase) * signed_order(&table, k)
    }))
}

/// Largest eigenvalue modulus, from a complex Schur decomposition.
pub fn spectral_radius(w: &DMatrix<Complex64>) -> Result<f64> {
    if !w.is_square() {
        return Err(Error::Dimension(format!(
            "spectral radius of a {}x{} matrix",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.is_empty() {
        return Ok(0.0);
    }
    let schur = nalgebra::linalg::Schur::try_new(w.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("Schur form is not triangular".into()))?;
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Largest singular value.
pub fn operator_norm(w: &DMatrix<Complex64>) -> f64 {
    w.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, guard: usize) -> CombSpec {
        CombSpec::new(1550.2, 17.0, n, guard).unwrap()
    }

    /// `J_n(x) = (1/2π) ∫ cos(nτ - x sin τ) dτ` by the trapezoid rule, which is
    /// spectrally accurate for this periodic integrand.
    fn bessel_quadrature(n: i32, x: f64) -> f64 {
        let k = 4096;
        let h = TAU / k as f64;
        (0..k)
            .map(|j| {
                let t = j as f64 * h;
                (n as f64 * t - x * t.sin()).cos()
            })
            .sum::<f64>()
            / k as f64
    }

    #[test]
    fn bessel_trivial_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(-3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn bessel_first_zero_of_j0() {
        // power-series value at 2.4048 is 6.2e-6
        assert!(bessel_j(0, 2.4048).unwrap().abs() < 1e-4);
    }

    #[test]
    fn bessel_matches_quadrature() {
        for &x in &[0.1, 0.5, 1.0, 2.4048, 3.7, 7.5, 12.0, 25.0, 49.9, 50.0] {
            for &n in &[0, 1, 2, 5, 10, 17, 40, 80, 200] {
                let got = bessel_j(n, x).unwrap();
                let want = bessel_quadrature(n, x);
                assert!(
                    (got - want).abs() < 1e-12,
                    "J_{n}({x}): got {got}, quadrature {want}"
                );
            }
        }
    }

    #[test]
    fn bessel_negative_order_reflection() {
        for k in 0..12 {
            let pos = bessel_j(k, 3.3).unwrap();
            let neg = bessel_j(-k, 3.3).unwrap();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(neg, sign * pos);
        }
    }

    #[test]
    fn bessel_domain_errors() {
        assert!(matches!(bessel_j(0, -0.1), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(0, 50.1), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(201, 1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(0, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn pm_without_modulation_is_identity() {
        let p = pm_coupling_matrix(&spec(6, 3), &ModulatorParams::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(p, DMatrix::identity(12, 12));
    }

    #[test]
    fn pm_rows_are_sub_unitary() {
        let p = pm_coupling_matrix(&spec(20, 4), &ModulatorParams::new(1.5, 0.0).unwrap()).unwrap();
        for row in p.row_iter() {
            let power: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            assert!(power <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn pm_central_row_power_is_one() {
        let p = pm_coupling_matrix(&spec(20, 22), &ModulatorParams::new(1.0, 0.4).unwrap()).unwrap();
        assert_eq!(p.nrows(), 64);
        let power: f64 = p.row(32).iter().map(|z| z.norm_sqr()).sum();
        assert!((power - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pm_size_cap() {
        let err = pm_coupling_matrix(&spec(100, 207), &ModulatorParams::new(1.0, 0.0).unwrap());
        assert!(matches!(err, Err(Error::Size(_))));
    }

    #[test]
    fn dispersion_phase_values() {
        let s = spec(4, 2);
        let zero = LoopParams::new(1.0, 1.0, 0.0, None).unwrap();
        assert!(dispersion_phases(&s, &zero).unwrap().iter().all(|z| *z == Complex64::new(1.0, 0.0)));

        let lp = LoopParams::new(1.0, 1.0, 0.1, None).unwrap();
        let d = dispersion_phases(&s, &lp).unwrap();
        let center = s.band_lines() / 2;
        assert!((d[center + 3].arg() - 0.9).abs() < 1e-15);
        assert!(d.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn internal_matrix_without_mixing_is_scaled_identity() {
        let lp = LoopParams::new(0.9, 1.0, 0.0, None).unwrap();
        let w = build_internal_matrix(&spec(5, 4), &ModulatorParams::new(0.0, 0.0).unwrap(), &lp).unwrap();
        let expected = DMatrix::<Complex64>::identity(5, 5) * Complex64::from(0.9);
        assert!((w - expected).camax() < 1e-15);
    }

    #[test]
    fn internal_matrix_rescaled_to_target() {
        let lp = LoopParams::new(0.8, 1.2, 0.3, Some(0.95)).unwrap();
        let w = build_internal_matrix(&spec(20, 24), &ModulatorParams::new(1.1, 0.7).unwrap(), &lp).unwrap();
        assert!((spectral_radius(&w).unwrap() - 0.95).abs() < 1e-9);
    }

    #[test]
    fn passive_truncated_loop_is_contraction() {
        let lp = LoopParams::new(1.0, 1.0, 0.05, None).unwrap();
        let w = build_internal_matrix(&spec(20, 22), &ModulatorParams::new(1.2, 0.0).unwrap(), &lp).unwrap();
        for sv in w.singular_values().iter() {
            assert!(*sv <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(0.3, 0.4),
            Complex64::new(-0.2, 0.0),
        ]));
        assert!((spectral_radius(&w).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn input_vector_without_modulation_is_carrier() {
        let w_in = build_input_vector(&spec(20, 0), &ModulatorParams::new(0.0, 0.0).unwrap()).unwrap();
        for (i, z) in w_in.iter().enumerate() {
            let want = if i == 10 { 1.0 } else { 0.0 };
            assert_eq!(*z, Complex64::new(want, 0.0));
        }
    }

    #[test]
    fn input_vector_norm() {
        // Σ_{k=-10}^{9} J_k(1.8)² from the quadrature oracle.
        let oracle: f64 = (-10..=9).map(|k| bessel_quadrature(k, 1.8).powi(2)).sum();
        let w_in = build_input_vector(&spec(20, 0), &ModulatorParams::new(1.8, 0.3).unwrap()).unwrap();
        let norm2 = w_in.norm_squared();
        assert!((norm2 - oracle).abs() < 1e-12);
        assert!((norm2 - 1.0).abs() < 0.02);
        for m in [0.5, 2.0, 4.0, 9.0] {
            let w = build_input_vector(&spec(20, 0), &ModulatorParams::new(m, 1.0).unwrap()).unwrap();
            assert!(w.norm_squared() <= 1.0 + 1e-12);
        }
    }
}

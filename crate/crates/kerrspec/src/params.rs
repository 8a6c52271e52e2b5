//! Device working point, input tones, flux bias, and the linear reflection
//! coefficient.
//!
//! All frequencies and rates inside the crate are angular (rad/s). External
//! interfaces (CLI, CSV) talk GHz/MHz/dBm and convert at the boundary; a
//! single internal convention avoids factor-2π mistakes between ω-based
//! equations and ω/2π-based reporting.

use crate::{C64, Error, Result};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Magnetic flux quantum h/2e (Wb).
pub const FLUX_QUANTUM: f64 = 2.067_833_848e-15;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Convert a linear frequency in GHz to an angular frequency in rad/s.
pub fn ghz(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * f * 1e9
}

/// Convert a linear frequency in MHz to an angular frequency in rad/s.
pub fn mhz(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * f * 1e6
}

/// Resonator working point: frequency, Kerr coefficient, and decay rates.
///
/// `kerr` is stored signed; the devices modeled here have negative Kerr
/// nonlinearity. Magnitudes are a presentation concern only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    /// Resonance frequency in the low-power limit (rad/s).
    pub omega_r: f64,
    /// Kerr coefficient (rad/s, signed).
    pub kerr: f64,
    /// External (feedline) decay rate (rad/s).
    pub kappa_e: f64,
    /// Internal loss rate (rad/s).
    pub kappa_i: f64,
}

impl DeviceParams {
    pub fn new(omega_r: f64, kerr: f64, kappa_e: f64, kappa_i: f64) -> Result<Self> {
        if !(omega_r.is_finite() && kerr.is_finite() && kappa_e.is_finite() && kappa_i.is_finite()) {
            return Err(Error::InvalidParameter("device parameters must be finite".into()));
        }
        if omega_r <= 0.0 {
            return Err(Error::InvalidParameter(format!("omega_r must be positive, got {omega_r:e}")));
        }
        if kappa_e < 0.0 || kappa_i < 0.0 {
            return Err(Error::InvalidParameter("decay rates must be non-negative".into()));
        }
        if kappa_e + kappa_i <= 0.0 {
            return Err(Error::InvalidParameter("total decay rate must be positive".into()));
        }
        Ok(Self { omega_r, kerr, kappa_e, kappa_i })
    }

    /// Build from spectroscopy-style units: resonance in GHz, rates and Kerr
    /// in MHz (all linear frequencies).
    pub fn from_spectroscopy(omega_r_ghz: f64, kerr_mhz: f64, kappa_e_mhz: f64, kappa_i_mhz: f64) -> Result<Self> {
        Self::new(ghz(omega_r_ghz), mhz(kerr_mhz), mhz(kappa_e_mhz), mhz(kappa_i_mhz))
    }

    /// Total decay rate κ_e + κ_i.
    pub fn kappa_tot(&self) -> f64 {
        self.kappa_e + self.kappa_i
    }
}

/// A coherent input tone: frequency, power at the device port, and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneSpec {
    /// Tone frequency (rad/s).
    pub omega: f64,
    /// Power at the device port (dBm). `-inf` encodes zero input power.
    pub power_dbm: f64,
    /// Phase (rad).
    pub phase: f64,
}

impl ToneSpec {
    pub fn new(omega: f64, power_dbm: f64, phase: f64) -> Result<Self> {
        if !omega.is_finite() || omega <= 0.0 {
            return Err(Error::InvalidParameter(format!("tone frequency must be positive, got {omega:e}")));
        }
        if power_dbm.is_nan() || power_dbm == f64::INFINITY {
            return Err(Error::InvalidParameter("tone power must be a number or -inf".into()));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidParameter("tone phase must be finite".into()));
        }
        Ok(Self { omega, power_dbm, phase })
    }

    /// Tone with zero phase.
    pub fn with_power(omega: f64, power_dbm: f64) -> Result<Self> {
        Self::new(omega, power_dbm, 0.0)
    }

    /// Same tone shifted to a different frequency.
    pub fn at_omega(&self, omega: f64) -> Result<Self> {
        Self::new(omega, self.power_dbm, self.phase)
    }

    /// Same tone at a different port power.
    pub fn at_power(&self, power_dbm: f64) -> Result<Self> {
        Self::new(self.omega, power_dbm, self.phase)
    }
}

/// Reduced flux bias f = Φ_ex/Φ_0 through the SQUID loop.
///
/// All flux-dependent quantities are periodic in f with period 1 and even
/// in f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxBias(pub f64);

impl FluxBias {
    pub fn new(f: f64) -> Result<Self> {
        if !f.is_finite() {
            return Err(Error::InvalidParameter("flux bias must be finite".into()));
        }
        Ok(Self(f))
    }

    /// Fold into the fundamental domain [0, 0.5] using periodicity and
    /// evenness.
    pub fn folded(&self) -> f64 {
        let mut f = self.0.rem_euclid(1.0);
        if f > 0.5 {
            f = 1.0 - f;
        }
        f
    }
}

/// Convert a power in dBm to watts: 10^((p - 30)/10).
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Convert a power in watts to dBm.
pub fn watts_to_dbm(p_watts: f64) -> f64 {
    10.0 * p_watts.log10() + 30.0
}

/// Complex input amplitude of a tone, in √(photons/s).
///
/// |E|² = P/(ħω) is the photon flux at the port; the phase of the tone is
/// applied as exp(iφ).
pub fn tone_amplitude(tone: &ToneSpec) -> Result<C64> {
    if !tone.omega.is_finite() || tone.omega <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tone frequency must be positive, got {:e}",
            tone.omega
        )));
    }
    let flux = dbm_to_watts(tone.power_dbm) / (HBAR * tone.omega);
    Ok(C64::from_polar(flux.sqrt(), tone.phase))
}

/// Linear (low-power) reflection coefficient of a probe at `omega_p`.
///
/// Γ = (Δ + i(κ_i − κ_e)/2) / (Δ + i(κ_i + κ_e)/2) with Δ = ω_p − ω_r.
/// This is the K-decoupled closed form of the (0,1) moment equation and the
/// model used for linear resonance fits.
pub fn linear_reflection(d: &DeviceParams, omega_p: f64) -> C64 {
    let delta = omega_p - d.omega_r;
    let num = C64::new(delta, 0.5 * (d.kappa_i - d.kappa_e));
    let den = C64::new(delta, 0.5 * (d.kappa_i + d.kappa_e));
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn f039() -> DeviceParams {
        DeviceParams::from_spectroscopy(10.015, -11.2, 0.74, 0.72).unwrap()
    }

    #[test]
    fn dbm_conversion_anchors() {
        assert_relative_eq!(dbm_to_watts(0.0), 1.0e-3, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(-122.0), 6.3096e-16, max_relative = 1e-4);
        assert_relative_eq!(dbm_to_watts(-89.0), 1.2589e-12, max_relative = 1e-4);
        assert_eq!(dbm_to_watts(f64::NEG_INFINITY), 0.0);
        assert_relative_eq!(watts_to_dbm(1.0e-3), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tone_amplitude_zero_power() {
        let t = ToneSpec::new(ghz(10.0), f64::NEG_INFINITY, 1.0).unwrap();
        assert_eq!(tone_amplitude(&t).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn tone_amplitude_rejects_bad_frequency() {
        let t = ToneSpec { omega: -1.0, power_dbm: -100.0, phase: 0.0 };
        assert!(tone_amplitude(&t).is_err());
        assert!(ToneSpec::new(0.0, -100.0, 0.0).is_err());
    }

    #[test]
    fn oscillation_output_photon_number() {
        // P_o = -122 dBm at ω/2π = 10.015 GHz with κ_e/2π = 0.74 MHz gives
        // a mean photon number P_o/(ħ ω κ_e) ≈ 20.
        let t = ToneSpec::with_power(ghz(10.015), -122.0).unwrap();
        let e = tone_amplitude(&t).unwrap();
        let n = e.norm_sqr() / mhz(0.74);
        assert!((n - 20.0).abs() < 1.0, "n = {n}");
    }

    #[test]
    fn locking_signal_photon_number() {
        // 4 P_s κ_e / (ħ ω_r κ_tot²) ≈ 4e4 for P_s = -89 dBm.
        let t = ToneSpec::with_power(ghz(10.015), -89.0).unwrap();
        let e = tone_amplitude(&t).unwrap();
        let n = 4.0 * e.norm_sqr() * mhz(0.74) / mhz(1.46).powi(2);
        assert!((n - 4.0e4).abs() < 0.1 * 4.0e4, "n = {n}");
    }

    #[test]
    fn linear_reflection_critical_lossless() {
        let d = DeviceParams::from_spectroscopy(11.742, 0.0, 0.85, 0.0).unwrap();
        let g = linear_reflection(&d, d.omega_r);
        assert_abs_diff_eq!(g.re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_reflection_on_resonance_depths() {
        let d = DeviceParams::from_spectroscopy(11.742, 0.0, 0.85, 1.01).unwrap();
        let g = linear_reflection(&d, d.omega_r);
        assert_relative_eq!(g.norm(), (1.01 - 0.85) / 1.86, max_relative = 1e-9);
        let d = f039();
        let g = linear_reflection(&d, d.omega_r);
        assert_relative_eq!(g.norm(), 0.02 / 1.46, max_relative = 1e-9);
    }

    #[test]
    fn linear_reflection_passive_and_unit_off_resonance() {
        let d = f039();
        for k in -400..=400 {
            let delta = k as f64 * 1e5 * 2.0 * std::f64::consts::PI;
            let g = linear_reflection(&d, d.omega_r + delta);
            assert!(g.norm() <= 1.0 + 1e-12);
        }
        let far = linear_reflection(&d, d.omega_r + mhz(5000.0));
        assert!((far - C64::new(1.0, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn phase_winding_depends_on_coupling_regime() {
        // Phase winds by 2π across resonance iff κ_e > κ_i.
        let winding = |kappa_e_mhz: f64, kappa_i_mhz: f64| -> f64 {
            let d = DeviceParams::from_spectroscopy(10.0, 0.0, kappa_e_mhz, kappa_i_mhz).unwrap();
            let mut total = 0.0;
            let mut prev = linear_reflection(&d, d.omega_r - mhz(200.0)).arg();
            for k in -20_000..=20_000 {
                let g = linear_reflection(&d, d.omega_r + k as f64 * mhz(0.01));
                let mut dphi = g.arg() - prev;
                while dphi > std::f64::consts::PI {
                    dphi -= 2.0 * std::f64::consts::PI;
                }
                while dphi < -std::f64::consts::PI {
                    dphi += 2.0 * std::f64::consts::PI;
                }
                total += dphi;
                prev = g.arg();
            }
            total
        };
        assert!(winding(1.0, 0.3).abs() > 5.0);
        assert!(winding(0.3, 1.0).abs() < 1.0);
    }

    #[test]
    fn flux_bias_folding() {
        assert_abs_diff_eq!(FluxBias(1.0).folded(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(FluxBias(-0.01).folded(), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(FluxBias(0.39).folded(), 0.39, epsilon = 1e-15);
        assert_abs_diff_eq!(FluxBias(0.61).folded(), 0.39, epsilon = 1e-15);
    }

    #[test]
    fn device_params_validation() {
        assert!(DeviceParams::new(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(DeviceParams::new(1.0, 0.0, -1.0, 1.0).is_err());
        assert!(DeviceParams::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(DeviceParams::new(1.0, f64::NAN, 1.0, 1.0).is_err());
    }
}

//! Equivalent-circuit model of the device: a CPW resonator interrupted by a
//! dc-SQUID, capacitively coupled to its feed line and shunted to ground at
//! the far end.
//!
//! The SQUID is treated as a flux-tunable linear inductor
//! L_s(f) = Φ_0/(2π·2I_c|cos πf|) in parallel with a junction capacitance.
//! The fundamental mode is the lowest root of the one-port resonance
//! condition at the SQUID: the reactances looking into the two line
//! sections (each terminated by its boundary capacitor to ground) plus the
//! SQUID reactance must sum to zero. Both terminations and the lines are
//! lossless, so the mode function is a Foster reactance: it increases with
//! frequency and crosses zero upward exactly at resonances, which makes
//! bracket-and-bisect root finding safe.
//!
//! The Kerr coefficient comes from the lowest-order quartic expansion of the
//! SQUID Josephson energy. The zero-point phase fluctuation across the SQUID
//! follows from the slope of the mode admittance seen at the SQUID terminals,
//! C_eff = Im[∂Y/∂ω]/2 at ω_r, giving φ_zp² = 2e²/(ħω_r C_eff) and
//! K = −E_J φ_zp⁴/(2ħ). In the lumped transmon limit this reduces to the
//! textbook anharmonicity −E_C/ħ.

use crate::fitting::{FitParam, FitResult};
use crate::optim::brent_min;
use crate::params::{FluxBias, E_CHARGE, FLUX_QUANTUM, HBAR};
use crate::{Error, Result};

/// Geometric and electrical description of the resonator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    /// Total CPW length (m).
    pub length: f64,
    /// Phase velocity on the line (m/s).
    pub phase_velocity: f64,
    /// Characteristic impedance (Ω).
    pub z0: f64,
    /// Input coupling capacitor to the feed line (F).
    pub c_in: f64,
    /// Shunt capacitor to ground at the far end (F).
    pub c_shunt: f64,
    /// Critical current per junction (A).
    pub i_c: f64,
    /// Junction capacitance across the SQUID (F).
    pub c_j: f64,
    /// SQUID location as a fraction of the length (0.5 = center).
    pub squid_position: f64,
}

impl CircuitParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        length: f64,
        phase_velocity: f64,
        z0: f64,
        c_in: f64,
        c_shunt: f64,
        i_c: f64,
        c_j: f64,
        squid_position: f64,
    ) -> Result<Self> {
        let positive = [length, phase_velocity, z0, i_c];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParameter(
                "length, phase velocity, impedance and critical current must be positive".into(),
            ));
        }
        let caps = [c_in, c_shunt, c_j];
        if caps.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("capacitances must be non-negative".into()));
        }
        if !(squid_position > 0.0 && squid_position < 1.0) {
            return Err(Error::InvalidParameter("SQUID position must lie strictly inside the line".into()));
        }
        Ok(Self { length, phase_velocity, z0, c_in, c_shunt, i_c, c_j, squid_position })
    }

    /// Default junction capacitance: 33 fF per µA of critical current.
    /// Junction area scales with I_c for a fixed current density, so C_j
    /// does too; the coefficient is calibrated so the model reproduces the
    /// measured ω_r(f) anchors of the reference device within 1%.
    pub fn default_junction_capacitance(i_c: f64) -> f64 {
        33e-15 * (i_c / 1e-6)
    }
}

/// SQUID-curve samples: reduced flux, resonance frequency, Kerr coefficient.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FluxCurve {
    pub f: Vec<f64>,
    /// rad/s
    pub omega_r: Vec<f64>,
    /// rad/s
    pub kerr: Vec<f64>,
}

/// Linearized SQUID inductance L_s(f) = Φ_0 / (2π · 2I_c |cos πf|).
pub fn squid_inductance(cp: &CircuitParams, f: FluxBias) -> Result<f64> {
    let c = (std::f64::consts::PI * f.0).cos().abs();
    if c < 1e-12 {
        return Err(Error::ModelFailure(format!(
            "SQUID inductance diverges at f = {} (half flux quantum)",
            f.0
        )));
    }
    Ok(FLUX_QUANTUM / (2.0 * std::f64::consts::PI * 2.0 * cp.i_c * c))
}

/// Reactance looking into a lossless line section of electrical length
/// `beta_l`, terminated by a capacitor `c_term` to ground.
fn line_reactance(z0: f64, beta_l: f64, c_term: f64, omega: f64) -> f64 {
    let t = beta_l.tan();
    if c_term == 0.0 {
        // open termination
        -z0 / t
    } else {
        let x_t = -1.0 / (omega * c_term);
        z0 * (x_t + z0 * t) / (z0 - x_t * t)
    }
}

/// Series reactance of the SQUID element L_s ∥ C_j.
fn squid_reactance(l_s: f64, c_j: f64, omega: f64) -> f64 {
    omega * l_s / (1.0 - omega * omega * l_s * c_j)
}

/// Mode condition: total loop reactance at the SQUID terminals.
fn mode_reactance(cp: &CircuitParams, l_s: f64, omega: f64) -> f64 {
    let l1 = cp.squid_position * cp.length;
    let l2 = (1.0 - cp.squid_position) * cp.length;
    let x_left = line_reactance(cp.z0, omega * l1 / cp.phase_velocity, cp.c_in, omega);
    let x_right = line_reactance(cp.z0, omega * l2 / cp.phase_velocity, cp.c_shunt, omega);
    x_left + x_right + squid_reactance(l_s, cp.c_j, omega)
}

/// Lowest mode of the structure for an explicit SQUID inductance value
/// (`l_s` = 0 removes the SQUID).
pub fn mode_frequency_with_inductance(cp: &CircuitParams, l_s: f64) -> Result<f64> {
    let omega_halfwave = std::f64::consts::PI * cp.phase_velocity / cp.length;
    let lo = 0.01 * omega_halfwave;
    let hi = 1.35 * omega_halfwave;
    let steps = 1600;
    let g = |omega: f64| mode_reactance(cp, l_s, omega);
    let mut prev_omega = lo;
    let mut prev = g(lo);
    for k in 1..=steps {
        let omega = lo + (hi - lo) * k as f64 / steps as f64;
        let cur = g(omega);
        if prev <= 0.0 && cur > 0.0 {
            // upward zero crossing: a resonance, not a reactance pole
            let (mut a, mut b) = (prev_omega, omega);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if g(m) <= 0.0 {
                    a = m;
                } else {
                    b = m;
                }
                if (b - a) <= 1e-13 * b {
                    break;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev = cur;
        prev_omega = omega;
    }
    Err(Error::ModelFailure(format!(
        "no resonance in the scan window [{:.4e}, {:.4e}] rad/s ({} points; reactance endpoints {:.3e} → {:.3e})",
        lo,
        hi,
        steps,
        g(lo),
        g(hi)
    )))
}

/// Fundamental resonance frequency at flux bias `f` (rad/s).
pub fn resonance_frequency(cp: &CircuitParams, f: FluxBias) -> Result<f64> {
    let l_s = squid_inductance(cp, f)?;
    mode_frequency_with_inductance(cp, l_s)
}

/// Susceptance of the mode one-port seen across the SQUID's Josephson
/// element (its own linear inductance included).
fn squid_port_susceptance(cp: &CircuitParams, l_s: f64, omega: f64) -> f64 {
    let l1 = cp.squid_position * cp.length;
    let l2 = (1.0 - cp.squid_position) * cp.length;
    let x_left = line_reactance(cp.z0, omega * l1 / cp.phase_velocity, cp.c_in, omega);
    let x_right = line_reactance(cp.z0, omega * l2 / cp.phase_velocity, cp.c_shunt, omega);
    omega * cp.c_j - 1.0 / (omega * l_s) - 1.0 / (x_left + x_right)
}

/// Lowest-order Kerr coefficient at flux bias `f` (rad/s, negative).
pub fn kerr_coefficient(cp: &CircuitParams, f: FluxBias) -> Result<f64> {
    let l_s = squid_inductance(cp, f)?;
    let omega_r = mode_frequency_with_inductance(cp, l_s)?;
    let h = 1e-6 * omega_r;
    let slope = (squid_port_susceptance(cp, l_s, omega_r + h)
        - squid_port_susceptance(cp, l_s, omega_r - h))
        / (2.0 * h);
    if !(slope > 0.0) {
        return Err(Error::ModelFailure(format!(
            "non-physical admittance slope {slope:e} at the mode frequency"
        )));
    }
    let c_eff = 0.5 * slope;
    let phi_zp_sq = 2.0 * E_CHARGE * E_CHARGE / (HBAR * omega_r * c_eff);
    let e_j = (FLUX_QUANTUM / (2.0 * std::f64::consts::PI))
        * 2.0
        * cp.i_c
        * (std::f64::consts::PI * f.0).cos().abs();
    Ok(-e_j * phi_zp_sq * phi_zp_sq / (2.0 * HBAR))
}

/// Evaluate ω_r(f) and K(f) over a flux grid.
pub fn flux_curve(cp: &CircuitParams, fs: &[f64]) -> Result<FluxCurve> {
    let mut curve = FluxCurve::default();
    for &f in fs {
        let bias = FluxBias::new(f)?;
        curve.f.push(f);
        curve.omega_r.push(resonance_frequency(cp, bias)?);
        curve.kerr.push(kerr_coefficient(cp, bias)?);
    }
    Ok(curve)
}

/// Critical-current fit against a measured ω_r(f) curve.
#[derive(Debug, Clone)]
pub struct CriticalCurrentFit {
    /// Input parameters with the fitted critical current substituted.
    pub params: CircuitParams,
    pub result: FitResult,
    /// RMS shift of the model frequencies under a ±10% change of C_j
    /// (rad/s), reported because C_j is usually not known independently.
    pub c_j_sensitivity: f64,
}

/// Least-squares fit of the junction critical current to measured (f, ω_r)
/// points. The junction capacitance is held at its input value.
pub fn fit_critical_current(
    measured: &FluxCurve,
    cp0: &CircuitParams,
) -> Result<CriticalCurrentFit> {
    let n = measured.f.len();
    if n < 3 || measured.omega_r.len() != n {
        return Err(Error::InvalidParameter(
            "critical-current fit needs at least 3 (f, omega_r) samples".into(),
        ));
    }
    let model = |i_c: f64| -> Result<Vec<f64>> {
        let cp = CircuitParams { i_c, ..*cp0 };
        measured
            .f
            .iter()
            .map(|&f| resonance_frequency(&cp, FluxBias::new(f)?))
            .collect()
    };
    let ssr = |i_c: f64| -> f64 {
        match model(i_c) {
            Ok(m) => m
                .iter()
                .zip(&measured.omega_r)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let min = brent_min(ssr, cp0.i_c / 5.0, cp0.i_c * 5.0, 1e-12, 200);
    if !min.converged {
        return Err(Error::FitFailure(format!(
            "critical-current search did not converge after {} iterations (SSR {:.3e})",
            min.iterations, min.fx
        )));
    }
    let i_c = min.x[0];
    let residual_rms = (min.fx / n as f64).sqrt();

    // 1-σ from the local quadratic model of the residuals
    let h = 1e-4 * i_c;
    let m_plus = model(i_c + h)?;
    let m_minus = model(i_c - h)?;
    let grad_sq: f64 = m_plus
        .iter()
        .zip(&m_minus)
        .map(|(p, m)| ((p - m) / (2.0 * h)).powi(2))
        .sum();
    let dof = (n as f64 - 1.0).max(1.0);
    let sigma = if grad_sq > 0.0 { (min.fx / dof / grad_sq).sqrt() } else { f64::INFINITY };

    // C_j sensitivity: rms frequency shift for ±10% C_j
    let shift = |scale: f64| -> Result<f64> {
        let cp = CircuitParams { i_c, c_j: cp0.c_j * scale, ..*cp0 };
        let mut acc = 0.0;
        for (&f, &w) in measured.f.iter().zip(&measured.omega_r) {
            let m = resonance_frequency(&cp, FluxBias::new(f)?)?;
            acc += (m - w) * (m - w);
        }
        Ok((acc / n as f64).sqrt())
    };
    let c_j_sensitivity = 0.5 * ((shift(1.1)? - residual_rms).abs() + (shift(0.9)? - residual_rms).abs());

    let result = FitResult {
        params: vec![FitParam { name: "i_c".into(), value: i_c, sigma }],
        residual_rms,
        converged: true,
        covariance: nalgebra::DMatrix::from_element(1, 1, sigma * sigma),
    };
    Ok(CriticalCurrentFit {
        params: CircuitParams { i_c, ..*cp0 },
        result,
        c_j_sensitivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::params::SPEED_OF_LIGHT;

    /// Geometry used throughout: 4.6 mm line, v = 0.398c, Z0 = 49.8 Ω,
    /// 3.4/3.3 fF boundary capacitors, 0.90 µA junctions.
    fn device() -> CircuitParams {
        CircuitParams::new(
            4.6e-3,
            0.398 * SPEED_OF_LIGHT,
            49.8,
            3.4e-15,
            3.3e-15,
            0.90e-6,
            CircuitParams::default_junction_capacitance(0.90e-6),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn squid_inductance_anchor_and_periodicity() {
        let cp = device();
        let l0 = squid_inductance(&cp, FluxBias(0.0)).unwrap();
        assert_relative_eq!(l0, 0.183e-9, max_relative = 2e-3);
        let l1 = squid_inductance(&cp, FluxBias(1.0)).unwrap();
        assert_relative_eq!(l0, l1, max_relative = 1e-12);
        assert!(squid_inductance(&cp, FluxBias(0.5)).is_err());
        // divergence approaching half flux quantum
        let l49 = squid_inductance(&cp, FluxBias(0.49)).unwrap();
        let l499 = squid_inductance(&cp, FluxBias(0.499)).unwrap();
        assert!(l499 > 9.0 * l49);
    }

    #[test]
    fn bare_half_wave_mode_is_recovered() {
        let mut cp = device();
        cp.c_in = 0.0;
        cp.c_shunt = 0.0;
        cp.c_j = 0.0;
        let omega = mode_frequency_with_inductance(&cp, 0.0).unwrap();
        let expected = std::f64::consts::PI * cp.phase_velocity / cp.length;
        assert_relative_eq!(omega, expected, max_relative = 1e-9);
    }

    #[test]
    fn resonance_anchors_at_measured_fluxes() {
        let cp = device();
        for (f, ghz_expected) in [(-0.01, 11.742), (0.31, 11.019), (0.39, 10.015)] {
            let omega = resonance_frequency(&cp, FluxBias(f)).unwrap();
            let ghz = omega / (2.0 * std::f64::consts::PI * 1e9);
            assert!(
                (ghz - ghz_expected).abs() / ghz_expected < 0.01,
                "f = {f}: model {ghz:.4} GHz vs measured {ghz_expected} GHz"
            );
        }
    }

    #[test]
    fn kerr_is_negative_and_grows_with_flux() {
        let cp = device();
        let k0 = kerr_coefficient(&cp, FluxBias(0.0)).unwrap();
        let k31 = kerr_coefficient(&cp, FluxBias(0.31)).unwrap();
        let k39 = kerr_coefficient(&cp, FluxBias(0.39)).unwrap();
        assert!(k0 < 0.0 && k31 < 0.0 && k39 < 0.0);
        assert!(k31.abs() > k0.abs());
        assert!(k39.abs() > k31.abs());
        // rigid-SQUID limit: huge critical current kills the participation
        let mut stiff = cp;
        stiff.i_c = 1.0e-3;
        stiff.c_j = 0.0;
        let k_stiff = kerr_coefficient(&stiff, FluxBias(0.2)).unwrap();
        assert!(k_stiff.abs() < 1e-6 * k0.abs());
    }

    #[test]
    fn flux_dependence_is_monotone_and_continuous() {
        let cp = device();
        let fs: Vec<f64> = (0..=40).map(|k| 0.01 + 0.44 * k as f64 / 40.0).collect();
        let curve = flux_curve(&cp, &fs).unwrap();
        for w in curve.omega_r.windows(2) {
            assert!(w[1] < w[0], "omega_r must decrease on (0, 0.5)");
        }
        for w in curve.kerr.windows(2) {
            assert!(w[1].abs() > w[0].abs(), "|K| must increase on (0, 0.5)");
        }
        // no root-jumping: refine the grid 4x and compare at shared points
        let fs_fine: Vec<f64> = (0..=160).map(|k| 0.01 + 0.44 * k as f64 / 160.0).collect();
        let fine = flux_curve(&cp, &fs_fine).unwrap();
        for (i, &f) in fs.iter().enumerate() {
            let j = fs_fine.iter().position(|&x| (x - f).abs() < 1e-12).unwrap();
            assert_relative_eq!(curve.omega_r[i], fine.omega_r[j], max_relative = 1e-10);
        }
        for w in fine.omega_r.windows(2) {
            assert!((w[1] - w[0]).abs() < 0.02 * w[0], "step discontinuity in omega_r(f)");
        }
        // evenness in f
        let m = resonance_frequency(&cp, FluxBias(-0.31)).unwrap();
        let p = resonance_frequency(&cp, FluxBias(0.31)).unwrap();
        assert_relative_eq!(m, p, max_relative = 1e-12);
    }

    #[test]
    fn critical_current_round_trip() {
        let cp = device();
        let fs: Vec<f64> = vec![-0.01, 0.08, 0.16, 0.24, 0.31, 0.36, 0.39, 0.42];
        let truth = flux_curve(&cp, &fs).unwrap();

        let mut guess = cp;
        guess.i_c = 1.4e-6;
        let fit = fit_critical_current(&truth, &guess).unwrap();
        assert!(fit.result.converged);
        assert!(
            (fit.params.i_c - cp.i_c).abs() / cp.i_c < 1e-3,
            "recovered {:.4} µA",
            fit.params.i_c * 1e6
        );
        assert!(fit.c_j_sensitivity >= 0.0);

        // 0.1% frequency noise: recovery within 2%
        let mut noisy = truth.clone();
        let wobble = [1.0008, 0.9991, 1.0006, 0.9994, 1.0009, 0.9992, 1.0005, 0.9996];
        for (w, s) in noisy.omega_r.iter_mut().zip(wobble) {
            *w *= s;
        }
        let fit = fit_critical_current(&noisy, &guess).unwrap();
        assert!((fit.params.i_c - cp.i_c).abs() / cp.i_c < 0.02);
        assert!(fit.result.params[0].sigma > 0.0);
    }

    #[test]
    fn fit_rejects_short_curves() {
        let cp = device();
        let short = FluxCurve { f: vec![0.1, 0.2], omega_r: vec![1.0, 2.0], kerr: vec![] };
        assert!(fit_critical_current(&short, &cp).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(CircuitParams::new(0.0, 1.0, 1.0, 0.0, 0.0, 1e-6, 0.0, 0.5).is_err());
        assert!(CircuitParams::new(1.0, 1.0, 1.0, -1e-15, 0.0, 1e-6, 0.0, 0.5).is_err());
        assert!(CircuitParams::new(1.0, 1.0, 1.0, 0.0, 0.0, 1e-6, 0.0, 1.0).is_err());
    }
}

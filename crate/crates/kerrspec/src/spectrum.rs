//! Reflection-coefficient sweeps over (detuning, power) grids.
//!
//! Grid points are independent; sweeps parallelize over points or columns
//! with results written by index, so the output is identical regardless of
//! thread count or scheduling. Per-point solver failures are recorded in the
//! point metadata and never abort a sweep.

use rayon::prelude::*;

use crate::moments::{converge_one_tone, reflection, solve_two_tone};
use crate::params::{tone_amplitude, DeviceParams, ToneSpec};
use crate::semiclassical::{duffing_reflection, duffing_steady, BranchRule};
use crate::{C64, Error, Result};

/// Truncation/convergence controls for moment-hierarchy sweeps.
#[derive(Debug, Clone, Copy)]
pub struct MomentOptions {
    pub n_start: usize,
    pub n_cap: usize,
    /// Inter-order tolerance on Γ for self-convergence.
    pub tol: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self { n_start: 6, n_cap: 24, tol: 1e-4 }
    }
}

/// Which steady-state solver a sweep uses.
#[derive(Debug, Clone, Copy)]
pub enum SolverChoice {
    /// Truncated moment hierarchy with self-convergence at every point.
    Moments(MomentOptions),
    /// Mean-field Duffing response with the given branch rule.
    Semiclassical(BranchRule),
    /// Moment hierarchy with a mean-field fallback for classical-regime
    /// points (|K| < κ_tot) that the truncated hierarchy cannot reach.
    Auto(MomentOptions),
}

/// Solver provenance for one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointMeta {
    /// Truncation order used (0 for mean-field points).
    pub n_used: u16,
    pub converged: bool,
    /// True when the value came from the mean-field solver.
    pub semiclassical: bool,
}

/// 2-D map of the complex reflection coefficient over (detuning, power).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    /// Probe detunings from the low-power resonance (rad/s).
    pub detunings: Vec<f64>,
    /// Power axis (dBm): probe power for one-tone, drive power for two-tone.
    pub powers: Vec<f64>,
    /// Solver used for the sweep.
    pub method: String,
    gamma: Vec<C64>,
    meta: Vec<PointMeta>,
}

impl SpectrumGrid {
    pub(crate) fn from_parts(
        detunings: Vec<f64>,
        powers: Vec<f64>,
        method: String,
        gamma: Vec<C64>,
        meta: Vec<PointMeta>,
    ) -> Self {
        assert_eq!(gamma.len(), detunings.len() * powers.len());
        assert_eq!(meta.len(), gamma.len());
        Self { detunings, powers, method, gamma, meta }
    }

    pub fn n_detunings(&self) -> usize {
        self.detunings.len()
    }

    pub fn n_powers(&self) -> usize {
        self.powers.len()
    }

    #[inline]
    fn idx(&self, i_det: usize, j_pow: usize) -> usize {
        assert!(i_det < self.detunings.len() && j_pow < self.powers.len());
        i_det * self.powers.len() + j_pow
    }

    pub fn gamma(&self, i_det: usize, j_pow: usize) -> C64 {
        self.gamma[self.idx(i_det, j_pow)]
    }

    pub fn meta(&self, i_det: usize, j_pow: usize) -> PointMeta {
        self.meta[self.idx(i_det, j_pow)]
    }

    /// |Γ| along the detuning axis at one power column.
    pub fn column_abs(&self, j_pow: usize) -> Vec<f64> {
        (0..self.detunings.len()).map(|i| self.gamma(i, j_pow).norm()).collect()
    }

    pub fn unconverged_points(&self) -> usize {
        self.meta.iter().filter(|m| !m.converged).count()
    }

    /// Raw row-major data (detuning-major), used by CSV export.
    pub fn raw(&self) -> (&[C64], &[PointMeta]) {
        (&self.gamma, &self.meta)
    }
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} axis is empty")));
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} axis contains non-finite values")));
    }
    Ok(())
}

const FAILED_POINT: C64 = C64::new(f64::NAN, f64::NAN);

fn moments_point(
    d: &DeviceParams,
    omega_p: f64,
    power_dbm: f64,
    opts: &MomentOptions,
) -> (C64, PointMeta) {
    let probe = match ToneSpec::with_power(omega_p, power_dbm) {
        Ok(t) => t,
        Err(_) => {
            return (FAILED_POINT, PointMeta { n_used: 0, converged: false, semiclassical: false })
        }
    };
    let e = match tone_amplitude(&probe) {
        Ok(e) if e != C64::new(0.0, 0.0) => e,
        _ => {
            // zero input: Γ is 1 by passivity of the undriven resonator
            return (
                C64::new(1.0, 0.0),
                PointMeta { n_used: 0, converged: true, semiclassical: false },
            );
        }
    };
    match converge_one_tone(d, &probe, opts.tol, opts.n_start, opts.n_cap) {
        Ok(solve) => match reflection(d, &solve.table, e) {
            Ok(g) => (
                g,
                PointMeta {
                    n_used: solve.n_used as u16,
                    converged: solve.converged,
                    semiclassical: false,
                },
            ),
            Err(_) => (FAILED_POINT, PointMeta { n_used: 0, converged: false, semiclassical: false }),
        },
        Err(_) => (FAILED_POINT, PointMeta { n_used: 0, converged: false, semiclassical: false }),
    }
}

fn semiclassical_point(
    d: &DeviceParams,
    omega_p: f64,
    power_dbm: f64,
    rule: BranchRule,
    prev: Option<f64>,
) -> (C64, PointMeta, Option<f64>) {
    let failed = (FAILED_POINT, PointMeta { n_used: 0, converged: false, semiclassical: true }, prev);
    let probe = match ToneSpec::with_power(omega_p, power_dbm) {
        Ok(t) => t,
        Err(_) => return failed,
    };
    let e = match tone_amplitude(&probe) {
        Ok(e) => e,
        Err(_) => return failed,
    };
    if e == C64::new(0.0, 0.0) {
        return (
            C64::new(1.0, 0.0),
            PointMeta { n_used: 0, converged: true, semiclassical: true },
            Some(0.0),
        );
    }
    let sol = match duffing_steady(d, &probe) {
        Ok(s) => s,
        Err(_) => return failed,
    };
    match duffing_reflection(d, &sol, rule, e, prev) {
        Ok(g) => {
            // photon number of the branch actually used, for continuation
            let alpha = (C64::new(1.0, 0.0) - g) * e / (C64::i() * d.kappa_e.sqrt());
            let n = alpha.norm_sqr();
            (g, PointMeta { n_used: 0, converged: true, semiclassical: true }, Some(n))
        }
        Err(_) => failed,
    }
}

fn semiclassical_column(
    d: &DeviceParams,
    detunings: &[f64],
    power_dbm: f64,
    rule: BranchRule,
) -> Vec<(C64, PointMeta)> {
    let n = detunings.len();
    let mut out = vec![(FAILED_POINT, PointMeta { n_used: 0, converged: false, semiclassical: true }); n];
    let order: Vec<usize> = match rule {
        // continuation follows the sweep direction along the detuning axis
        BranchRule::SweepDown => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| detunings[b].partial_cmp(&detunings[a]).unwrap());
            idx
        }
        BranchRule::SweepUp => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| detunings[a].partial_cmp(&detunings[b]).unwrap());
            idx
        }
        _ => (0..n).collect(),
    };
    let continuation = matches!(rule, BranchRule::SweepUp | BranchRule::SweepDown);
    let mut prev: Option<f64> = None;
    for i in order {
        let omega_p = d.omega_r + detunings[i];
        let (g, meta, next_prev) =
            semiclassical_point(d, omega_p, power_dbm, rule, if continuation { prev } else { None });
        out[i] = (g, meta);
        prev = next_prev;
    }
    out
}

/// Photon number the mean field predicts at this point (largest stable
/// branch), used to judge whether a truncated hierarchy is worth attempting.
fn mean_field_photons(d: &DeviceParams, omega_p: f64, power_dbm: f64) -> f64 {
    ToneSpec::with_power(omega_p, power_dbm)
        .ok()
        .and_then(|probe| duffing_steady(d, &probe).ok())
        .map(|sol| sol.branches.iter().map(|b| b.photons).fold(0.0, f64::max))
        .unwrap_or(0.0)
}

/// Evaluate Γ over the full (detuning × power) one-tone grid.
pub fn sweep_spectrum(
    d: &DeviceParams,
    detunings: &[f64],
    powers_dbm: &[f64],
    choice: &SolverChoice,
) -> Result<SpectrumGrid> {
    check_axis("detuning", detunings)?;
    check_axis("power", powers_dbm)?;
    let n_det = detunings.len();
    let n_pow = powers_dbm.len();
    let (method, points): (String, Vec<(C64, PointMeta)>) = match choice {
        SolverChoice::Moments(opts) => {
            let pts = (0..n_det * n_pow)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k / n_pow, k % n_pow);
                    moments_point(d, d.omega_r + detunings[i], powers_dbm[j], opts)
                })
                .collect();
            ("moments".into(), pts)
        }
        SolverChoice::Semiclassical(rule) => {
            let cols: Vec<Vec<(C64, PointMeta)>> = (0..n_pow)
                .into_par_iter()
                .map(|j| semiclassical_column(d, detunings, powers_dbm[j], *rule))
                .collect();
            let mut pts = vec![(FAILED_POINT, PointMeta { n_used: 0, converged: false, semiclassical: true }); n_det * n_pow];
            for (j, col) in cols.into_iter().enumerate() {
                for (i, p) in col.into_iter().enumerate() {
                    pts[i * n_pow + j] = p;
                }
            }
            ("semiclassical".into(), pts)
        }
        SolverChoice::Auto(opts) => {
            let classical = d.kerr.abs() < d.kappa_tot();
            let pts = (0..n_det * n_pow)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k / n_pow, k % n_pow);
                    let omega_p = d.omega_r + detunings[i];
                    let power = powers_dbm[j];
                    if classical && mean_field_photons(d, omega_p, power) > 0.5 * opts.n_cap as f64 {
                        let (g, meta, _) = semiclassical_point(d, omega_p, power, BranchRule::Low, None);
                        return (g, meta);
                    }
                    let (g, meta) = moments_point(d, omega_p, power, opts);
                    if !meta.converged && classical {
                        let (g2, meta2, _) =
                            semiclassical_point(d, omega_p, power, BranchRule::Low, None);
                        if meta2.converged {
                            return (g2, meta2);
                        }
                    }
                    (g, meta)
                })
                .collect();
            ("auto".into(), pts)
        }
    };
    let (gamma, meta): (Vec<C64>, Vec<PointMeta>) = points.into_iter().unzip();
    Ok(SpectrumGrid::from_parts(
        detunings.to_vec(),
        powers_dbm.to_vec(),
        method,
        gamma,
        meta,
    ))
}

/// Two-tone sweep: probe response vs (probe detuning × drive power) with the
/// drive at `d.omega_r + drive_detuning`.
///
/// The probe response is linear in the probe amplitude by construction;
/// `probe_power_dbm` only sets the reported amplitude. The truncation order
/// is chosen per drive column by self-converging the drive steady state.
pub fn sweep_two_tone(
    d: &DeviceParams,
    probe_detunings: &[f64],
    drive_powers_dbm: &[f64],
    drive_detuning: f64,
    probe_power_dbm: f64,
    opts: &MomentOptions,
) -> Result<SpectrumGrid> {
    check_axis("probe detuning", probe_detunings)?;
    check_axis("drive power", drive_powers_dbm)?;
    if !drive_detuning.is_finite() {
        return Err(Error::InvalidParameter("drive detuning must be finite".into()));
    }
    let n_det = probe_detunings.len();
    let n_pow = drive_powers_dbm.len();
    let omega_d = d.omega_r + drive_detuning;

    let cols: Vec<Vec<(C64, PointMeta)>> = (0..n_pow)
        .into_par_iter()
        .map(|j| {
            let failed_col = |n_used: u16| {
                vec![
                    (FAILED_POINT, PointMeta { n_used, converged: false, semiclassical: false });
                    n_det
                ]
            };
            let drive = match ToneSpec::with_power(omega_d, drive_powers_dbm[j]) {
                Ok(t) => t,
                Err(_) => return failed_col(0),
            };
            // settle the truncation order on the drive steady state
            let (n_used, drive_converged) =
                match converge_one_tone(d, &drive, opts.tol, opts.n_start, opts.n_cap) {
                    Ok(s) => (s.n_used, s.converged),
                    Err(_) => return failed_col(0),
                };
            (0..n_det)
                .map(|i| {
                    let omega_p = d.omega_r + probe_detunings[i];
                    if omega_p == omega_d {
                        return (
                            FAILED_POINT,
                            PointMeta { n_used: n_used as u16, converged: false, semiclassical: false },
                        );
                    }
                    let probe = match ToneSpec::with_power(omega_p, probe_power_dbm) {
                        Ok(t) => t,
                        Err(_) => {
                            return (
                                FAILED_POINT,
                                PointMeta {
                                    n_used: n_used as u16,
                                    converged: false,
                                    semiclassical: false,
                                },
                            )
                        }
                    };
                    let e_p = match tone_amplitude(&probe) {
                        Ok(e) if e != C64::new(0.0, 0.0) => e,
                        _ => {
                            return (
                                FAILED_POINT,
                                PointMeta {
                                    n_used: n_used as u16,
                                    converged: false,
                                    semiclassical: false,
                                },
                            )
                        }
                    };
                    match solve_two_tone(d, &drive, &probe, n_used) {
                        Ok(sol) => match sol.reflection(d, e_p) {
                            Ok(g) => (
                                g,
                                PointMeta {
                                    n_used: n_used as u16,
                                    converged: drive_converged,
                                    semiclassical: false,
                                },
                            ),
                            Err(_) => (
                                FAILED_POINT,
                                PointMeta {
                                    n_used: n_used as u16,
                                    converged: false,
                                    semiclassical: false,
                                },
                            ),
                        },
                        Err(_) => (
                            FAILED_POINT,
                            PointMeta { n_used: n_used as u16, converged: false, semiclassical: false },
                        ),
                    }
                })
                .collect()
        })
        .collect();

    let mut gamma = vec![FAILED_POINT; n_det * n_pow];
    let mut meta =
        vec![PointMeta { n_used: 0, converged: false, semiclassical: false }; n_det * n_pow];
    for (j, col) in cols.into_iter().enumerate() {
        for (i, (g, m)) in col.into_iter().enumerate() {
            gamma[i * n_pow + j] = g;
            meta[i * n_pow + j] = m;
        }
    }
    Ok(SpectrumGrid::from_parts(
        probe_detunings.to_vec(),
        drive_powers_dbm.to_vec(),
        "two-tone".into(),
        gamma,
        meta,
    ))
}

/// Uniformly spaced axis helper (inclusive endpoints).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

//! Steady-state operator-moment hierarchy for a driven Kerr resonator.
//!
//! The normally ordered moments α_{m,n} = ⟨(a†)^m a^n⟩ of the resonator obey
//! a linear hierarchy in the frame rotating with the input tone:
//!
//! ```text
//! 0 = [(m−n)(ω_r − ω_t) + (m−n)(m+n−1)K/2 + i(m+n)κ_tot/2]·α_{m,n}
//!     + K(m−n)·α_{m+1,n+1} − n√κ_e E·α_{m,n−1} + m√κ_e E*·α_{m−1,n}
//! ```
//!
//! with α_{0,0} = 1. The K coupling to α_{m+1,n+1} keeps the hierarchy open;
//! it is closed by restricting indices to max(m,n) ≤ n_max and treating
//! out-of-range moments as zero. Truncation error is controlled by the
//! self-convergence loop in [`converge_one_tone`].
//!
//! Two-tone spectra are handled perturbatively in the probe: the drive
//! moments solve the one-tone system at (ω_d, E_d), and the probe response
//! solves the same operator shifted by (ω_p − ω_d) on the diagonal with an
//! inhomogeneous right-hand side n√κ_e E_p α^d_{m,n−1}. The probe response
//! is exactly linear in E_p by construction.

use crate::banded::BandMatrix;
use crate::params::{tone_amplitude, DeviceParams, ToneSpec};
use crate::{C64, Error, Result};

/// Truncated table of steady-state moments α_{m,n} on 0 ≤ m,n ≤ n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    n_max: usize,
    values: Vec<C64>,
}

impl MomentTable {
    pub(crate) fn from_values(n_max: usize, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), (n_max + 1) * (n_max + 1));
        Self { n_max, values }
    }

    /// Truncation order: max(m, n) ≤ n_max.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Moment α_{m,n} = ⟨(a†)^m a^n⟩.
    pub fn get(&self, m: usize, n: usize) -> C64 {
        assert!(m <= self.n_max && n <= self.n_max, "moment index out of range");
        self.values[m * (self.n_max + 1) + n]
    }

    /// Mean photon number Re α_{1,1}.
    pub fn photon_number(&self) -> f64 {
        if self.n_max >= 1 {
            self.get(1, 1).re
        } else {
            0.0
        }
    }

    /// Coherent amplitude α_{0,1} = ⟨a⟩.
    pub fn coherent_amplitude(&self) -> C64 {
        self.get(0, 1)
    }

    /// Largest violation of α_{n,m} = conj(α_{m,n}), absolute.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..=self.n_max {
            for n in 0..=self.n_max {
                let d = (self.get(n, m) - self.get(m, n).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest |α_{m,n}| in the table.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Result of a drive + linear probe-response solve.
#[derive(Debug, Clone)]
pub struct TwoToneSolution {
    /// Steady-state moments of the driven resonator (probe off).
    pub drive_table: MomentTable,
    /// Linear probe-response moments; α^p_{0,0} = 0.
    pub probe_table: MomentTable,
}

impl TwoToneSolution {
    /// Probe reflection coefficient Γ = 1 − i√κ_e α^p_{0,1}/E_p.
    pub fn reflection(&self, d: &DeviceParams, probe_amplitude: C64) -> Result<C64> {
        reflection(d, &self.probe_table, probe_amplitude)
    }
}

/// One-tone solve with a self-convergence report.
#[derive(Debug, Clone)]
pub struct ConvergedSolve {
    pub table: MomentTable,
    /// Truncation order of the returned table.
    pub n_used: usize,
    /// Whether the inter-order reflection change dropped below tolerance.
    pub converged: bool,
}

/// The linear operator of the truncated hierarchy in one rotating frame.
struct HierarchyOp {
    n_max: usize,
    /// ω_r − ω_frame.
    detuning_term: f64,
    kerr: f64,
    kappa_tot: f64,
    /// √κ_e · E of the tone driving this frame.
    drive: C64,
    /// Uniform diagonal shift (probe response: ω_p − ω_d).
    shift: f64,
}

struct HierarchySystem {
    n_max: usize,
    dim: usize,
    /// (row, col, value) over unknown indices; excludes the pinned (0,0).
    triplets: Vec<(u32, u32, C64)>,
    /// RHS contribution of α_{0,0} = 1 moved to the right-hand side.
    pinned_rhs: Vec<C64>,
}

#[inline]
fn unknown_index(n_max: usize, m: usize, n: usize) -> usize {
    m * (n_max + 1) + n - 1
}

fn build_system(op: &HierarchyOp) -> HierarchySystem {
    let nm = op.n_max;
    let side = nm + 1;
    let dim = side * side - 1;
    let mut triplets = Vec::with_capacity(4 * dim);
    let mut pinned_rhs = vec![C64::new(0.0, 0.0); dim];
    let g = op.drive;
    let gc = op.drive.conj();
    for m in 0..=nm {
        for n in 0..=nm {
            if m == 0 && n == 0 {
                continue;
            }
            let row = unknown_index(nm, m, n) as u32;
            let mn = m as f64 - n as f64;
            let diag = C64::new(
                mn * op.detuning_term + 0.5 * mn * (m + n - 1) as f64 * op.kerr + op.shift,
                0.5 * (m + n) as f64 * op.kappa_tot,
            );
            triplets.push((row, row, diag));
            if m + 1 <= nm && n + 1 <= nm && mn != 0.0 {
                let col = unknown_index(nm, m + 1, n + 1) as u32;
                triplets.push((row, col, C64::new(op.kerr * mn, 0.0)));
            }
            if n >= 1 {
                let coeff = -(n as f64) * g;
                if m == 0 && n == 1 {
                    pinned_rhs[row as usize] -= coeff;
                } else {
                    let col = unknown_index(nm, m, n - 1) as u32;
                    triplets.push((row, col, coeff));
                }
            }
            if m >= 1 {
                let coeff = (m as f64) * gc;
                if m == 1 && n == 0 {
                    pinned_rhs[row as usize] -= coeff;
                } else {
                    let col = unknown_index(nm, m - 1, n) as u32;
                    triplets.push((row, col, coeff));
                }
            }
        }
    }
    HierarchySystem { n_max: nm, dim, triplets, pinned_rhs }
}

impl HierarchySystem {
    fn matvec(&self, x: &[C64], out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
        for &(r, c, v) in &self.triplets {
            out[r as usize] += v * x[c as usize];
        }
    }

    /// Direct banded solve with iterative refinement against the triplet
    /// operator. Fails on a singular factorization or an irreducible
    /// residual.
    fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let kl = self.n_max + 1;
        let ku = self.n_max + 2;
        let mut band = BandMatrix::zeros(self.dim, kl, ku);
        for &(r, c, v) in &self.triplets {
            band.add(r as usize, c as usize, v);
        }
        let lu = band.factor()?;
        let mut x = rhs.to_vec();
        lu.solve_in_place(&mut x);

        let bnorm = rhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut ax = vec![C64::new(0.0, 0.0); self.dim];
        let mut residual = f64::INFINITY;
        for _ in 0..4 {
            self.matvec(&x, &mut ax);
            let xnorm = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let scale = bnorm.max(xnorm) + f64::MIN_POSITIVE;
            let mut r: Vec<C64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            residual = r.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
            if residual <= 1e-12 {
                break;
            }
            lu.solve_in_place(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        if residual > 1e-8 {
            return Err(Error::NumericalFailure {
                msg: format!("moment system residual {residual:.3e} after refinement"),
                cond: lu.diag_condition(),
            });
        }
        Ok(x)
    }
}

fn table_from_solution(n_max: usize, pinned: C64, x: &[C64]) -> MomentTable {
    let side = n_max + 1;
    let mut values = vec![C64::new(0.0, 0.0); side * side];
    values[0] = pinned;
    values[1..].copy_from_slice(x);
    MomentTable::from_values(n_max, values)
}

fn check_solve_inputs(n_max: usize) -> Result<()> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("truncation order must be at least 1".into()));
    }
    if n_max > 128 {
        return Err(Error::InvalidParameter(format!("truncation order {n_max} is unreasonably large")));
    }
    Ok(())
}

/// Solve the one-tone steady-state hierarchy at truncation order `n_max`.
pub fn solve_one_tone(d: &DeviceParams, probe: &ToneSpec, n_max: usize) -> Result<MomentTable> {
    check_solve_inputs(n_max)?;
    let e = tone_amplitude(probe)?;
    let op = HierarchyOp {
        n_max,
        detuning_term: d.omega_r - probe.omega,
        kerr: d.kerr,
        kappa_tot: d.kappa_tot(),
        drive: d.kappa_e.sqrt() * e,
        shift: 0.0,
    };
    let system = build_system(&op);
    let x = system.solve(&system.pinned_rhs)?;
    Ok(table_from_solution(n_max, C64::new(1.0, 0.0), &x))
}

/// Solve the drive steady state and the linear probe response.
///
/// The probe enters only through the right-hand side, so the returned probe
/// table is exactly proportional to E_p; its absolute power matters only for
/// reporting.
pub fn solve_two_tone(
    d: &DeviceParams,
    drive: &ToneSpec,
    probe: &ToneSpec,
    n_max: usize,
) -> Result<TwoToneSolution> {
    check_solve_inputs(n_max)?;
    if drive.omega == probe.omega {
        return Err(Error::InvalidParameter(
            "drive and probe frequencies must be distinct".into(),
        ));
    }
    let drive_table = solve_one_tone(d, drive, n_max)?;
    let e_d = tone_amplitude(drive)?;
    let e_p = tone_amplitude(probe)?;
    let op = HierarchyOp {
        n_max,
        detuning_term: d.omega_r - drive.omega,
        kerr: d.kerr,
        kappa_tot: d.kappa_tot(),
        drive: d.kappa_e.sqrt() * e_d,
        shift: probe.omega - drive.omega,
    };
    let system = build_system(&op);
    let gp = d.kappa_e.sqrt() * e_p;
    let side = n_max + 1;
    let mut rhs = vec![C64::new(0.0, 0.0); side * side - 1];
    for m in 0..=n_max {
        for n in 1..=n_max {
            let row = unknown_index(n_max, m, n);
            rhs[row] = (n as f64) * gp * drive_table.get(m, n - 1);
        }
    }
    let x = system.solve(&rhs)?;
    let probe_table = table_from_solution(n_max, C64::new(0.0, 0.0), &x);
    Ok(TwoToneSolution { drive_table, probe_table })
}

/// Reflection coefficient Γ = 1 − i√κ_e α_{0,1}/E_p from a probe-response
/// table (for one-tone solves the steady-state table is the probe response).
pub fn reflection(d: &DeviceParams, table: &MomentTable, probe_amplitude: C64) -> Result<C64> {
    if probe_amplitude == C64::new(0.0, 0.0) {
        return Err(Error::InvalidParameter("reflection needs a nonzero probe amplitude".into()));
    }
    let alpha = table.coherent_amplitude();
    Ok(C64::new(1.0, 0.0) - C64::i() * d.kappa_e.sqrt() * alpha / probe_amplitude)
}

/// Increase the truncation order on a geometric schedule until the
/// reflection coefficient stops moving by more than `tol`, or `n_cap` is
/// reached. An unconverged result is flagged, not an error.
pub fn converge_one_tone(
    d: &DeviceParams,
    probe: &ToneSpec,
    tol: f64,
    n_start: usize,
    n_cap: usize,
) -> Result<ConvergedSolve> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("convergence tolerance must be positive".into()));
    }
    if n_start < 1 || n_cap < n_start {
        return Err(Error::InvalidParameter("need 1 ≤ n_start ≤ n_cap".into()));
    }
    let e = tone_amplitude(probe)?;
    // K = 0 closes the hierarchy exactly; zero drive has the exact vacuum
    // solution at any order.
    if d.kerr == 0.0 || e == C64::new(0.0, 0.0) {
        let table = solve_one_tone(d, probe, n_start)?;
        return Ok(ConvergedSolve { table, n_used: n_start, converged: true });
    }
    let mut n = n_start;
    let mut table = solve_one_tone(d, probe, n)?;
    let mut gamma = reflection(d, &table, e)?;
    loop {
        if n == n_cap {
            return Ok(ConvergedSolve { table, n_used: n, converged: false });
        }
        let next = ((3 * n).div_ceil(2)).max(n + 2).min(n_cap);
        let next_table = solve_one_tone(d, probe, next)?;
        let next_gamma = reflection(d, &next_table, e)?;
        let step = (next_gamma - gamma).norm();
        table = next_table;
        gamma = next_gamma;
        n = next;
        if step < tol {
            return Ok(ConvergedSolve { table, n_used: n, converged: true });
        }
    }
}

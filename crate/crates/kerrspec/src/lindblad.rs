//! Brute-force Lindblad steady state of the driven Kerr resonator in a
//! truncated Fock basis.
//!
//! This is an independent oracle for the moment hierarchy: the internal loss
//! port and the feedline vacuum are equivalent to a single photon-decay
//! channel at rate κ_tot, and the coherent input enters as a displacement
//! drive √κ_e(E a† + E* a) in the frame rotating at the tone frequency. The
//! stationary density operator is the trace-normalized null vector of the
//! vectorized generator; moments follow as Tr[ρ (a†)^m a^n].

use nalgebra::DMatrix;

use crate::moments::MomentTable;
use crate::params::{tone_amplitude, DeviceParams, ToneSpec};
use crate::{C64, Error, Result};

/// Population above which the top Fock level marks the cutoff as too small.
pub const TOP_LEVEL_THRESHOLD: f64 = 1e-8;

/// Moments of the Lindblad steady state, with truncation diagnostics.
#[derive(Debug, Clone)]
pub struct LindbladSteadyState {
    pub table: MomentTable,
    /// Population of the highest Fock level kept.
    pub top_population: f64,
    /// False when the top-level population exceeds [`TOP_LEVEL_THRESHOLD`].
    pub truncation_ok: bool,
}

fn annihilation(dim: usize) -> DMatrix<C64> {
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    for k in 1..dim {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Steady state of the driven Kerr resonator with total decay κ_tot, in a
/// Fock basis of dimension `fock_cutoff`.
pub fn lindblad_steady_state(
    d: &DeviceParams,
    drive: &ToneSpec,
    fock_cutoff: usize,
) -> Result<LindbladSteadyState> {
    if fock_cutoff < 2 {
        return Err(Error::InvalidParameter("Fock cutoff must be at least 2".into()));
    }
    if fock_cutoff > 64 {
        return Err(Error::InvalidParameter(format!(
            "Fock cutoff {fock_cutoff} would make the generator unreasonably large"
        )));
    }
    let dim = fock_cutoff;
    let e = tone_amplitude(drive)?;
    let g = d.kappa_e.sqrt() * e;

    let a = annihilation(dim);
    let adag = a.adjoint();
    let eye = DMatrix::<C64>::identity(dim, dim);

    // Rotating-frame Hamiltonian (ω_r − ω) a†a + K/2 a†²a² + g a† + g* a.
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let det = d.omega_r - drive.omega;
    for k in 0..dim {
        let n = k as f64;
        h[(k, k)] = C64::new(det * n + 0.5 * d.kerr * n * (n - 1.0), 0.0);
    }
    h += &adag * g + &a * g.conj();

    // Vectorized generator, column-stacking convention:
    // vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
    let number = &adag * &a;
    let kappa = C64::new(d.kappa_tot(), 0.0);
    let minus_i = -C64::i();
    let mut gen = eye.kronecker(&h) * minus_i;
    gen += h.transpose().kronecker(&eye) * C64::i();
    gen += a.kronecker(&a) * kappa;
    gen += eye.kronecker(&number) * (-0.5 * kappa);
    gen += number.transpose().kronecker(&eye) * (-0.5 * kappa);

    // Replace the first row with the trace constraint Tr ρ = 1.
    let n2 = dim * dim;
    for col in 0..n2 {
        gen[(0, col)] = C64::new(0.0, 0.0);
    }
    for k in 0..dim {
        gen[(0, k * dim + k)] = C64::new(1.0, 0.0);
    }
    let mut rhs = nalgebra::DVector::<C64>::zeros(n2);
    rhs[0] = C64::new(1.0, 0.0);

    let lu = gen.lu();
    let x = lu.solve(&rhs).ok_or_else(|| Error::NumericalFailure {
        msg: "Lindblad generator is singular under the trace constraint".into(),
        cond: f64::INFINITY,
    })?;

    let rho_raw = DMatrix::<C64>::from_column_slice(dim, dim, x.as_slice());
    let mut rho = (&rho_raw + rho_raw.adjoint()) * C64::new(0.5, 0.0);
    let trace: C64 = rho.diagonal().iter().sum();
    if trace.norm() < 1e-300 {
        return Err(Error::NumericalFailure {
            msg: "steady-state density operator has vanishing trace".into(),
            cond: f64::INFINITY,
        });
    }
    rho /= trace;
    let top_population = rho[(dim - 1, dim - 1)].re;

    // Moments up to order min(6, dim-1).
    let n_max = 6.min(dim - 1);
    let mut adag_pows = Vec::with_capacity(n_max + 1);
    let mut a_pows = Vec::with_capacity(n_max + 1);
    adag_pows.push(eye.clone());
    a_pows.push(eye.clone());
    for k in 1..=n_max {
        adag_pows.push(&adag_pows[k - 1] * &adag);
        a_pows.push(&a_pows[k - 1] * &a);
    }
    let side = n_max + 1;
    let mut values = vec![C64::new(0.0, 0.0); side * side];
    for m in 0..=n_max {
        for n in 0..=n_max {
            let op = &adag_pows[m] * &a_pows[n];
            let mut tr = C64::new(0.0, 0.0);
            for i in 0..dim {
                for j in 0..dim {
                    tr += rho[(i, j)] * op[(j, i)];
                }
            }
            values[m * side + n] = tr;
        }
    }
    // Pin the identity moment exactly.
    values[0] = C64::new(1.0, 0.0);

    Ok(LindbladSteadyState {
        table: MomentTable::from_values(n_max, values),
        top_population,
        truncation_ok: top_population.abs() <= TOP_LEVEL_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{reflection, solve_one_tone};
    use crate::params::{linear_reflection, mhz};

    fn f039(kerr_mhz: f64) -> DeviceParams {
        DeviceParams::from_spectroscopy(10.015, kerr_mhz, 0.74, 0.72).unwrap()
    }

    #[test]
    fn zero_drive_gives_vacuum() {
        let d = f039(-11.2);
        let drive = ToneSpec::with_power(d.omega_r, f64::NEG_INFINITY).unwrap();
        let ss = lindblad_steady_state(&d, &drive, 8).unwrap();
        assert!(ss.truncation_ok);
        for m in 0..=ss.table.n_max() {
            for n in 0..=ss.table.n_max() {
                let expect = if m == 0 && n == 0 { 1.0 } else { 0.0 };
                assert!((ss.table.get(m, n) - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn kerr_free_weak_drive_is_coherent() {
        let d = f039(0.0);
        let drive = ToneSpec::with_power(d.omega_r + mhz(0.4), -145.0).unwrap();
        let e = tone_amplitude(&drive).unwrap();
        let ss = lindblad_steady_state(&d, &drive, 20).unwrap();
        assert!(ss.truncation_ok);
        let expected = d.kappa_e.sqrt() * e
            / C64::new(drive.omega - d.omega_r, 0.5 * d.kappa_tot());
        let alpha = ss.table.get(0, 1);
        assert!((alpha - expected).norm() < 1e-9, "{alpha} vs {expected}");
        for m in 0..=4 {
            for n in 0..=4 {
                let coherent = alpha.conj().powu(m as u32) * alpha.powu(n as u32);
                assert!(
                    (ss.table.get(m, n) - coherent).norm() < 1e-9,
                    "moment ({m},{n}) deviates from coherent-state value"
                );
            }
        }
        let g = reflection(&d, &ss.table, e).unwrap();
        assert!((g - linear_reflection(&d, drive.omega)).norm() < 1e-9);
    }

    #[test]
    fn agrees_with_moment_hierarchy_in_kerr_regime() {
        let d = f039(-11.2);
        let drive = ToneSpec::with_power(d.omega_r + 0.5 * d.kerr, -131.0).unwrap();
        let e = tone_amplitude(&drive).unwrap();
        let ss = lindblad_steady_state(&d, &drive, 28).unwrap();
        assert!(ss.truncation_ok);
        assert!(ss.table.photon_number() < 2.0);
        let table = solve_one_tone(&d, &drive, 20).unwrap();
        let g_m = reflection(&d, &table, e).unwrap();
        let g_l = reflection(&d, &ss.table, e).unwrap();
        assert!((g_m - g_l).norm() < 1e-6, "{g_m} vs {g_l}");
    }

    #[test]
    fn small_cutoff_is_flagged() {
        let d = f039(-2.0);
        // strong drive, tiny basis
        let drive = ToneSpec::with_power(d.omega_r, -118.0).unwrap();
        let ss = lindblad_steady_state(&d, &drive, 6).unwrap();
        assert!(!ss.truncation_ok);
        assert!(ss.top_population > TOP_LEVEL_THRESHOLD);
    }

    #[test]
    fn rejects_degenerate_cutoff() {
        let d = f039(-2.0);
        let drive = ToneSpec::with_power(d.omega_r, -140.0).unwrap();
        assert!(lindblad_steady_state(&d, &drive, 1).is_err());
    }
}

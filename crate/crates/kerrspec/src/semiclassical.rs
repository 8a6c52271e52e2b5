//! Mean-field steady states of the driven Kerr resonator.
//!
//! Factorizing the moment hierarchy as α_{m,n} → (ᾱ*)^m ᾱ^n turns the (0,1)
//! component into the classical Duffing equation of motion
//!
//! ```text
//! dᾱ/dt = i(Δ − K|ᾱ|²)ᾱ − (κ_tot/2)ᾱ − i√κ_e E_p,   Δ = ω_p − ω_r,
//! ```
//!
//! whose stationary photon number n = |ᾱ|² solves the cubic
//! n[(Δ − Kn)² + κ_tot²/4] = κ_e|E_p|². This is the right description of
//! one-tone spectra in the classical regime |K| < κ_tot.
//!
//! Under a two-photon pump at 2ω the mean field in the frame rotating at ω
//! obeys
//!
//! ```text
//! dᾱ/dt = −iΔᾱ − iK|ᾱ|²ᾱ − (κ_tot/2)ᾱ − iβᾱ*,   Δ = ω − ω_r,
//! ```
//!
//! with pump amplitude β ≥ 0. Above threshold β_th = √(Δ² + κ_tot²/4) the
//! vacuum destabilizes and a pair of oscillation states ±ᾱ with phases π
//! apart appears. [`simulate_locking`] integrates this flow with additive
//! white noise to reproduce the phase-locking statistics of the oscillator
//! output.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::params::{tone_amplitude, DeviceParams, ToneSpec};
use crate::{C64, Error, Result};

/// One stationary Duffing amplitude.
#[derive(Debug, Clone, Copy)]
pub struct DuffingBranch {
    /// Stationary coherent amplitude ᾱ.
    pub amplitude: C64,
    /// Photon number |ᾱ|².
    pub photons: f64,
    /// Linear stability of the branch (both Jacobian eigenvalues damped).
    pub stable: bool,
}

/// All stationary Duffing branches at one drive point, sorted by photon
/// number.
#[derive(Debug, Clone)]
pub struct DuffingSolution {
    pub branches: Vec<DuffingBranch>,
}

impl DuffingSolution {
    pub fn stable_branches(&self) -> impl Iterator<Item = &DuffingBranch> {
        self.branches.iter().filter(|b| b.stable)
    }
}

/// Branch selection for multivalued (bistable) response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchRule {
    /// Lowest-photon-number stable branch.
    Low,
    /// Highest-photon-number stable branch.
    High,
    /// Adiabatic continuation while sweeping the axis upward.
    SweepUp,
    /// Adiabatic continuation while sweeping the axis downward.
    SweepDown,
}

/// Max eigenvalue real part of the Jacobian [[a, b], [b*, a*]] of a
/// fluctuation equation δ̇ = aδ + bδ*.
fn pair_eigen_max_re(a: C64, b: C64) -> f64 {
    let disc = b.norm_sqr() - a.im * a.im;
    if disc > 0.0 {
        a.re + disc.sqrt()
    } else {
        a.re
    }
}

/// Real roots of a₃x³ + a₂x² + a₁x + a₀ with a₃ ≠ 0, Newton-polished.
fn cubic_real_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let p2 = a2 / a3;
    let p1 = a1 / a3;
    let p0 = a0 / a3;
    // depressed cubic t³ + pt + q, x = t − p2/3
    let shift = p2 / 3.0;
    let p = p1 - p2 * p2 / 3.0;
    let q = 2.0 * p2.powi(3) / 27.0 - p2 * p1 / 3.0 + p0;
    let disc = -4.0 * p.powi(3) - 27.0 * q * q;
    let mut roots = Vec::with_capacity(3);
    if disc > 0.0 {
        // three real roots
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * m)).clamp(-1.0, 1.0).acos() / 3.0;
        for k in 0..3 {
            let t = m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
            roots.push(t - shift);
        }
    } else {
        let half_q = -q / 2.0;
        let r = (q * q / 4.0 + p.powi(3) / 27.0).max(0.0).sqrt();
        let u = (half_q + r).cbrt();
        let v = (half_q - r).cbrt();
        roots.push(u + v - shift);
    }
    // polish on the original cubic
    let f = |x: f64| ((a3 * x + a2) * x + a1) * x + a0;
    let df = |x: f64| (3.0 * a3 * x + 2.0 * a2) * x + a1;
    for root in &mut roots {
        for _ in 0..4 {
            let d = df(*root);
            if d.abs() > 0.0 {
                let step = f(*root) / d;
                if step.is_finite() {
                    *root -= step;
                }
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (a.abs() + b.abs()).max(1e-300));
    roots
}

/// All mean-field steady states of the one-tone driven Kerr resonator.
pub fn duffing_steady(d: &DeviceParams, probe: &ToneSpec) -> Result<DuffingSolution> {
    let e = tone_amplitude(probe)?;
    let delta = probe.omega - d.omega_r;
    let kappa = d.kappa_tot();
    let half_k = 0.5 * kappa;
    let s = d.kappa_e * e.norm_sqr();
    let k = d.kerr;

    let photon_roots: Vec<f64> = if k == 0.0 {
        vec![s / (delta * delta + half_k * half_k)]
    } else {
        cubic_real_roots(
            k * k,
            -2.0 * delta * k,
            delta * delta + half_k * half_k,
            -s,
        )
        .into_iter()
        .filter(|&n| n >= -1e-12 * s.max(1.0))
        .map(|n| n.max(0.0))
        .collect()
    };

    let mut branches: Vec<DuffingBranch> = photon_roots
        .into_iter()
        .map(|n| {
            let den = C64::new(delta - k * n, half_k);
            let amplitude = if s == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                d.kappa_e.sqrt() * e / den
            };
            // fluctuation equation around the branch
            let a = C64::new(-half_k, delta - 2.0 * k * n);
            let b = -C64::i() * k * amplitude * amplitude;
            let stable = pair_eigen_max_re(a, b) < 0.0;
            DuffingBranch { amplitude, photons: n, stable }
        })
        .collect();
    branches.sort_by(|x, y| x.photons.partial_cmp(&y.photons).unwrap());
    Ok(DuffingSolution { branches })
}

/// Reflection coefficient of the branch selected by `rule`.
///
/// The sweep rules continue adiabatically from `prev_photons`, the photon
/// number selected at the previous point of the sweep axis; with no history
/// they fall back to the low branch (off-resonant sweep endpoints are
/// single-valued).
pub fn duffing_reflection(
    d: &DeviceParams,
    sol: &DuffingSolution,
    rule: BranchRule,
    probe_amplitude: C64,
    prev_photons: Option<f64>,
) -> Result<C64> {
    if probe_amplitude == C64::new(0.0, 0.0) {
        return Err(Error::InvalidParameter("reflection needs a nonzero probe amplitude".into()));
    }
    let stable: Vec<&DuffingBranch> = sol.stable_branches().collect();
    if stable.is_empty() {
        return Err(Error::NumericalFailure {
            msg: "no stable Duffing branch".into(),
            cond: f64::NAN,
        });
    }
    let branch = match (rule, prev_photons) {
        (BranchRule::Low, _) | (BranchRule::SweepUp | BranchRule::SweepDown, None) => stable[0],
        (BranchRule::High, _) => stable[stable.len() - 1],
        (BranchRule::SweepUp | BranchRule::SweepDown, Some(prev)) => stable
            .iter()
            .min_by(|a, b| {
                let da = (a.photons - prev).abs();
                let db = (b.photons - prev).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap(),
    };
    Ok(C64::new(1.0, 0.0) - C64::i() * d.kappa_e.sqrt() * branch.amplitude / probe_amplitude)
}

/// Two-photon pump working point for parametric oscillation.
///
/// `pump_detuning` is Δ = ω − ω_r where 2ω is the pump frequency; `beta` is
/// the two-photon pump amplitude in rad/s. The pump-line transfer function
/// from pump power to β is not modeled, so β is a direct input.
#[derive(Debug, Clone, Copy)]
pub struct PumpSpec {
    pub pump_detuning: f64,
    pub beta: f64,
    pub locking: Option<LockingTone>,
}

/// Weak injected tone at half the pump frequency used to bias the 0/π state
/// choice. `amplitude` is the input-field amplitude |E| in √(photons/s).
#[derive(Debug, Clone, Copy)]
pub struct LockingTone {
    pub amplitude: f64,
    pub phase: f64,
}

impl PumpSpec {
    pub fn new(pump_detuning: f64, beta: f64) -> Result<Self> {
        if !pump_detuning.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParameter("pump parameters must be finite".into()));
        }
        if beta < 0.0 {
            return Err(Error::InvalidParameter("pump amplitude beta must be non-negative".into()));
        }
        Ok(Self { pump_detuning, beta, locking: None })
    }

    pub fn with_locking(mut self, amplitude: f64, phase: f64) -> Self {
        self.locking = Some(LockingTone { amplitude, phase });
        self
    }
}

/// A stationary state of the pumped resonator.
#[derive(Debug, Clone, Copy)]
pub struct KpoState {
    pub amplitude: C64,
    pub stable: bool,
}

/// Mean-field flow of the pumped Kerr resonator in the half-pump rotating
/// frame, with an optional injected drive term.
pub fn kpo_flow(d: &DeviceParams, pump: &PumpSpec, drive: C64, alpha: C64) -> C64 {
    let i = C64::i();
    -i * pump.pump_detuning * alpha
        - i * d.kerr * alpha.norm_sqr() * alpha
        - 0.5 * d.kappa_tot() * alpha
        - i * pump.beta * alpha.conj()
        + drive
}

/// Stationary solutions of the pumped mean field: the vacuum with its
/// stability, plus the ± pair(s) of oscillation states when they exist.
pub fn kpo_steady_states(d: &DeviceParams, pump: &PumpSpec) -> Vec<KpoState> {
    let delta = pump.pump_detuning;
    let beta = pump.beta;
    let kappa = d.kappa_tot();
    let half_k = 0.5 * kappa;
    let mut states = Vec::with_capacity(5);

    // vacuum
    let a0 = C64::new(-half_k, -delta);
    let b0 = C64::new(0.0, -beta);
    states.push(KpoState {
        amplitude: C64::new(0.0, 0.0),
        stable: pair_eigen_max_re(a0, b0) < 0.0,
    });

    if d.kerr != 0.0 && beta > half_k {
        let s = (beta * beta - half_k * half_k).sqrt();
        let mut photon_candidates = vec![(-delta + s) / d.kerr, (-delta - s) / d.kerr];
        photon_candidates.retain(|&n| n > 1e-12 * (delta.abs() / d.kerr.abs()).max(1.0));
        photon_candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        photon_candidates.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (a.abs() + b.abs()));
        for n in photon_candidates {
            // β e^{−2iθ} = −(Δ + Kn) + iκ/2 fixes the phase pair
            let rhs = C64::new(-(delta + d.kerr * n), half_k);
            let theta = -0.5 * rhs.arg();
            let alpha = C64::from_polar(n.sqrt(), theta);
            let a = C64::new(-half_k, -(delta + 2.0 * d.kerr * n));
            let b = -C64::i() * (d.kerr * alpha * alpha + C64::new(beta, 0.0));
            let stable = pair_eigen_max_re(a, b) < 0.0;
            states.push(KpoState { amplitude: alpha, stable });
            states.push(KpoState { amplitude: -alpha, stable });
        }
    }
    states
}

/// Integration schedule for the locking simulation.
#[derive(Debug, Clone, Copy)]
pub struct LockingSchedule {
    /// Pump ramp 0 → β duration (s).
    pub ramp_time: f64,
    /// Hold at full pump before classification (s).
    pub hold_time: f64,
    /// Fixed step for the stochastic integrator (s).
    pub dt: f64,
}

impl LockingSchedule {
    /// Schedule scaled to the device, with a time step resolving the fastest
    /// rotation in the flow. The ramp is kept short (a few lifetimes): the
    /// locking seed decays at κ/2 until the pump crosses threshold, so a
    /// slow ramp would erase it.
    pub fn for_device(d: &DeviceParams, pump: &PumpSpec) -> Self {
        let kappa = d.kappa_tot();
        let n_est = kpo_steady_states(d, pump)
            .iter()
            .map(|s| s.amplitude.norm_sqr())
            .fold(0.0, f64::max)
            .max(1.0);
        let omega_scale =
            pump.pump_detuning.abs() + pump.beta + 3.0 * d.kerr.abs() * n_est + kappa;
        Self {
            ramp_time: 3.0 / kappa,
            hold_time: 7.0 / kappa,
            dt: (0.08 / omega_scale).min(1.0 / kappa),
        }
    }
}

/// Options for [`simulate_locking`].
#[derive(Debug, Clone, Copy)]
pub struct LockingOptions {
    /// Steady-state photon-number variance of the undriven mode set by the
    /// noise (0.5 = vacuum-limited).
    pub noise_photons: f64,
    pub trials: usize,
    pub seed: u64,
    pub schedule: LockingSchedule,
}

/// π-state statistics at one locking phase.
#[derive(Debug, Clone, Copy)]
pub struct LockingPoint {
    pub phase: f64,
    /// π-state frequency among classified trials (NaN if none classified).
    pub p_pi: f64,
    pub pi_count: u32,
    pub unclassified: u32,
    pub trials: u32,
}

/// Dormand–Prince 5(4) adaptive step for the deterministic flow.
fn rk45<F: Fn(f64, C64) -> C64>(f: &F, t0: f64, t1: f64, y0: C64, tol: f64) -> C64 {
    let mut t = t0;
    let mut y = y0;
    let mut h = (t1 - t0) / 100.0;
    let mut k1 = f(t, y);
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let k2 = f(t + 0.2 * h, y + h * 0.2 * k1);
        let k3 = f(t + 0.3 * h, y + h * (0.075 * k1 + 0.225 * k2));
        let k4 = f(
            t + 0.8 * h,
            y + h * ((44.0 / 45.0) * k1 - (56.0 / 15.0) * k2 + (32.0 / 9.0) * k3),
        );
        let k5 = f(
            t + (8.0 / 9.0) * h,
            y + h
                * ((19372.0 / 6561.0) * k1 - (25360.0 / 2187.0) * k2 + (64448.0 / 6561.0) * k3
                    - (212.0 / 729.0) * k4),
        );
        let k6 = f(
            t + h,
            y + h
                * ((9017.0 / 3168.0) * k1 - (355.0 / 33.0) * k2 + (46732.0 / 5247.0) * k3
                    + (49.0 / 176.0) * k4
                    - (5103.0 / 18656.0) * k5),
        );
        let y5 = y + h
            * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 + (125.0 / 192.0) * k4
                - (2187.0 / 6784.0) * k5
                + (11.0 / 84.0) * k6);
        let k7 = f(t + h, y5);
        let y4 = y + h
            * ((5179.0 / 57600.0) * k1 + (7571.0 / 16695.0) * k3 + (393.0 / 640.0) * k4
                - (92097.0 / 339200.0) * k5
                + (187.0 / 2100.0) * k6
                + (1.0 / 40.0) * k7);
        let err = (y5 - y4).norm();
        let scale = tol * (1.0 + y.norm().max(y5.norm()));
        if err <= scale {
            t += h;
            y = y5;
            k1 = k7;
        }
        let factor = if err > 0.0 { 0.9 * (scale / err).powf(0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        if h <= 0.0 || !h.is_finite() {
            break;
        }
    }
    y
}

fn run_locking_trial(
    d: &DeviceParams,
    pump: &PumpSpec,
    phase: f64,
    opts: &LockingOptions,
    stream: u64,
) -> C64 {
    let sched = opts.schedule;
    let total = sched.ramp_time + sched.hold_time;
    // initial amplitude: steady linear response to the locking tone in the
    // half-pump frame (locking is then switched off for the whole ramp)
    let alpha0 = match pump.locking {
        Some(lock) if lock.amplitude > 0.0 => {
            let e_lock = C64::from_polar(lock.amplitude, lock.phase + phase);
            let inject = -C64::i() * d.kappa_e.sqrt() * e_lock;
            inject / C64::new(0.5 * d.kappa_tot(), pump.pump_detuning)
        }
        _ => C64::new(0.0, 0.0),
    };
    let ramped = |t: f64| PumpSpec {
        beta: pump.beta * (t / sched.ramp_time).clamp(0.0, 1.0),
        ..*pump
    };
    let sigma = (d.kappa_tot() * opts.noise_photons / 2.0).sqrt();
    if sigma == 0.0 {
        return rk45(
            &|t, y| kpo_flow(d, &ramped(t), C64::new(0.0, 0.0), y),
            0.0,
            total,
            alpha0,
            1e-8,
        );
    }
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let normal = StandardNormal;
    let dt = sched.dt;
    let steps = (total / dt).ceil() as usize;
    let sqrt_dt = dt.sqrt();
    let mut alpha = alpha0;
    let mut t = 0.0;
    for _ in 0..steps {
        // Heun drift + additive noise
        let p_now = ramped(t);
        let p_next = ramped(t + dt);
        let f1 = kpo_flow(d, &p_now, C64::new(0.0, 0.0), alpha);
        let pred = alpha + dt * f1;
        let f2 = kpo_flow(d, &p_next, C64::new(0.0, 0.0), pred);
        let gx: f64 = normal.sample(&mut rng);
        let gy: f64 = normal.sample(&mut rng);
        alpha += 0.5 * dt * (f1 + f2) + sigma * sqrt_dt * C64::new(gx, gy);
        t += dt;
    }
    alpha
}

/// Ramp the pump from zero with additive noise and report the π-state
/// probability as a function of the locking phase.
///
/// Trials are independent; each owns a counter-based RNG stream derived from
/// (seed, phase index, trial index), so results are reproducible bit-for-bit
/// regardless of thread count.
pub fn simulate_locking(
    d: &DeviceParams,
    pump: &PumpSpec,
    phases: &[f64],
    opts: &LockingOptions,
) -> Result<Vec<LockingPoint>> {
    if opts.trials == 0 {
        return Err(Error::InvalidParameter("need at least one locking trial".into()));
    }
    if !(opts.noise_photons >= 0.0) {
        return Err(Error::InvalidParameter("noise strength must be non-negative".into()));
    }
    let stable: Vec<KpoState> = kpo_steady_states(d, pump)
        .into_iter()
        .filter(|s| s.stable && s.amplitude.norm_sqr() > 0.0)
        .collect();
    if stable.is_empty() {
        return Err(Error::InvalidParameter(
            "pump is below threshold: no stable oscillation state to lock to".into(),
        ));
    }
    // canonical reference: member of the highest-photon stable pair with
    // phase in (−π/2, π/2]
    let reference = stable
        .iter()
        .max_by(|a, b| a.amplitude.norm_sqr().partial_cmp(&b.amplitude.norm_sqr()).unwrap())
        .map(|s| {
            let a = s.amplitude;
            if a.re > 0.0 || (a.re == 0.0 && a.im > 0.0) {
                a
            } else {
                -a
            }
        })
        .unwrap();
    let ref_norm = reference.norm();

    let points: Vec<LockingPoint> = phases
        .iter()
        .enumerate()
        .map(|(pi, &phase)| {
            let (pi_count, unclassified) = (0..opts.trials)
                .into_par_iter()
                .map(|trial| {
                    let stream = (pi * opts.trials + trial) as u64;
                    let alpha = run_locking_trial(d, pump, phase, opts, stream);
                    if alpha.norm() < 0.25 * ref_norm {
                        (0u32, 1u32)
                    } else if (alpha * reference.conj()).re < 0.0 {
                        (1u32, 0u32)
                    } else {
                        (0u32, 0u32)
                    }
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            let classified = opts.trials as u32 - unclassified;
            LockingPoint {
                phase,
                p_pi: if classified > 0 { pi_count as f64 / classified as f64 } else { f64::NAN },
                pi_count,
                unclassified,
                trials: opts.trials as u32,
            }
        })
        .collect();
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{linear_reflection, mhz};

    fn classical_device() -> DeviceParams {
        DeviceParams::from_spectroscopy(11.742, -0.45, 0.85, 1.01).unwrap()
    }

    fn kerr_device() -> DeviceParams {
        DeviceParams::from_spectroscopy(10.015, -11.0, 0.74, 0.72).unwrap()
    }

    fn pump_above_threshold(_d: &DeviceParams) -> PumpSpec {
        PumpSpec::new(mhz(-20.0), mhz(80.0)).unwrap().with_locking(0.0, 0.0)
    }

    fn residual(d: &DeviceParams, probe: &ToneSpec, branch: &DuffingBranch) -> f64 {
        let e = tone_amplitude(probe).unwrap();
        let delta = probe.omega - d.omega_r;
        let f = C64::new(-(0.5 * d.kappa_tot()), delta - d.kerr * branch.photons)
            * branch.amplitude
            - C64::i() * d.kappa_e.sqrt() * e;
        f.norm() / (d.kappa_tot() * branch.amplitude.norm()).max(d.kappa_e.sqrt() * e.norm())
    }

    #[test]
    fn kerr_free_duffing_is_linear() {
        let mut d = classical_device();
        d.kerr = 0.0;
        let probe = ToneSpec::with_power(d.omega_r + mhz(0.4), -130.0).unwrap();
        let sol = duffing_steady(&d, &probe).unwrap();
        assert_eq!(sol.branches.len(), 1);
        let e = tone_amplitude(&probe).unwrap();
        let g = duffing_reflection(&d, &sol, BranchRule::Low, e, None).unwrap();
        assert!((g - linear_reflection(&d, probe.omega)).norm() < 1e-12);
    }

    #[test]
    fn branch_residuals_are_tiny() {
        let d = classical_device();
        for ddet in [-3.0, -1.5, -0.5, 0.5] {
            for p in [-135.0, -127.0, -122.0] {
                let probe = ToneSpec::with_power(d.omega_r + mhz(ddet), p).unwrap();
                let sol = duffing_steady(&d, &probe).unwrap();
                assert!(!sol.branches.is_empty());
                assert!(sol.branches.len() <= 3);
                for b in &sol.branches {
                    assert!(residual(&d, &probe, b) < 1e-10, "residual {}", residual(&d, &probe, b));
                }
            }
        }
    }

    /// Dense sign-change oracle for the root count of the photon-number cubic.
    fn oracle_root_count(d: &DeviceParams, probe: &ToneSpec) -> usize {
        let e = tone_amplitude(probe).unwrap();
        let delta = probe.omega - d.omega_r;
        let half_k = 0.5 * d.kappa_tot();
        let s = d.kappa_e * e.norm_sqr();
        let f = |n: f64| n * ((delta - d.kerr * n).powi(2) + half_k * half_k) - s;
        let n_hi = 2.0 * (s / (half_k * half_k)).max(2.0 * delta.abs() / d.kerr.abs().max(1e-30));
        let m = 400_000;
        let mut count = 0;
        let mut prev = f(0.0);
        for i in 1..=m {
            let n = n_hi * i as f64 / m as f64;
            let cur = f(n);
            if prev == 0.0 || prev.signum() != cur.signum() {
                count += 1;
            }
            prev = cur;
        }
        count
    }

    #[test]
    fn root_counts_match_sign_change_oracle() {
        let d = classical_device();
        for ddet in [-2.5, -1.2, -0.4, 0.3, 1.0] {
            for p in [-134.0, -128.0, -124.0] {
                let probe = ToneSpec::with_power(d.omega_r + mhz(ddet), p).unwrap();
                let sol = duffing_steady(&d, &probe).unwrap();
                let oracle = oracle_root_count(&d, &probe);
                assert_eq!(
                    sol.branches.len(),
                    oracle,
                    "root count mismatch at Δ = {ddet} MHz, P = {p} dBm"
                );
            }
        }
    }

    #[test]
    fn bistability_requires_detuning_beyond_fold() {
        let d = classical_device();
        let kappa = d.kappa_tot();
        let fold = 3f64.sqrt() * kappa / 2.0;
        // scan: any bistable point must satisfy |Δ| > √3 κ/2 and KΔ > 0
        let mut seen_bistable = false;
        for ddet_khz in (-3000..1500).step_by(50) {
            let delta = 2.0 * std::f64::consts::PI * ddet_khz as f64 * 1e3;
            for p in [-133.0, -130.0, -127.0, -124.0] {
                let probe = ToneSpec::with_power(d.omega_r + delta, p).unwrap();
                let sol = duffing_steady(&d, &probe).unwrap();
                if sol.branches.len() == 3 {
                    seen_bistable = true;
                    assert!(delta.abs() > fold, "bistable inside fold threshold");
                    assert!(d.kerr * delta > 0.0, "bistable on the wrong detuning side");
                }
            }
        }
        assert!(seen_bistable, "no bistable point found in the scan window");
    }

    #[test]
    fn hysteresis_between_sweep_directions() {
        let d = classical_device();
        // locate a bistable point on the negative-detuning side
        let mut found = None;
        'search: for ddet in [-2.0, -2.5, -3.0, -3.5] {
            for p10 in -1350..-1150 {
                let probe =
                    ToneSpec::with_power(d.omega_r + mhz(ddet), p10 as f64 / 10.0).unwrap();
                if duffing_steady(&d, &probe).unwrap().branches.len() == 3 {
                    found = Some(probe);
                    break 'search;
                }
            }
        }
        let probe = found.expect("no bistable point in the scan window");
        let sol = duffing_steady(&d, &probe).unwrap();
        assert_eq!(sol.branches.len(), 3);
        let e = tone_amplitude(&probe).unwrap();
        let low = sol.branches.first().unwrap().photons;
        let high = sol.branches.last().unwrap().photons;
        let g_up = duffing_reflection(&d, &sol, BranchRule::SweepUp, e, Some(high)).unwrap();
        let g_down = duffing_reflection(&d, &sol, BranchRule::SweepDown, e, Some(low)).unwrap();
        assert!((g_up - g_down).norm() > 1e-3);
        // middle branch is unstable
        assert!(!sol.branches[1].stable);
        assert!(sol.branches[0].stable && sol.branches[2].stable);
    }

    #[test]
    fn off_resonant_reflection_is_unity() {
        let d = classical_device();
        let probe = ToneSpec::with_power(d.omega_r + mhz(400.0), -120.0).unwrap();
        let sol = duffing_steady(&d, &probe).unwrap();
        let e = tone_amplitude(&probe).unwrap();
        let g = duffing_reflection(&d, &sol, BranchRule::Low, e, None).unwrap();
        // |Γ − 1| ≈ κ_e/Δ ≈ 2.1e-3 at 400 MHz detuning
        assert!((g - C64::new(1.0, 0.0)).norm() < 3e-3);
    }

    #[test]
    fn kpo_without_pump_has_only_stable_vacuum() {
        let d = kerr_device();
        let pump = PumpSpec::new(mhz(-5.0), 0.0).unwrap();
        let states = kpo_steady_states(&d, &pump);
        assert_eq!(states.len(), 1);
        assert!(states[0].stable);
        assert_eq!(states[0].amplitude, C64::new(0.0, 0.0));
    }

    #[test]
    fn vacuum_destabilizes_at_threshold() {
        let d = kerr_device();
        let delta = mhz(-20.0);
        let beta_th = (delta * delta + 0.25 * d.kappa_tot().powi(2)).sqrt();
        let below = PumpSpec::new(delta, 0.97 * beta_th).unwrap();
        let above = PumpSpec::new(delta, 1.03 * beta_th).unwrap();
        assert!(kpo_steady_states(&d, &below)[0].stable);
        assert!(!kpo_steady_states(&d, &above)[0].stable);
        // just above threshold (KΔ > 0): exactly one stable ± pair
        let states = kpo_steady_states(&d, &above);
        let osc: Vec<_> = states.iter().skip(1).collect();
        assert_eq!(osc.len(), 2);
        assert!(osc.iter().all(|s| s.stable));
        assert!((osc[0].amplitude + osc[1].amplitude).norm() < 1e-12);
    }

    #[test]
    fn oscillation_states_satisfy_flow_and_pair_symmetry() {
        let d = kerr_device();
        let pump = pump_above_threshold(&d);
        let states = kpo_steady_states(&d, &pump);
        assert_eq!(states.len(), 3);
        let scale = d.kappa_tot() * states[1].amplitude.norm();
        for s in states.iter().skip(1) {
            let r = kpo_flow(&d, &pump, C64::new(0.0, 0.0), s.amplitude).norm();
            assert!(r < 1e-10 * scale, "flow residual {r:e}");
        }
        // spec photon number: n = [−Δ ± √(β² − κ²/4)]/K ≥ 0
        let s_val = (pump.beta.powi(2) - 0.25 * d.kappa_tot().powi(2)).sqrt();
        let n_expected = (-pump.pump_detuning - s_val) / d.kerr;
        assert!((states[1].amplitude.norm_sqr() - n_expected).abs() < 1e-9 * n_expected);
    }

    #[test]
    fn stability_agrees_with_time_integration() {
        let d = kerr_device();
        let pump = pump_above_threshold(&d);
        for s in kpo_steady_states(&d, &pump) {
            let start = s.amplitude + C64::new(1e-3, -0.7e-3);
            let end = rk45(
                &|_, y| kpo_flow(&d, &pump, C64::new(0.0, 0.0), y),
                0.0,
                30.0 / d.kappa_tot(),
                start,
                1e-9,
            );
            let drift = (end - s.amplitude).norm();
            if s.stable {
                assert!(drift < 1e-4, "stable state drifted by {drift:e}");
            } else {
                assert!(drift > 1e-2, "unstable state failed to depart ({drift:e})");
            }
        }
    }

    #[test]
    fn locking_requires_oscillation() {
        let d = kerr_device();
        let pump = PumpSpec::new(mhz(-20.0), 0.0).unwrap();
        let opts = LockingOptions {
            noise_photons: 0.5,
            trials: 4,
            seed: 1,
            schedule: LockingSchedule::for_device(&d, &pump),
        };
        assert!(simulate_locking(&d, &pump, &[0.0], &opts).is_err());
    }

    #[test]
    fn unbiased_locking_is_a_coin_flip() {
        let d = kerr_device();
        let pump = pump_above_threshold(&d);
        let opts = LockingOptions {
            noise_photons: 0.5,
            trials: 400,
            seed: 42,
            schedule: LockingSchedule::for_device(&d, &pump),
        };
        let pts = simulate_locking(&d, &pump, &[0.0], &opts).unwrap();
        let p = pts[0].p_pi;
        // 4σ binomial window around 0.5 for 400 trials
        assert!((p - 0.5).abs() < 4.0 * 0.025, "p_pi = {p}");
        assert!(pts[0].unclassified < 20);
    }

    #[test]
    fn strong_locking_is_deterministic_and_phase_selective() {
        let d = kerr_device();
        // strong seed: initial amplitude comparable to the oscillation state
        let pump = pump_above_threshold(&d).with_locking(2.0e5, 0.0);
        let opts = LockingOptions {
            noise_photons: 0.0,
            trials: 1,
            seed: 7,
            schedule: LockingSchedule::for_device(&d, &pump),
        };
        let pts =
            simulate_locking(&d, &pump, &[0.0, std::f64::consts::PI], &opts).unwrap();
        assert_eq!(pts[0].unclassified, 0);
        assert_eq!(pts[1].unclassified, 0);
        // noise off: each phase picks one state deterministically, and
        // opposite phases pick opposite states
        assert!(pts[0].p_pi == 0.0 || pts[0].p_pi == 1.0);
        assert_eq!(pts[0].p_pi + pts[1].p_pi, 1.0);
    }

    #[test]
    fn locking_is_reproducible_per_seed() {
        let d = kerr_device();
        let pump = pump_above_threshold(&d);
        let opts = LockingOptions {
            noise_photons: 0.5,
            trials: 64,
            seed: 9,
            schedule: LockingSchedule::for_device(&d, &pump),
        };
        let a = simulate_locking(&d, &pump, &[0.3, 1.1], &opts).unwrap();
        let b = simulate_locking(&d, &pump, &[0.3, 1.1], &opts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pi_count, y.pi_count);
            assert_eq!(x.unclassified, y.unclassified);
        }
    }

    #[test]
    fn pump_spec_validation() {
        assert!(PumpSpec::new(0.0, -1.0).is_err());
        assert!(PumpSpec::new(f64::NAN, 1.0).is_err());
    }
}

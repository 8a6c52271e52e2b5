//! CSV import/export.
//!
//! Schema (`# kerrspec v1`):
//!
//! * spectra — `detuning_hz,power_dbm,re_gamma,im_gamma,abs_gamma,converged`,
//!   one row per grid point, detuning-major, converged as 0/1;
//! * flux curves — `f,omega_r_hz,kerr_hz`.
//!
//! Values are written with 12 significant digits ('.' decimal separator,
//! `\n` line endings), which round-trips f64 grid data exactly at the level
//! the format promises: emit → import → emit is byte-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::circuit::FluxCurve;
use crate::fitting::ReflectionTrace;
use crate::spectrum::{PointMeta, SpectrumGrid};
use crate::{C64, Error, Result};

const MAGIC: &str = "# kerrspec v1";
const SPECTRUM_HEADER: &str = "detuning_hz,power_dbm,re_gamma,im_gamma,abs_gamma,converged";
const FLUX_HEADER: &str = "f,omega_r_hz,kerr_hz";

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(contents.as_bytes()).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Render a spectrum grid in the v1 schema.
pub fn spectrum_to_csv(grid: &SpectrumGrid) -> String {
    let (gamma, meta) = grid.raw();
    let n_pow = grid.n_powers();
    let mut out = String::with_capacity(64 * gamma.len() + 64);
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(SPECTRUM_HEADER);
    out.push('\n');
    for (i, &det) in grid.detunings.iter().enumerate() {
        for (j, &pow) in grid.powers.iter().enumerate() {
            let g = gamma[i * n_pow + j];
            let m = meta[i * n_pow + j];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt12(det / TWO_PI),
                fmt12(pow),
                fmt12(g.re),
                fmt12(g.im),
                fmt12(g.norm()),
                u8::from(m.converged)
            );
        }
    }
    out
}

pub fn write_spectrum_csv(grid: &SpectrumGrid, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &spectrum_to_csv(grid))
}

fn check_preamble<'a>(
    path: &Path,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    header: &str,
) -> Result<()> {
    match lines.next() {
        Some((_, l)) if l.trim_end() == MAGIC => {}
        Some((n, l)) => return Err(parse_err(path, n, format!("expected `{MAGIC}`, found `{l}`"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    match lines.next() {
        Some((_, l)) if l.trim_end() == header => Ok(()),
        Some((n, l)) => Err(parse_err(path, n, format!("expected header `{header}`, found `{l}`"))),
        None => Err(parse_err(path, 2, "missing column header")),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("cannot parse `{field}` as a number")))
}

/// Read a spectrum grid written by [`write_spectrum_csv`]. The grid must be
/// rectangular; solver provenance beyond the converged flag is not stored in
/// the file.
pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<SpectrumGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    check_preamble(path, &mut lines, SPECTRUM_HEADER)?;

    let mut detunings: Vec<f64> = Vec::new();
    let mut powers: Vec<f64> = Vec::new();
    let mut rows: Vec<(f64, f64, C64, bool)> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(path, n, format!("expected 6 columns, found {}", fields.len())));
        }
        let det = parse_f64(path, n, fields[0])? * TWO_PI;
        let pow = parse_f64(path, n, fields[1])?;
        let re = parse_f64(path, n, fields[2])?;
        let im = parse_f64(path, n, fields[3])?;
        let converged = match fields[5].trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(path, n, format!("converged flag must be 0/1, found `{other}`"))),
        };
        if !detunings.iter().any(|&v| v.to_bits() == det.to_bits()) {
            detunings.push(det);
        }
        if !powers.iter().any(|&v| v.to_bits() == pow.to_bits()) {
            powers.push(pow);
        }
        rows.push((det, pow, C64::new(re, im), converged));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 3, "no data rows"));
    }
    if rows.len() != detunings.len() * powers.len() {
        return Err(parse_err(
            path,
            3,
            format!(
                "grid is not rectangular: {} rows vs {} detunings × {} powers",
                rows.len(),
                detunings.len(),
                powers.len()
            ),
        ));
    }
    let n_pow = powers.len();
    let mut gamma = vec![C64::new(f64::NAN, f64::NAN); rows.len()];
    let mut meta = vec![PointMeta { n_used: 0, converged: false, semiclassical: false }; rows.len()];
    for (det, pow, g, conv) in rows {
        let i = detunings.iter().position(|&v| v.to_bits() == det.to_bits()).unwrap();
        let j = powers.iter().position(|&v| v.to_bits() == pow.to_bits()).unwrap();
        gamma[i * n_pow + j] = g;
        meta[i * n_pow + j] = PointMeta { n_used: 0, converged: conv, semiclassical: false };
    }
    Ok(SpectrumGrid::from_parts(detunings, powers, "imported".into(), gamma, meta))
}

/// Single-power reflection trace from a spectrum CSV. Detunings are turned
/// into absolute frequencies around `omega_ref` (rad/s), which the file
/// format does not store.
pub fn read_trace_csv(path: impl AsRef<Path>, omega_ref: f64) -> Result<ReflectionTrace> {
    let path = path.as_ref();
    let grid = read_spectrum_csv(path)?;
    if grid.n_powers() != 1 {
        return Err(parse_err(
            path,
            3,
            format!("expected a single-power trace, found {} power values", grid.n_powers()),
        ));
    }
    let omega: Vec<f64> = grid.detunings.iter().map(|d| omega_ref + d).collect();
    let gamma: Vec<C64> = (0..grid.n_detunings()).map(|i| grid.gamma(i, 0)).collect();
    ReflectionTrace::new(omega, gamma, grid.powers[0])
}

/// Write a reflection trace as a single-power spectrum CSV with detunings
/// relative to `omega_ref`.
pub fn write_trace_csv(
    trace: &ReflectionTrace,
    omega_ref: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let detunings: Vec<f64> = trace.omega.iter().map(|w| w - omega_ref).collect();
    let meta = vec![
        PointMeta { n_used: 0, converged: true, semiclassical: false };
        trace.gamma.len()
    ];
    let grid = SpectrumGrid::from_parts(
        detunings,
        vec![trace.power_dbm],
        "trace".into(),
        trace.gamma.clone(),
        meta,
    );
    write_spectrum_csv(&grid, path)
}

/// Render a flux curve in the v1 schema.
pub fn flux_to_csv(curve: &FluxCurve) -> String {
    let mut out = String::with_capacity(48 * curve.f.len() + 48);
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(FLUX_HEADER);
    out.push('\n');
    for i in 0..curve.f.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt12(curve.f[i]),
            fmt12(curve.omega_r[i] / TWO_PI),
            fmt12(curve.kerr.get(i).copied().unwrap_or(f64::NAN) / TWO_PI)
        );
    }
    out
}

pub fn write_flux_csv(curve: &FluxCurve, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &flux_to_csv(curve))
}

pub fn read_flux_csv(path: impl AsRef<Path>) -> Result<FluxCurve> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    check_preamble(path, &mut lines, FLUX_HEADER)?;
    let mut curve = FluxCurve::default();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, n, format!("expected 3 columns, found {}", fields.len())));
        }
        curve.f.push(parse_f64(path, n, fields[0])?);
        curve.omega_r.push(parse_f64(path, n, fields[1])? * TWO_PI);
        curve.kerr.push(parse_f64(path, n, fields[2])? * TWO_PI);
    }
    if curve.f.is_empty() {
        return Err(parse_err(path, 3, "no data rows"));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::mhz;
    use crate::spectrum::{linspace, sweep_spectrum, SolverChoice};
    use crate::semiclassical::BranchRule;
    use crate::DeviceParams;

    fn sample_grid() -> SpectrumGrid {
        let d = DeviceParams::from_spectroscopy(11.742, -0.45, 0.85, 1.01).unwrap();
        let det = linspace(mhz(-2.0), mhz(1.0), 7);
        let pow = linspace(-140.0, -130.0, 3);
        sweep_spectrum(&d, &det, &pow, &SolverChoice::Semiclassical(BranchRule::SweepDown)).unwrap()
    }

    #[test]
    fn single_point_grid_is_three_lines() {
        let d = DeviceParams::from_spectroscopy(10.0, 0.0, 0.8, 0.6).unwrap();
        let grid = sweep_spectrum(
            &d,
            &[0.0],
            &[-150.0],
            &SolverChoice::Semiclassical(BranchRule::Low),
        )
        .unwrap();
        let text = spectrum_to_csv(&grid);
        let lines: Vec<&str> = text.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "# kerrspec v1");
        assert_eq!(lines[1], SPECTRUM_HEADER);
        assert_eq!(lines[2].split(',').count(), 6);
    }

    #[test]
    fn spectrum_round_trip_keeps_twelve_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let grid = sample_grid();
        write_spectrum_csv(&grid, &path).unwrap();
        let text1 = std::fs::read_to_string(&path).unwrap();
        let back = read_spectrum_csv(&path).unwrap();
        assert_eq!(back.n_detunings(), grid.n_detunings());
        assert_eq!(back.n_powers(), grid.n_powers());
        for i in 0..grid.n_detunings() {
            for j in 0..grid.n_powers() {
                let a = grid.gamma(i, j);
                let b = back.gamma(i, j);
                // 12 significant digits survive
                assert!((a.re - b.re).abs() <= 1e-11 * a.re.abs().max(1.0));
                assert!((a.im - b.im).abs() <= 1e-11 * a.im.abs().max(1.0));
                assert_eq!(grid.meta(i, j).converged, back.meta(i, j).converged);
            }
        }
        // identical data emits identical bytes; re/im/axes columns are stable
        // under import → export (abs_gamma is recomputed from rounded re/im)
        assert_eq!(text1, spectrum_to_csv(&grid));
        let text2 = spectrum_to_csv(&back);
        for (l1, l2) in text1.lines().zip(text2.lines()) {
            let a: Vec<&str> = l1.split(',').collect();
            let b: Vec<&str> = l2.split(',').collect();
            if a.len() == 6 {
                for k in [0usize, 1, 2, 3, 5] {
                    assert_eq!(a[k], b[k]);
                }
            } else {
                assert_eq!(l1, l2);
            }
        }
    }

    #[test]
    fn flux_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flux.csv");
        let curve = FluxCurve {
            f: vec![0.0, 0.1, 0.2],
            omega_r: vec![mhz(11742e3), mhz(11600e3), mhz(11300e3)],
            kerr: vec![mhz(-0.5), mhz(-0.9), mhz(-1.8)],
        };
        write_flux_csv(&curve, &path).unwrap();
        let back = read_flux_csv(&path).unwrap();
        for i in 0..3 {
            assert!((back.f[i] - curve.f[i]).abs() < 1e-12);
            assert!((back.omega_r[i] - curve.omega_r[i]).abs() < 1e-9 * curve.omega_r[i]);
            assert!((back.kerr[i] - curve.kerr[i]).abs() < 1e-9 * curve.kerr[i].abs());
        }
    }

    #[test]
    fn trace_round_trip_and_multi_power_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let d = DeviceParams::from_spectroscopy(10.015, 0.0, 0.74, 0.72).unwrap();
        let omegas = linspace(d.omega_r - mhz(3.0), d.omega_r + mhz(3.0), 21);
        let gamma: Vec<C64> =
            omegas.iter().map(|&w| crate::params::linear_reflection(&d, w)).collect();
        let trace = ReflectionTrace::new(omegas, gamma, -150.0).unwrap();
        write_trace_csv(&trace, d.omega_r, &path).unwrap();
        let back = read_trace_csv(&path, d.omega_r).unwrap();
        assert_eq!(back.omega.len(), trace.omega.len());
        assert!((back.power_dbm - trace.power_dbm).abs() < 1e-9);
        for (a, b) in trace.gamma.iter().zip(&back.gamma) {
            assert!((a - b).norm() < 1e-10);
        }

        let grid_path = dir.path().join("grid.csv");
        write_spectrum_csv(&sample_grid(), &grid_path).unwrap();
        assert!(matches!(read_trace_csv(&grid_path, d.omega_r), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_files_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "nonsense\n").unwrap();
        match read_spectrum_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "# kerrspec v1\ndetuning_hz,power_dbm,re_gamma,im_gamma,abs_gamma,converged\n1,2,3\n").unwrap();
        match read_spectrum_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt12(11742000000.0), "1.17420000000e10");
        assert_eq!(fmt12(-150.0), "-1.50000000000e2");
        assert_eq!(fmt12(6.31e-16), "6.31000000000e-16");
    }
}

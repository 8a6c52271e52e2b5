use kerrspec::params::mhz;
use kerrspec::semiclassical::BranchRule;
use kerrspec::spectrum::{linspace, sweep_spectrum, SolverChoice};
use kerrspec::*;

fn ridge(grid: &SpectrumGrid) -> Vec<(usize, f64)> {
    let mut cols = Vec::new();
    for j in 0..grid.n_powers() {
        let abs = grid.column_abs(j);
        let dips = fitting::find_dips(&grid.detunings, &abs);
        if let Some(d) = dips.first() {
            cols.push((j, d.position));
        }
    }
    cols
}

fn main() {
    let d = DeviceParams::from_spectroscopy(11.742, -0.45, 0.85, 1.01).unwrap();
    let det = linspace(mhz(-11.0), mhz(1.5), 160);
    let pow = linspace(-138.0, -119.0, 20);
    let grid =
        sweep_spectrum(&d, &det, &pow, &SolverChoice::Semiclassical(BranchRule::SweepDown)).unwrap();
    let data = ridge(&grid);
    println!("data ridge ({} cols):", data.len());
    for (j, pos) in &data {
        let p = grid.powers[*j];
        let lin = 10f64.powf((p + 138.0) / 10.0);
        println!(
            "  P = {:7.2} dBm  dip = {:+.4} MHz  (dip/linear-scale = {:+.5})",
            p,
            pos / mhz(1.0),
            pos / mhz(1.0) / lin
        );
    }

    let ssr = |k_mhz: f64, off: f64| -> f64 {
        let dm = DeviceParams { kerr: mhz(k_mhz), ..d };
        let shifted: Vec<f64> = grid.powers.iter().map(|p| p + off).collect();
        let g2 =
            sweep_spectrum(&dm, &det, &shifted, &SolverChoice::Semiclassical(BranchRule::SweepDown))
                .unwrap();
        let model = ridge(&g2);
        if model.len() != data.len() {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for ((j, pos), (jm, posm)) in data.iter().zip(&model) {
            if j != jm {
                return f64::INFINITY;
            }
            acc += (pos - posm) * (pos - posm);
        }
        acc / mhz(1.0).powi(2)
    };
    for (k, off) in [
        (-0.45, 0.0),
        (-0.50, -0.458),
        (-0.40, 0.5115),
        (-0.47, -0.189),
        (-0.43, 0.198),
    ] {
        println!("ssr(K={k:7.4} MHz, off={off:+.4} dB) = {:.6e}", ssr(k, off));
    }

    let fixed = DeviceParams { kerr: 0.0, ..d };
    let t0 = std::time::Instant::now();
    let fit = fit_kerr_and_power(&grid, &fixed).unwrap();
    println!(
        "fit: K = {:+.4} MHz, off = {:+.4} dB, rms = {:.3e}, converged = {} ({:?})",
        fit.get("kerr").unwrap() / mhz(1.0),
        fit.get("power_offset_db").unwrap(),
        fit.residual_rms,
        fit.converged,
        t0.elapsed()
    );
}

//! Derivative-free minimizers used by the fitting routines.

/// Result of a scalar or simplex minimization.
#[derive(Debug, Clone)]
pub(crate) struct MinResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Brent's method on a bracketed scalar minimum.
pub(crate) fn brent_min<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_iter: usize,
) -> MinResult {
    const GOLD: f64 = 0.381_966_011_250_105;
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let mut x = lo + GOLD * (hi - lo);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for iter in 0..max_iter {
        let m = 0.5 * (lo + hi);
        let tol1 = rel_tol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (hi - lo) {
            return MinResult { x: vec![x], fx, iterations: iter, converged: true };
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // parabolic interpolation through x, v, w
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (lo - x) && p < q * (hi - x) {
                d = p / q;
                let u = x + d;
                if (u - lo) < tol2 || (hi - u) < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { hi - x } else { lo - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d > 0.0 { tol1 } else { -tol1 } };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                hi = x;
            } else {
                lo = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    MinResult { x: vec![x], fx, iterations: max_iter, converged: false }
}

/// Nelder–Mead simplex minimization.
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: &[f64],
    max_iter: usize,
    tol: f64,
) -> MinResult {
    let dim = x0.len();
    assert_eq!(scale.len(), dim);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += scale[i];
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&i, &j| fvals[i].partial_cmp(&fvals[j]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = (fvals[worst] - fvals[best]).abs();
        if spread <= tol * (1.0 + fvals[best].abs()) {
            return MinResult {
                x: simplex[best].clone(),
                fx: fvals[best],
                iterations,
                converged: true,
            };
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; dim];
        for (idx, v) in simplex.iter().enumerate() {
            if idx != worst {
                for k in 0..dim {
                    centroid[k] += v[k] / dim as f64;
                }
            }
        }
        let point = |t: f64| -> Vec<f64> {
            (0..dim).map(|k| centroid[k] + t * (simplex[worst][k] - centroid[k])).collect()
        };
        let reflected = point(-1.0);
        let f_ref = f(&reflected);
        if f_ref < fvals[best] {
            let expanded = point(-2.0);
            let f_exp = f(&expanded);
            if f_exp < f_ref {
                simplex[worst] = expanded;
                fvals[worst] = f_exp;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = f_ref;
            }
        } else if f_ref < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = f_ref;
        } else {
            let contracted = if f_ref < fvals[worst] { point(-0.5) } else { point(0.5) };
            let f_con = f(&contracted);
            if f_con < fvals[worst].min(f_ref) {
                simplex[worst] = contracted;
                fvals[worst] = f_con;
            } else {
                // shrink toward the best vertex
                let anchor = simplex[best].clone();
                for (idx, v) in simplex.iter_mut().enumerate() {
                    if idx != best {
                        for k in 0..dim {
                            v[k] = anchor[k] + 0.5 * (v[k] - anchor[k]);
                        }
                        fvals[idx] = f(v);
                    }
                }
            }
        }
    }
    let (best, &fx) = fvals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    MinResult { x: simplex[best].clone(), fx, iterations, converged: false }
}

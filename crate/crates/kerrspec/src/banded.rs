//! Complex banded LU factorization with partial pivoting.
//!
//! The steady-state moment hierarchy couples (m,n) only to (m±1,n), (m,n±1)
//! and (m+1,n+1), so in row-major moment ordering the system matrix is
//! banded with bandwidths of order n_max. Direct banded factorization makes
//! a single solve O(n·b²) instead of O(n³), which is what keeps dense
//! spectrum sweeps cheap.
//!
//! Storage follows the LAPACK general-band convention: entry (i, j) lives at
//! `data[j·ldab + kl + ku + i - j]` with `ldab = 2·kl + ku + 1`, leaving
//! `kl` extra superdiagonals for pivoting fill.

use crate::{C64, Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, data: vec![C64::new(0.0, 0.0); ldab * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "entry ({i},{j}) outside band");
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    /// Add `v` to entry (i, j). The entry must lie within the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Factor in place. Returns an error only on an exactly singular pivot.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // partial pivot among rows j..=j+km of column j
            let base = j * ldab + kv;
            let mut jp = 0usize;
            let mut best = self.data[base].norm_sqr();
            for k in 1..=km {
                let mag = self.data[base + k].norm_sqr();
                if mag > best {
                    best = mag;
                    jp = k;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::NumericalFailure {
                    msg: format!("singular band matrix: zero pivot at column {j}"),
                    cond: f64::INFINITY,
                });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for col in j..=ju {
                    let a = col * ldab + (kv + j - col);
                    let b = a + jp;
                    self.data.swap(a, b);
                }
            }
            if km > 0 {
                let inv = C64::new(1.0, 0.0) / self.data[base];
                for k in 1..=km {
                    self.data[base + k] *= inv;
                }
                for col in (j + 1)..=ju {
                    let head = col * ldab + (kv + j - col);
                    let t = self.data[head];
                    if t != C64::new(0.0, 0.0) {
                        for k in 1..=km {
                            let l = self.data[base + k];
                            self.data[head + k] -= t * l;
                        }
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ldab, data: self.data, ipiv })
    }
}

/// Factored band matrix: P·L·U with multipliers and U stored in band form.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<C64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        assert_eq!(b.len(), self.n);
        let kv = self.kl + self.ku;
        // L (unit lower triangular, band kl) with row interchanges
        if self.kl > 0 {
            for j in 0..self.n.saturating_sub(1) {
                let lm = self.kl.min(self.n - 1 - j);
                let p = self.ipiv[j];
                if p != j {
                    b.swap(j, p);
                }
                let bj = b[j];
                if bj != C64::new(0.0, 0.0) {
                    let base = j * self.ldab + kv;
                    for k in 1..=lm {
                        let l = self.data[base + k];
                        b[j + k] -= l * bj;
                    }
                }
            }
        }
        // U (upper triangular, band kl+ku)
        for j in (0..self.n).rev() {
            let diag = self.data[j * self.ldab + kv];
            b[j] /= diag;
            let bj = b[j];
            let top = j.saturating_sub(kv);
            for i in top..j {
                let u = self.data[j * self.ldab + (kv + i - j)];
                b[i] -= u * bj;
            }
        }
    }

    /// Crude condition estimate from the spread of |U_jj|.
    pub fn diag_condition(&self) -> f64 {
        let kv = self.kl + self.ku;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for j in 0..self.n {
            let m = self.data[j * self.ldab + kv].norm();
            lo = lo.min(m);
            hi = hi.max(m);
        }
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

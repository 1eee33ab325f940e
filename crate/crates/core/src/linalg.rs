//! Small sparse solvers: a pre-factored tridiagonal system and a banded LU
//! with partial pivoting.

use nalgebra::ComplexField;

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix (no pivoting; used for diagonally
/// dominant diffusion matrices).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    upper: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` multiplies `x[i-1]` in row `i`, `upper[i]` multiplies `x[i+1]`.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut inv_diag = vec![0.0; n];
        let mut up = vec![0.0; n];
        let mut pivot = diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = diag[i] - lower[i] * up[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Singular(i));
            }
            inv_diag[i] = 1.0 / pivot;
            up[i] = upper[i] * inv_diag[i];
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: up,
            inv_diag,
        })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_diag[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_diag[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage keeps `kl` extra super-diagonals free for the fill-in produced by
/// row interchanges, as in LAPACK's `gbtrf`.
#[derive(Debug, Clone)]
pub struct Banded<T: ComplexField<RealField = f64> + Copy> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> Banded<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // columns i - kl ..= i + ku + kl of row i
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku && i < self.n && j < self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            T::zero()
        }
    }

    pub fn add(&mut self, i: usize, j: usize, value: T) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = value;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j])
            })
            .collect()
    }

    /// Conjugate transpose, with bandwidths swapped.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                out.set(j, i, self.get(i, j).conjugate());
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    /// LU with partial pivoting. Fails on an exactly zero pivot.
    pub fn lu(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let ku_fill = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.raw(k, k).modulus();
            for i in k + 1..=last_row {
                let m = self.raw(i, k).modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 {
                return Err(Error::Singular(k));
            }
            let last_col = (k + ku_fill).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.raw(k, j);
                    let b = self.raw(p, j);
                    self.raw_set(k, j, b);
                    self.raw_set(p, j, a);
                }
            }
            let inv = T::one() / self.raw(k, k);
            for i in k + 1..=last_row {
                let l = self.raw(i, k) * inv;
                self.raw_set(i, k, l);
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let v = self.raw(i, j) - l * self.raw(k, j);
                    self.raw_set(i, j, v);
                }
            }
        }
        Ok(BandedLu { m: self, piv })
    }

    // Access inside the widened band (including fill-in slots).
    #[inline]
    fn raw(&self, i: usize, j: usize) -> T {
        if j + self.kl < i || j > i + self.ku + self.kl {
            T::zero()
        } else {
            self.data[self.slot(i, j)]
        }
    }

    #[inline]
    fn raw_set(&mut self, i: usize, j: usize, v: T) {
        if j + self.kl < i || j > i + self.ku + self.kl {
            debug_assert!(v == T::zero());
            return;
        }
        let s = self.slot(i, j);
        self.data[s] = v;
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<T: ComplexField<RealField = f64> + Copy> {
    m: Banded<T>,
    piv: Vec<usize>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandedLu<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let ku_fill = self.m.ku + kl;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let last_row = (k + kl).min(n - 1);
            for i in k + 1..=last_row {
                let l = self.m.raw(i, k);
                let bk = b[k];
                b[i] -= l * bk;
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + ku_fill).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=last_col {
                s -= self.m.raw(k, j) * b[j];
            }
            b[k] = s / self.m.raw(k, k);
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

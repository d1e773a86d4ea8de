//! Forward-mode second-order automatic differentiation.
//!
//! Built-in geometries are written once as functions of the chart point over a
//! generic [`Scalar`]. Evaluated over `f64` they give plain values (used by the
//! finite-difference adapter and the consistency checks); evaluated over
//! [`Jet2`] they give values together with exact first and second partial
//! derivatives.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Largest chart dimension supported by the fixed-size jets.
pub const MAX_DIM: usize = 6;

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }
    fn one() -> Self {
        Self::constant(1.0)
    }
    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// A value with its gradient and Hessian with respect to up to [`MAX_DIM`]
/// independent variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d: [f64; MAX_DIM],
    pub h: [[f64; MAX_DIM]; MAX_DIM],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Jet2 {
            v,
            d: [0.0; MAX_DIM],
            h: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    /// The coordinate function `x_index` evaluated at `value`.
    pub fn variable(index: usize, value: f64) -> Self {
        let mut j = Jet2::constant(value);
        j.d[index] = 1.0;
        j
    }

    /// Chain rule for a scalar function with value `f0`, first derivative
    /// `f1` and second derivative `f2` at `self.v`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Jet2::constant(f0);
        for a in 0..MAX_DIM {
            out.d[a] = f1 * self.d[a];
            for b in 0..MAX_DIM {
                out.h[a][b] = f1 * self.h[a][b] + f2 * self.d[a] * self.d[b];
            }
        }
        out
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: Jet2) -> Jet2 {
        self += rhs;
        self
    }
}

impl AddAssign for Jet2 {
    fn add_assign(&mut self, rhs: Jet2) {
        self.v += rhs.v;
        for a in 0..MAX_DIM {
            self.d[a] += rhs.d[a];
            for b in 0..MAX_DIM {
                self.h[a][b] += rhs.h[a][b];
            }
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(mut self) -> Jet2 {
        self.v = -self.v;
        for a in 0..MAX_DIM {
            self.d[a] = -self.d[a];
            for b in 0..MAX_DIM {
                self.h[a][b] = -self.h[a][b];
            }
        }
        self
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        let mut out = Jet2::constant(self.v * rhs.v);
        for a in 0..MAX_DIM {
            out.d[a] = self.v * rhs.d[a] + rhs.v * self.d[a];
            for b in 0..MAX_DIM {
                out.h[a][b] = self.v * rhs.h[a][b]
                    + rhs.v * self.h[a][b]
                    + self.d[a] * rhs.d[b]
                    + rhs.d[a] * self.d[b];
            }
        }
        out
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet2) -> Jet2 {
        self * rhs.recip()
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64) -> Self {
        Jet2::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn scale(self, c: f64) -> Self {
        let mut out = self;
        out.v *= c;
        for a in 0..MAX_DIM {
            out.d[a] *= c;
            for b in 0..MAX_DIM {
                out.h[a][b] *= c;
            }
        }
        out
    }
}

/// A value with its gradient only. Used to carry first derivatives of
/// quantities built from a 2-jet (for instance `∂Γ` from `∂∂g`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet1 {
    pub v: f64,
    pub d: [f64; MAX_DIM],
}

impl Jet1 {
    pub fn new(v: f64, d: [f64; MAX_DIM]) -> Self {
        Jet1 { v, d }
    }

    pub fn constant(v: f64) -> Self {
        Jet1 {
            v,
            d: [0.0; MAX_DIM],
        }
    }

    /// Value `v` with derivatives `d(m)` for `m < n`.
    pub fn from_fn(v: f64, n: usize, mut d: impl FnMut(usize) -> f64) -> Self {
        let mut j = Jet1::constant(v);
        for m in 0..n {
            j.d[m] = d(m);
        }
        j
    }

    fn chain(self, f0: f64, f1: f64) -> Self {
        let mut out = Jet1::constant(f0);
        for a in 0..MAX_DIM {
            out.d[a] = f1 * self.d[a];
        }
        out
    }
}

impl Add for Jet1 {
    type Output = Jet1;
    fn add(mut self, rhs: Jet1) -> Jet1 {
        self += rhs;
        self
    }
}

impl AddAssign for Jet1 {
    fn add_assign(&mut self, rhs: Jet1) {
        self.v += rhs.v;
        for a in 0..MAX_DIM {
            self.d[a] += rhs.d[a];
        }
    }
}

impl Sub for Jet1 {
    type Output = Jet1;
    fn sub(mut self, rhs: Jet1) -> Jet1 {
        self.v -= rhs.v;
        for a in 0..MAX_DIM {
            self.d[a] -= rhs.d[a];
        }
        self
    }
}

impl Neg for Jet1 {
    type Output = Jet1;
    fn neg(mut self) -> Jet1 {
        self.v = -self.v;
        for a in 0..MAX_DIM {
            self.d[a] = -self.d[a];
        }
        self
    }
}

impl Mul for Jet1 {
    type Output = Jet1;
    fn mul(self, rhs: Jet1) -> Jet1 {
        let mut out = Jet1::constant(self.v * rhs.v);
        for a in 0..MAX_DIM {
            out.d[a] = self.v * rhs.d[a] + rhs.v * self.d[a];
        }
        out
    }
}

impl Div for Jet1 {
    type Output = Jet1;
    fn div(self, rhs: Jet1) -> Jet1 {
        let inv = 1.0 / rhs.v;
        self * rhs.chain(inv, -inv * inv)
    }
}

impl Scalar for Jet1 {
    fn constant(c: f64) -> Self {
        Jet1::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s)
    }
    fn scale(self, c: f64) -> Self {
        let mut out = self;
        out.v *= c;
        for a in 0..MAX_DIM {
            out.d[a] *= c;
        }
        out
    }
}

/// Row-major square matrices over a generic scalar.
pub mod mat {
    use super::Scalar;

    pub fn identity<S: Scalar>(n: usize) -> Vec<S> {
        let mut m = vec![S::zero(); n * n];
        for i in 0..n {
            m[i * n + i] = S::one();
        }
        m
    }

    pub fn from_f64<S: Scalar>(m: &[f64]) -> Vec<S> {
        m.iter().map(|&x| S::constant(x)).collect()
    }

    pub fn mul<S: Scalar>(n: usize, a: &[S], b: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = a[i * n + k];
                for j in 0..n {
                    out[i * n + j] += aik * b[k * n + j];
                }
            }
        }
        out
    }

    pub fn transpose<S: Scalar>(n: usize, a: &[S]) -> Vec<S> {
        let mut out = a.to_vec();
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = a[i * n + j];
            }
        }
        out
    }

    /// Gauss-Jordan inverse with partial pivoting on the values. Returns
    /// `None` when the value matrix is numerically singular.
    pub fn inverse<S: Scalar>(n: usize, a: &[S]) -> Option<Vec<S>> {
        let mut m = a.to_vec();
        let mut inv = identity::<S>(n);
        for col in 0..n {
            let pivot = (col..n).max_by(|&r, &s| {
                m[r * n + col]
                    .value()
                    .abs()
                    .total_cmp(&m[s * n + col].value().abs())
            })?;
            if m[pivot * n + col].value().abs() < 1e-300 {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    m.swap(pivot * n + j, col * n + j);
                    inv.swap(pivot * n + j, col * n + j);
                }
            }
            let p = m[col * n + col];
            for j in 0..n {
                m[col * n + j] = m[col * n + j] / p;
                inv[col * n + j] = inv[col * n + j] / p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = m[r * n + col];
                for j in 0..n {
                    m[r * n + j] = m[r * n + j] - f * m[col * n + j];
                    inv[r * n + j] = inv[r * n + j] - f * inv[col * n + j];
                }
            }
        }
        Some(inv)
    }
}

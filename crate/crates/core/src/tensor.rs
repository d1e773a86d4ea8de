//! Pointwise multilinear algebra at a single chart point.
//!
//! Tensors are dense row-major arrays of coordinate components. A mixed
//! rank-2 tensor such as `J` is stored with its contravariant slot first, so
//! `J.get(&[a, b])` is `J^a_b`, the `a`-th component of `J e_b`.
//!
//! Complex traces always mean `Σ_i T(.., e_i, .., J e_i, ..)` over a
//! `g`-orthonormal frame; in coordinates this is `T_{..a..b..} J^b_c g^{ca}`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::{Error, Result};

/// Denominator guard for relative residuals of (possibly zero) tensors.
pub const ZERO_GUARD: f64 = 1e-300;

/// Property-flag tolerance for exact (analytic) jets.
pub const TOL_ANALYTIC: f64 = 1e-9;
/// Property-flag tolerance for finite-difference jets.
pub const TOL_FD: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variance {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tensor {
    dim: usize,
    variance: Vec<Variance>,
    data: Vec<f64>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 || dim % 2 != 0 {
        return Err(Error::OddDimension(dim));
    }
    Ok(())
}

impl Tensor {
    pub fn new(dim: usize, variance: Vec<Variance>, data: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let expected = dim.pow(variance.len() as u32);
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} entries for rank {} in dim {dim}, got {}",
                variance.len(),
                data.len()
            )));
        }
        Ok(Tensor {
            dim,
            variance,
            data,
        })
    }

    /// Fully covariant tensor from row-major data. Panics on a length mismatch.
    pub fn covariant(dim: usize, rank: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim.pow(rank as u32), "covariant: bad length");
        Tensor {
            dim,
            variance: vec![Variance::Down; rank],
            data,
        }
    }

    pub fn zeros(dim: usize, variance: Vec<Variance>) -> Self {
        let len = dim.pow(variance.len() as u32);
        Tensor {
            dim,
            variance,
            data: vec![0.0; len],
        }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Tensor {
            dim,
            variance: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(
        dim: usize,
        variance: Vec<Variance>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Self {
        let rank = variance.len();
        let len = dim.pow(rank as u32);
        let mut idx = vec![0usize; rank];
        let mut data = Vec::with_capacity(len);
        for flat in 0..len {
            unflatten(flat, dim, &mut idx);
            data.push(f(&idx));
        }
        Tensor {
            dim,
            variance,
            data,
        }
    }

    /// Rank-2 tensor from a square matrix, `m[(a, b)]` becoming entry `[a, b]`.
    pub fn from_matrix(m: &DMatrix<f64>, variance: [Variance; 2]) -> Self {
        let n = m.nrows();
        Tensor::from_fn(n, variance.to_vec(), |i| m[(i[0], i[1])])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank(), 2, "to_matrix needs a rank-2 tensor");
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn rank(&self) -> usize {
        self.variance.len()
    }
    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Frobenius norm of the coordinate components.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        assert_eq!(self.data.len(), other.data.len(), "rank mismatch");
        Tensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a - b)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a + c * b)
    }

    /// Swap of the two slots of a rank-2 tensor.
    pub fn transpose(&self) -> Tensor {
        assert_eq!(self.rank(), 2, "transpose needs a rank-2 tensor");
        let n = self.dim;
        let mut v = self.variance.clone();
        v.swap(0, 1);
        Tensor::from_fn(n, v, |i| self.data[i[1] * n + i[0]])
    }

    /// `‖self − other‖ / max(‖other‖, guard)`.
    pub fn rel_diff(&self, other: &Tensor) -> f64 {
        self.sub(other).norm() / other.norm().max(ZERO_GUARD)
    }
}

fn unflatten(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in (0..idx.len()).rev() {
        idx[slot] = flat % dim;
        flat /= dim;
    }
}

/// Contract slot `slot` of a row-major rank-`rank` array with a matrix:
/// `out[.., i, ..] = Σ_a data[.., a, ..] m[a * n + i]`.
///
/// With `m = J` (stored `J^p_x` at `[p, x]`) this evaluates the slot on `J X`;
/// with `m` a frame matrix it changes basis in that slot.
pub fn contract_slot(data: &[f64], n: usize, rank: usize, slot: usize, m: &[f64]) -> Vec<f64> {
    debug_assert!(slot < rank);
    let inner = n.pow((rank - slot - 1) as u32);
    let outer = n.pow(slot as u32);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for i in 0..n {
            for a in 0..n {
                let w = m[a * n + i];
                if w == 0.0 {
                    continue;
                }
                let src = (o * n + a) * inner;
                let dst = (o * n + i) * inner;
                for r in 0..inner {
                    out[dst + r] += w * data[src + r];
                }
            }
        }
    }
    out
}

/// Contract every slot with the same matrix.
pub fn contract_all(data: &[f64], n: usize, rank: usize, m: &[f64]) -> Vec<f64> {
    let mut cur = data.to_vec();
    for s in 0..rank {
        cur = contract_slot(&cur, n, rank, s, m);
    }
    cur
}

pub fn mat_data(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn require_metric(g: &Tensor) -> Result<DMatrix<f64>> {
    if g.rank() != 2 || g.variance() != [Variance::Down, Variance::Down] {
        return Err(Error::Shape("metric must be a covariant rank-2 tensor".into()));
    }
    let m = g.to_matrix();
    let asym = (&m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(1.0) {
        return Err(Error::NotSpd("metric is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotSpd(format!("smallest eigenvalue {min:e}")));
    }
    Ok(m)
}

fn inverse_metric(g: &DMatrix<f64>) -> DMatrix<f64> {
    g.clone()
        .cholesky()
        .expect("metric checked positive definite")
        .inverse()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Raise or lower one slot with `g` / `g⁻¹`.
pub fn raise_lower(t: &Tensor, g: &Tensor, slot: usize, direction: Direction) -> Result<Tensor> {
    if slot >= t.rank() {
        return Err(Error::SlotOutOfRange {
            slot,
            rank: t.rank(),
        });
    }
    let gm = require_metric(g)?;
    let (m, var) = match (direction, t.variance()[slot]) {
        (Direction::Up, Variance::Down) => (inverse_metric(&gm), Variance::Up),
        (Direction::Down, Variance::Up) => (gm, Variance::Down),
        (_, v) => {
            return Err(Error::Shape(format!(
                "slot {slot} is already {v:?}; cannot move it {direction:?}"
            )))
        }
    };
    let data = contract_slot(t.data(), t.dim(), t.rank(), slot, &mat_data(&m));
    let mut variance = t.variance().to_vec();
    variance[slot] = var;
    Tensor::new(t.dim(), variance, data)
}

fn lowered(t: &Tensor, g: &Tensor) -> Result<Tensor> {
    let mut cur = t.clone();
    for slot in 0..t.rank() {
        if cur.variance()[slot] == Variance::Up {
            cur = raise_lower(&cur, g, slot, Direction::Down)?;
        }
    }
    Ok(cur)
}

/// Contract slots `a` and `b` of a row-major array with the bilinear weight
/// `w[p * n + q]`: `out = Σ T(.., p, .., q, ..) w[p, q]`, remaining slots in order.
pub fn contract_pair(data: &[f64], n: usize, rank: usize, a: usize, b: usize, w: &[f64]) -> Vec<f64> {
    let keep: Vec<usize> = (0..rank).filter(|&s| s != a && s != b).collect();
    let mut strides = vec![1usize; rank];
    for s in (0..rank.saturating_sub(1)).rev() {
        strides[s] = strides[s + 1] * n;
    }
    let out_len = n.pow(keep.len() as u32);
    let mut out = vec![0.0; out_len];
    let mut idx = vec![0usize; keep.len()];
    for (o, slot) in out.iter_mut().enumerate() {
        unflatten(o, n, &mut idx);
        let base: usize = keep.iter().zip(&idx).map(|(&s, &i)| strides[s] * i).sum();
        let mut acc = 0.0;
        for p in 0..n {
            for q in 0..n {
                let wpq = w[p * n + q];
                if wpq != 0.0 {
                    acc += data[base + p * strides[a] + q * strides[b]] * wpq;
                }
            }
        }
        *slot = acc;
    }
    out
}

fn pair_contract(t: &Tensor, a: usize, b: usize, w: &DMatrix<f64>) -> Tensor {
    let keep: Vec<Variance> = (0..t.rank())
        .filter(|&s| s != a && s != b)
        .map(|s| t.variance()[s])
        .collect();
    let data = contract_pair(t.data(), t.dim(), t.rank(), a, b, &mat_data(w));
    Tensor {
        dim: t.dim(),
        variance: keep,
        data,
    }
}

/// Euclidean norm of a component array.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖residual‖ / max(scale, guard)`.
pub fn rel_residual(residual: &[f64], scale: f64) -> f64 {
    norm(residual) / scale.max(ZERO_GUARD)
}

fn check_pair(t: &Tensor, a: usize, b: usize) -> Result<()> {
    if t.rank() < 2 {
        return Err(Error::Shape("trace needs rank ≥ 2".into()));
    }
    if a == b {
        return Err(Error::IdenticalSlots(a));
    }
    for s in [a, b] {
        if s >= t.rank() {
            return Err(Error::SlotOutOfRange {
                slot: s,
                rank: t.rank(),
            });
        }
    }
    Ok(())
}

/// Real trace `Σ_i T(.., e_i, .., e_i, ..)` over a `g`-orthonormal frame.
pub fn trace(t: &Tensor, g: &Tensor, slot_a: usize, slot_b: usize) -> Result<Tensor> {
    check_pair(t, slot_a, slot_b)?;
    let gm = require_metric(g)?;
    let t = lowered(t, g)?;
    Ok(pair_contract(&t, slot_a, slot_b, &inverse_metric(&gm)))
}

/// Complex trace `Σ_i T(.., e_i, .., J e_i, ..)` over a `g`-orthonormal frame.
pub fn complex_trace(
    t: &Tensor,
    g: &Tensor,
    j: &Tensor,
    slot_a: usize,
    slot_b: usize,
) -> Result<Tensor> {
    check_pair(t, slot_a, slot_b)?;
    let gm = require_metric(g)?;
    let t = lowered(t, g)?;
    let jm = j.to_matrix();
    // w[p, q] = Σ_c g^{cp} J^q_c
    let w = inverse_metric(&gm) * jm.transpose();
    Ok(pair_contract(&t, slot_a, slot_b, &w))
}

fn require_cov2(t: &Tensor) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::Shape(format!("expected rank 2, got {}", t.rank())));
    }
    Ok(())
}

/// `J^*T(X, Y) = T(JX, JY)`.
pub fn j_action(t: &Tensor, j: &Tensor) -> Tensor {
    let jm = j.to_matrix();
    let tm = t.to_matrix();
    Tensor::from_matrix(&(jm.transpose() * tm * jm), [Variance::Down, Variance::Down])
}

/// Composition `(TJ)(X, Y) = T(JX, Y)`.
pub fn compose_j(t: &Tensor, j: &Tensor) -> Tensor {
    let jm = j.to_matrix();
    Tensor::from_matrix(&(jm.transpose() * t.to_matrix()), [Variance::Down, Variance::Down])
}

/// `(T^{(1,1)}, T^{(0,2)+(2,0)})`.
pub fn split_j(t: &Tensor, j: &Tensor) -> Result<(Tensor, Tensor)> {
    require_cov2(t)?;
    let jt = j_action(t, j);
    Ok((t.add(&jt).scaled(0.5), t.sub(&jt).scaled(0.5)))
}

/// `(T^{sym}, T^{skew})`.
pub fn split_sym(t: &Tensor) -> Result<(Tensor, Tensor)> {
    require_cov2(t)?;
    let tt = t.transpose();
    Ok((t.add(&tt).scaled(0.5), t.sub(&tt).scaled(0.5)))
}

pub fn part11(t: &Tensor, j: &Tensor) -> Tensor {
    split_j(t, j).expect("rank-2").0
}
pub fn part0220(t: &Tensor, j: &Tensor) -> Tensor {
    split_j(t, j).expect("rank-2").1
}
pub fn sym(t: &Tensor) -> Tensor {
    split_sym(t).expect("rank-2").0
}
pub fn skew(t: &Tensor) -> Tensor {
    split_sym(t).expect("rank-2").1
}

/// Gram–Schmidt (in the `g` inner product) on the coordinate basis, in index
/// order. Column `i` of the result is the coordinate vector of `F_i`.
pub fn orthonormal_frame(g: &Tensor) -> Result<DMatrix<f64>> {
    let gm = require_metric(g)?;
    Ok(gram_schmidt(&gm))
}

fn gram_schmidt(gm: &DMatrix<f64>) -> DMatrix<f64> {
    let n = gm.nrows();
    let ip = |u: &nalgebra::DVector<f64>, v: &nalgebra::DVector<f64>| (u.transpose() * gm * v)[0];
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = nalgebra::DVector::<f64>::zeros(n);
        v[k] = 1.0;
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for c in &cols {
                let p = ip(c, &v);
                v -= c * p;
            }
        }
        let nv = ip(&v, &v).sqrt();
        cols.push(v / nv);
    }
    DMatrix::from_columns(&cols)
}

/// A `g`-orthonormal frame at a point together with its dual coframe.
#[derive(Clone, Debug)]
pub struct Frame {
    n: usize,
    /// `f[a * n + i]` is the `a`-th coordinate of `F_i`.
    f: Vec<f64>,
    /// `finv[i * n + a]` is the `a`-th component of the dual covector `F^i`.
    finv: Vec<f64>,
}

impl Frame {
    pub fn new(g: &Tensor) -> Result<Self> {
        let fm = orthonormal_frame(g)?;
        Ok(Frame::from_matrix(&fm))
    }

    pub fn from_matrix(fm: &DMatrix<f64>) -> Self {
        let n = fm.nrows();
        let inv = fm.clone().try_inverse().expect("frame is invertible");
        Frame {
            n,
            f: mat_data(fm),
            finv: mat_data(&inv),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.f)
    }

    /// Frame components `T(F_{i1}, .., F_{ik})` of a covariant tensor.
    pub fn to_frame(&self, t: &[f64], rank: usize) -> Vec<f64> {
        contract_all(t, self.n, rank, &self.f)
    }

    /// Coordinate components of a covariant tensor given in frame components.
    pub fn from_frame(&self, t: &[f64], rank: usize) -> Vec<f64> {
        contract_all(t, self.n, rank, &self.finv)
    }

    /// Frame components of a covector.
    pub fn covector_to_frame(&self, xi: &[f64]) -> Vec<f64> {
        self.to_frame(xi, 1)
    }

    /// The matrix of a mixed (1,1) tensor in this frame: `(F⁻¹ M F)`.
    pub fn endo_to_frame(&self, m: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += self.finv[i * n + a] * m[a * n + b] * self.f[b * n + j];
                    }
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    pub fn endo_from_frame(&self, m: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += self.f[a * n + i] * m[i * n + j] * self.finv[j * n + b];
                    }
                }
                out[a * n + b] = acc;
            }
        }
        out
    }
}

/// An almost Hermitian structure at a point: `(g, J, ω)` with
/// `ω(X, Y) = g(JX, Y)`.
#[derive(Clone, Debug)]
pub struct PointStructure {
    pub g: Tensor,
    pub j: Tensor,
    pub omega: Tensor,
}

/// Tolerance for accepting a point structure.
pub const STRUCTURE_TOL: f64 = 1e-9;

impl PointStructure {
    pub fn new(g: Tensor, j: Tensor) -> Result<Self> {
        PointStructure::with_tolerance(g, j, STRUCTURE_TOL)
    }

    pub fn with_tolerance(g: Tensor, j: Tensor, tol: f64) -> Result<Self> {
        require_metric(&g)?;
        if j.rank() != 2 || j.variance() != [Variance::Up, Variance::Down] || j.dim() != g.dim() {
            return Err(Error::Shape("J must be a mixed rank-2 tensor".into()));
        }
        let s = PointStructure::unchecked(g, j);
        let r2 = s.j_squared_residual();
        if r2 > tol {
            return Err(Error::NotAlmostComplex(r2));
        }
        let rc = s.compatibility_residual();
        if rc > tol {
            return Err(Error::NotCompatible(rc));
        }
        Ok(s)
    }

    /// Build without validation (used internally on already-checked data).
    pub fn unchecked(g: Tensor, j: Tensor) -> Self {
        let omega = compose_j(&g, &j);
        PointStructure { g, j, omega }
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// Max entry of `J∘J + I`.
    pub fn j_squared_residual(&self) -> f64 {
        let jm = self.j.to_matrix();
        let n = jm.nrows();
        (&jm * &jm + DMatrix::identity(n, n)).amax()
    }

    /// `‖J^*g − g‖ / ‖g‖`.
    pub fn compatibility_residual(&self) -> f64 {
        j_action(&self.g, &self.j).rel_diff(&self.g)
    }

    pub fn frame(&self) -> Frame {
        Frame::new(&self.g).expect("metric validated")
    }

    pub fn g_inverse(&self) -> DMatrix<f64> {
        inverse_metric(&self.g.to_matrix())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PropertyFlags {
    pub symmetric: bool,
    pub skew: bool,
    pub type11: bool,
    pub type0220: bool,
    /// Relative residuals for (symmetric, skew, (1,1), (0,2)+(2,0)).
    pub residuals: [f64; 4],
}

/// Relative residuals `‖T − T^{sym}‖/‖T‖` etc. thresholded at `tol`.
pub fn classify_2tensor(t: &Tensor, j: &Tensor, tol: f64) -> PropertyFlags {
    let (s, k) = split_sym(t).expect("rank-2");
    let (p11, p02) = split_j(t, j).expect("rank-2");
    let denom = t.norm().max(ZERO_GUARD);
    let residuals = [
        k.norm() / denom,
        s.norm() / denom,
        p02.norm() / denom,
        p11.norm() / denom,
    ];
    PropertyFlags {
        symmetric: residuals[0] < tol,
        skew: residuals[1] < tol,
        type11: residuals[2] < tol,
        type0220: residuals[3] < tol,
        residuals,
    }
}

/// Eigenvalues of the symmetric form `T` relative to `g` (the generalized
/// problem `T v = λ g v`), ascending.
pub fn g_eigenvalues(t: &Tensor, g: &Tensor) -> Result<Vec<f64>> {
    let gm = require_metric(g)?;
    let l = gm.cholesky().expect("checked").l();
    let linv = l.clone().try_inverse().expect("cholesky factor invertible");
    let tm = t.to_matrix();
    let tm = (&tm + tm.transpose()) * 0.5;
    let c = &linv * tm * linv.transpose();
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::random_point_structure;
    use proptest::prelude::*;

    fn rand_cov2(n: usize, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(n, vec![Variance::Down; 2], |_| rng.gen_range(-1.0..1.0))
    }

    fn rand_rank(n: usize, rank: usize, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(n, vec![Variance::Down; rank], |_| rng.gen_range(-1.0..1.0))
    }

    fn eye(n: usize) -> Tensor {
        Tensor::from_fn(n, vec![Variance::Down; 2], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    fn std_j(n: usize) -> Tensor {
        Tensor::from_fn(n, vec![Variance::Up, Variance::Down], |i| {
            let (a, b) = (i[0], i[1]);
            if b % 2 == 0 && a == b + 1 {
                1.0
            } else if b % 2 == 1 && a + 1 == b {
                -1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn new_rejects_bad_shapes() {
        assert!(matches!(
            Tensor::new(3, vec![Variance::Down], vec![0.0; 3]),
            Err(Error::OddDimension(3))
        ));
        assert!(matches!(
            Tensor::new(4, vec![Variance::Down; 2], vec![0.0; 15]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn raise_then_lower_restores() {
        let ps = random_point_structure(3, 4);
        let t = rand_rank(4, 3, 11);
        let up = raise_lower(&t, &ps.g, 1, Direction::Up).unwrap();
        assert_eq!(up.variance()[1], Variance::Up);
        let back = raise_lower(&up, &ps.g, 1, Direction::Down).unwrap();
        assert!(back.rel_diff(&t) < 1e-13);
    }

    #[test]
    fn raise_lower_errors() {
        let ps = random_point_structure(3, 4);
        let t = rand_rank(4, 2, 1);
        assert!(matches!(
            raise_lower(&t, &ps.g, 2, Direction::Up),
            Err(Error::SlotOutOfRange { .. })
        ));
        let bad = Tensor::from_fn(4, vec![Variance::Down; 2], |i| {
            if i[0] == i[1] {
                if i[0] == 0 {
                    -1.0
                } else {
                    1.0
                }
            } else {
                0.0
            }
        });
        assert!(matches!(
            raise_lower(&t, &bad, 0, Direction::Up),
            Err(Error::NotSpd(_))
        ));
    }

    #[test]
    fn lowering_j_gives_omega() {
        let ps = random_point_structure(5, 4);
        let lowered = raise_lower(&ps.j, &ps.g, 0, Direction::Down).unwrap();
        // lowered[a, b] = g_{am} J^m_b = g(J e_b, e_a) = ω(e_b, e_a)
        assert!(lowered.transpose().rel_diff(&ps.omega) < 1e-14);
    }

    #[test]
    fn trace_of_metric_is_dimension() {
        for n in [4, 6] {
            let ps = random_point_structure(9, n);
            let t = trace(&ps.g, &ps.g, 0, 1).unwrap();
            assert!((t.data()[0] - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_trace_of_omega_is_dimension() {
        let ps = random_point_structure(2, 6);
        let t = complex_trace(&ps.omega, &ps.g, &ps.j, 0, 1).unwrap();
        assert!((t.data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn trace_errors() {
        let ps = random_point_structure(2, 4);
        assert!(matches!(
            trace(&ps.g, &ps.g, 1, 1),
            Err(Error::IdenticalSlots(1))
        ));
        let v = Tensor::zeros(4, vec![Variance::Down]);
        assert!(matches!(trace(&v, &ps.g, 0, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn vanishing_traces() {
        for seed in 0..10 {
            let ps = random_point_structure(seed, 4);
            let t = rand_cov2(4, seed + 100);
            let (s, k) = split_sym(&t).unwrap();
            let (_, p02) = split_j(&t, &ps.j).unwrap();
            let tr = |x: &Tensor| trace(x, &ps.g, 0, 1).unwrap().data()[0];
            let ct = |x: &Tensor| complex_trace(x, &ps.g, &ps.j, 0, 1).unwrap().data()[0];
            assert!(tr(&k).abs() < 1e-12);
            assert!(ct(&s).abs() < 1e-12);
            assert!(tr(&p02).abs() < 1e-12);
            assert!(ct(&p02).abs() < 1e-12);
        }
    }

    #[test]
    fn traces_are_frame_independent() {
        let ps = random_point_structure(21, 4);
        let t = rand_rank(4, 3, 5);
        let f1 = Frame::new(&ps.g).unwrap();
        // a second orthonormal frame: rotate the first one
        let q = nalgebra::DMatrix::<f64>::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0)
            .qr()
            .q();
        let f2 = Frame::from_matrix(&(f1.matrix() * q));
        let tr0 = trace(&t, &ps.g, 0, 2).unwrap();
        let ct0 = complex_trace(&t, &ps.g, &ps.j, 0, 2).unwrap();
        for f in [&f1, &f2] {
            let tf = f.to_frame(t.data(), 3);
            let jf = f.endo_to_frame(ps.j.data());
            let n = 4;
            for x in 0..n {
                let mut tr = 0.0;
                let mut ct = 0.0;
                for i in 0..n {
                    tr += tf[(i * n + x) * n + i];
                    for k in 0..n {
                        ct += tf[(i * n + x) * n + k] * jf[k * n + i];
                    }
                }
                let covec_tr: Vec<f64> = f.to_frame(tr0.data(), 1);
                let covec_ct: Vec<f64> = f.to_frame(ct0.data(), 1);
                assert!((tr - covec_tr[x]).abs() < 1e-12);
                assert!((ct - covec_ct[x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_of_metric() {
        let ps = random_point_structure(4, 4);
        let (a, b) = split_j(&ps.g, &ps.j).unwrap();
        assert!(a.rel_diff(&ps.g) < 1e-13);
        assert!(b.norm() < 1e-13 * ps.g.norm());
        let (s, k) = split_sym(&ps.omega).unwrap();
        assert!(s.norm() < 1e-14 * ps.omega.norm());
        assert!(k.rel_diff(&ps.omega) < 1e-15);
    }

    #[test]
    fn split_rejects_wrong_rank() {
        let ps = random_point_structure(4, 4);
        let t = rand_rank(4, 3, 1);
        assert!(split_j(&t, &ps.j).is_err());
        assert!(split_sym(&t).is_err());
    }

    #[test]
    fn frame_examples() {
        let f = orthonormal_frame(&eye(4)).unwrap();
        assert!((f - DMatrix::identity(4, 4)).amax() < 1e-15);
        let mut g = eye(4);
        g.set(&[0, 0], 4.0);
        let f = orthonormal_frame(&g).unwrap();
        assert!((f[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((f.clone().remove_column(0) - DMatrix::identity(4, 4).remove_column(0)).amax() < 1e-15);
    }

    #[test]
    fn classify_metric_and_omega() {
        let ps = random_point_structure(8, 6);
        let fg = classify_2tensor(&ps.g, &ps.j, TOL_ANALYTIC);
        assert!(fg.symmetric && fg.type11 && !fg.skew && !fg.type0220);
        let fo = classify_2tensor(&ps.omega, &ps.j, TOL_ANALYTIC);
        assert!(fo.skew && fo.type11);
        let z = Tensor::zeros(6, vec![Variance::Down; 2]);
        let fz = classify_2tensor(&z, &ps.j, TOL_ANALYTIC);
        assert!(fz.symmetric && fz.skew && fz.type11 && fz.type0220);
    }

    #[test]
    fn generalized_eigenvalues_of_scaled_metric() {
        let ps = random_point_structure(1, 4);
        let ev = g_eigenvalues(&ps.g.scaled(3.0), &ps.g).unwrap();
        for e in ev {
            assert!((e - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_j_is_a_complex_structure() {
        let ps = PointStructure::new(eye(6), std_j(6)).unwrap();
        assert!(ps.j_squared_residual() == 0.0);
    }

    proptest! {
        #[test]
        fn splits_resum(seed in 0u64..10_000, big in proptest::bool::ANY) {
            let n = if big { 6 } else { 4 };
            let ps = random_point_structure(seed, n);
            let t = rand_cov2(n, seed ^ 0xabcdef);
            let (a, b) = split_j(&t, &ps.j).unwrap();
            prop_assert!(a.add(&b).rel_diff(&t) < 1e-12);
            prop_assert!(j_action(&a, &ps.j).rel_diff(&a) < 1e-12);
            // J-conditioning enters through J² = −I up to rounding
            let jn = ps.j.norm();
            prop_assert!(j_action(&b, &ps.j).add(&b).norm() < 1e-13 * t.norm() * jn.powi(4));
            let (s, k) = split_sym(&t).unwrap();
            prop_assert!(s.add(&k).rel_diff(&t) < 1e-12);
        }

        #[test]
        fn type_iff_commutation(seed in 0u64..10_000) {
            // (1,1) ⟺ TJ = JT and (0,2)+(2,0) ⟺ TJ = −JT, with T raised to an endomorphism
            let ps = random_point_structure(seed, 4);
            let t = rand_cov2(4, seed + 7);
            let (p11, p02) = split_j(&t, &ps.j).unwrap();
            let ginv = ps.g_inverse();
            let jm = ps.j.to_matrix();
            // endomorphism E with T(X, Y) = g(E X, Y): E = g⁻¹ Tᵀ
            let endo = |x: &Tensor| &ginv * x.to_matrix().transpose();
            let e11 = endo(&p11);
            let e02 = endo(&p02);
            let scale = t.norm();
            prop_assert!((&e11 * &jm - &jm * &e11).amax() < 1e-11 * scale);
            prop_assert!((&e02 * &jm + &jm * &e02).amax() < 1e-11 * scale);
        }
    }
}

//! Almost Hermitian structures as 2-jets at chart points.
//!
//! The built-in geometries are written once over a generic [`Scalar`] and
//! evaluated either on plain values or on [`Jet2`] numbers, which yields exact
//! first and second derivatives. [`FdProvider`] turns any value-only provider
//! into a jet provider by central differences.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{mat, Jet2, Scalar, MAX_DIM};
use crate::tensor::{PointStructure, Tensor, Variance, STRUCTURE_TOL};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Generic,
    AlmostKahler,
    Hermitian,
    Kahler,
}

impl Setting {
    /// `dω = 0` is expected.
    pub fn closed(self) -> bool {
        matches!(self, Setting::AlmostKahler | Setting::Kahler)
    }

    /// `N_J = 0` is expected.
    pub fn integrable(self) -> bool {
        matches!(self, Setting::Hermitian | Setting::Kahler)
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::Generic => "generic",
            Setting::AlmostKahler => "almost-kahler",
            Setting::Hermitian => "hermitian",
            Setting::Kahler => "kahler",
        }
    }
}

/// `(g, J)` with first and second partial derivatives at a point `x`.
///
/// Layouts (row-major, derivative slots first):
/// `g[a,b]`, `dg[c,a,b] = ∂_c g_ab`, `ddg[c,d,a,b] = ∂_c ∂_d g_ab`, and the
/// same for `J^a_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureJet {
    pub n: usize,
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub ddg: Vec<f64>,
    pub j: Vec<f64>,
    pub dj: Vec<f64>,
    pub ddj: Vec<f64>,
    pub setting: Setting,
}

impl StructureJet {
    pub fn dim(&self) -> usize {
        self.n
    }

    fn from_jets(x: &[f64], g: &[Jet2], j: &[Jet2], setting: Setting) -> Self {
        let n = x.len();
        let unpack = |src: &[Jet2]| {
            let n2 = n * n;
            let mut v = vec![0.0; n2];
            let mut d = vec![0.0; n * n2];
            let mut h = vec![0.0; n * n * n2];
            for (e, s) in src.iter().enumerate() {
                v[e] = s.v;
                for c in 0..n {
                    d[c * n2 + e] = s.d[c];
                    for dd in 0..n {
                        h[(c * n + dd) * n2 + e] = s.h[c][dd];
                    }
                }
            }
            (v, d, h)
        };
        let (g, dg, ddg) = unpack(g);
        let (j, dj, ddj) = unpack(j);
        StructureJet {
            n,
            x: x.to_vec(),
            g,
            dg,
            ddg,
            j,
            dj,
            ddj,
            setting,
        }
    }

    pub fn g_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 2, self.g.clone())
    }

    pub fn j_tensor(&self) -> Tensor {
        Tensor::new(self.n, vec![Variance::Up, Variance::Down], self.j.clone())
            .expect("jet shape")
    }

    pub fn point_structure(&self) -> PointStructure {
        PointStructure::unchecked(self.g_tensor(), self.j_tensor())
    }

    /// Check the point-structure invariants and the symmetry of the second
    /// derivative slots.
    pub fn validate(&self, tol: f64) -> Result<PointStructure> {
        let ps = PointStructure::with_tolerance(self.g_tensor(), self.j_tensor(), tol)?;
        let n = self.n;
        let n2 = n * n;
        for arr in [&self.ddg, &self.ddj] {
            let scale = arr.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for c in 0..n {
                for d in 0..c {
                    for e in 0..n2 {
                        let a = arr[(c * n + d) * n2 + e];
                        let b = arr[(d * n + c) * n2 + e];
                        if (a - b).abs() > tol * scale {
                            return Err(Error::Shape(format!(
                                "second derivatives not symmetric in slots ({c},{d})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(ps)
    }

    /// The same jet with `J` replaced by `−J`.
    pub fn negate_j(&self) -> Self {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        StructureJet {
            j: neg(&self.j),
            dj: neg(&self.dj),
            ddj: neg(&self.ddj),
            ..self.clone()
        }
    }

    /// The jet of `φ g` for a positive function given by its 2-jet
    /// `(φ, ∂φ, ∂∂φ)` at the same point. Integrability is kept, closedness
    /// of `ω` in general is not.
    pub fn conformal(&self, phi: f64, dphi: &[f64], ddphi: &[f64]) -> Self {
        let n = self.n;
        let n2 = n * n;
        let mut g = vec![0.0; n2];
        let mut dg = vec![0.0; n * n2];
        let mut ddg = vec![0.0; n * n * n2];
        for e in 0..n2 {
            g[e] = phi * self.g[e];
            for c in 0..n {
                dg[c * n2 + e] = dphi[c] * self.g[e] + phi * self.dg[c * n2 + e];
                for d in 0..n {
                    ddg[(c * n + d) * n2 + e] = ddphi[c * n + d] * self.g[e]
                        + dphi[c] * self.dg[d * n2 + e]
                        + dphi[d] * self.dg[c * n2 + e]
                        + phi * self.ddg[(c * n + d) * n2 + e];
                }
            }
        }
        let setting = match self.setting {
            Setting::Kahler | Setting::Hermitian => Setting::Hermitian,
            _ => Setting::Generic,
        };
        StructureJet {
            g,
            dg,
            ddg,
            setting,
            ..self.clone()
        }
    }

    /// The same jet with `g` replaced by `c g` (constant `c > 0`).
    pub fn scale_metric(&self, c: f64) -> Self {
        let sc = |v: &[f64]| v.iter().map(|x| c * x).collect::<Vec<_>>();
        StructureJet {
            g: sc(&self.g),
            dg: sc(&self.dg),
            ddg: sc(&self.ddg),
            ..self.clone()
        }
    }
}

pub trait StructureProvider: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn setting(&self) -> Setting;
    fn parameters(&self) -> BTreeMap<String, f64>;
    /// `(g, J)` at `x`, row-major.
    fn values_at(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    fn jet_at(&self, x: &[f64]) -> Result<StructureJet>;

    /// Whether jets are exact (as opposed to finite-difference approximations).
    fn exact(&self) -> bool {
        true
    }

    /// Deterministic pseudo-random points inside the chart domain.
    fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..self.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }
}

fn check_point(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::Shape(format!(
            "point has {} coordinates, structure dimension is {n}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutsideDomain("non-finite coordinate".into()));
    }
    Ok(())
}

fn jet_vars(x: &[f64]) -> Vec<Jet2> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| Jet2::variable(i, v))
        .collect()
}

fn check_values(n: usize, g: &[f64], j: &[f64], tol: f64) -> Result<PointStructure> {
    let g = Tensor::covariant(n, 2, g.to_vec());
    let j = Tensor::new(n, vec![Variance::Up, Variance::Down], j.to_vec())?;
    PointStructure::with_tolerance(g, j, tol)
}

/// The block-diagonal complex structure `e_{2k} ↦ e_{2k+1}`, row-major `J^a_b`.
pub fn standard_j(n: usize) -> Vec<f64> {
    let mut j = vec![0.0; n * n];
    for k in 0..n / 2 {
        j[(2 * k + 1) * n + 2 * k] = 1.0;
        j[2 * k * n + 2 * k + 1] = -1.0;
    }
    j
}

/// `½(h + h(J·, J·))` over any scalar.
pub fn compatibilize_raw<S: Scalar>(n: usize, h: &[S], j: &[S]) -> Vec<S> {
    let jt = mat::transpose(n, j);
    let jhj = mat::mul(n, &mat::mul(n, &jt, h), j);
    h.iter()
        .zip(&jhj)
        .map(|(&a, &b)| (a + b).scale(0.5))
        .collect()
}

/// Average a positive definite `h` into a `J`-compatible metric.
pub fn compatibilize(h: &Tensor, j: &Tensor) -> Result<Tensor> {
    let n = h.dim();
    crate::tensor::g_eigenvalues(h, h)?;
    let jm = j.to_matrix();
    let r = (&jm * &jm + nalgebra::DMatrix::identity(n, n)).amax();
    if r > STRUCTURE_TOL {
        return Err(Error::NotAlmostComplex(r));
    }
    Ok(Tensor::covariant(
        n,
        2,
        compatibilize_raw(n, h.data(), j.data()),
    ))
}

/// A deterministic random almost Hermitian structure on `ℝ^dim` at a point.
pub fn random_point_structure(seed: u64, dim: usize) -> PointStructure {
    assert!(dim >= 2 && dim % 2 == 0, "dimension must be even");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dim;
    let j0 = standard_j(n);
    let (a, ainv) = loop {
        let a: Vec<f64> = (0..n * n)
            .map(|e| {
                let d = if e / n == e % n { 1.0 } else { 0.0 };
                d + rng.gen_range(-0.5..0.5)
            })
            .collect();
        if let Some(inv) = mat::inverse(n, &a) {
            let cond = a.iter().map(|v| v.abs()).sum::<f64>() * inv.iter().map(|v| v.abs()).sum::<f64>();
            if cond < 1e4 {
                break (a, inv);
            }
        }
    };
    let j = mat::mul(n, &mat::mul(n, &a, &j0), &ainv);
    let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut h = mat::mul(n, &mat::transpose(n, &b), &b);
    for i in 0..n {
        h[i * n + i] += 0.5;
    }
    let g = compatibilize_raw(n, &h, &j);
    PointStructure::unchecked(
        Tensor::covariant(n, 2, g),
        Tensor::new(n, vec![Variance::Up, Variance::Down], j).expect("shape"),
    )
}

/// Left-invariant models: a global frame field `E(x)` with constant frame
/// metric `G` and frame complex structure `Jf`, so that `g = Θᵀ G Θ` and
/// `J = E Jf Θ` with `Θ = E⁻¹` the coframe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    FlatTorus,
    KodairaThurston,
    HopfSurface,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::FlatTorus => "flat-torus",
            Model::KodairaThurston => "kodaira-thurston",
            Model::HopfSurface => "hopf-surface",
        }
    }

    pub fn setting(self) -> Setting {
        match self {
            Model::FlatTorus => Setting::Kahler,
            Model::KodairaThurston => Setting::AlmostKahler,
            Model::HopfSurface => Setting::Hermitian,
        }
    }

    /// Frame field `E(x)`, row-major: entry `[a, i]` is `E_i^a`.
    pub fn frame<S: Scalar>(self, n: usize, x: &[S]) -> Vec<S> {
        match self {
            Model::FlatTorus => mat::identity(n),
            // E_2 = ∂_y + x ∂_z, dual to dz − x dy
            Model::KodairaThurston => {
                let mut e = mat::identity::<S>(4);
                e[2 * 4 + 1] = x[0];
                e
            }
            // columns q·1, q·i, q·j, q·k
            Model::HopfSurface => {
                let (a, b, c, d) = (x[0], x[1], x[2], x[3]);
                vec![a, -b, -c, -d, b, a, -d, c, c, d, a, -b, d, -c, b, a]
            }
        }
    }

    /// The frame complex structure of the standard model.
    pub fn standard_frame_j(self, n: usize) -> Vec<f64> {
        match self {
            Model::FlatTorus => standard_j(n),
            // E1 ↦ E3, E2 ↦ E4, so ω = e¹³ + e²⁴ is closed
            Model::KodairaThurston => {
                let mut j = vec![0.0; 16];
                j[2 * 4] = 1.0;
                j[2] = -1.0;
                j[3 * 4 + 1] = 1.0;
                j[4 + 3] = -1.0;
                j
            }
            // right multiplication by i
            Model::HopfSurface => {
                let mut j = vec![0.0; 16];
                j[4] = 1.0;
                j[1] = -1.0;
                j[3 * 4 + 2] = -1.0;
                j[2 * 4 + 3] = 1.0;
                j
            }
        }
    }

    pub fn base_point(self, n: usize) -> Vec<f64> {
        let mut p = vec![0.0; n];
        if self == Model::HopfSurface {
            p[0] = 1.0;
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct Homogeneous {
    model: Model,
    n: usize,
    gf: Vec<f64>,
    jf: Vec<f64>,
    params: BTreeMap<String, f64>,
}

impl Homogeneous {
    pub fn new(model: Model, n: usize, gf: Vec<f64>, jf: Vec<f64>) -> Result<Self> {
        Homogeneous::with_tolerance(model, n, gf, jf, STRUCTURE_TOL)
    }

    /// [`Homogeneous::new`] accepting frame data that is almost Hermitian only
    /// up to `tol` (intermediate integrator stages).
    pub fn with_tolerance(model: Model, n: usize, gf: Vec<f64>, jf: Vec<f64>, tol: f64) -> Result<Self> {
        if n % 2 != 0 || n < 2 || n > MAX_DIM {
            return Err(Error::OddDimension(n));
        }
        if model != Model::FlatTorus && n != 4 {
            return Err(Error::InvalidParameter(format!(
                "{} is four-dimensional",
                model.name()
            )));
        }
        if gf.len() != n * n || jf.len() != n * n {
            return Err(Error::Shape("frame matrices have the wrong size".into()));
        }
        check_values(n, &gf, &jf, tol)?;
        Ok(Homogeneous {
            model,
            n,
            gf,
            jf,
            params: BTreeMap::new(),
        })
    }

    pub fn standard(model: Model, n: usize) -> Result<Self> {
        Homogeneous::new(model, n, mat::identity(n), model.standard_frame_j(n))
    }

    pub fn with_parameters(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn model(&self) -> Model {
        self.model
    }
    pub fn frame_metric(&self) -> &[f64] {
        &self.gf
    }
    pub fn frame_j(&self) -> &[f64] {
        &self.jf
    }
    pub fn base_point(&self) -> Vec<f64> {
        self.model.base_point(self.n)
    }
    pub fn frame_at(&self, x: &[f64]) -> Vec<f64> {
        self.model.frame(self.n, x)
    }

    fn domain(&self, x: &[f64]) -> Result<()> {
        check_point(self.n, x)?;
        if self.model == Model::HopfSurface {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 < 1e-16 {
                return Err(Error::OutsideDomain(
                    "the Hopf chart excludes the origin".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn fields<S: Scalar>(&self, x: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let n = self.n;
        let e = self.model.frame(n, x);
        let theta = mat::inverse(n, &e)
            .ok_or_else(|| Error::OutsideDomain("frame degenerates".into()))?;
        let gf = mat::from_f64::<S>(&self.gf);
        let jf = mat::from_f64::<S>(&self.jf);
        let g = mat::mul(n, &mat::mul(n, &mat::transpose(n, &theta), &gf), &theta);
        let j = mat::mul(n, &mat::mul(n, &e, &jf), &theta);
        Ok((g, j))
    }
}

impl StructureProvider for Homogeneous {
    fn name(&self) -> String {
        self.model.name().to_string()
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn setting(&self) -> Setting {
        self.model.setting()
    }
    fn parameters(&self) -> BTreeMap<String, f64> {
        self.params.clone()
    }
    fn values_at(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.domain(x)?;
        self.fields::<f64>(x)
    }
    fn jet_at(&self, x: &[f64]) -> Result<StructureJet> {
        self.domain(x)?;
        let (g, j) = self.fields::<Jet2>(&jet_vars(x))?;
        Ok(StructureJet::from_jets(x, &g, &j, self.setting()))
    }
    fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self.model {
            Model::HopfSurface => (0..count)
                .map(|_| {
                    let v: Vec<f64> = loop {
                        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        let r: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                        if r > 0.1 && r <= 1.0 {
                            break v.iter().map(|a| a / r).collect();
                        }
                    };
                    let radius = rng.gen_range(0.5..2.0);
                    v.iter().map(|a| a * radius).collect()
                })
                .collect(),
            _ => (0..count)
                .map(|_| (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        }
    }
}

/// A generic almost Hermitian structure on the torus: trigonometric
/// perturbations of the flat metric and of the standard complex structure,
/// made compatible by averaging.
#[derive(Clone, Debug)]
pub struct PerturbedTorus {
    n: usize,
    eps: f64,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl PerturbedTorus {
    pub fn new(n: usize, eps: f64) -> Result<Self> {
        if n % 2 != 0 || n < 2 || n > MAX_DIM {
            return Err(Error::OddDimension(n));
        }
        if !eps.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be finite".into()));
        }
        let mut c = vec![0.0; n * n];
        let mut d = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                c[a * n + b] = 0.37 * (a + b) as f64 + 0.11 * (a * b) as f64;
                d[a * n + b] = 0.23 * a as f64 + 0.41 * b as f64 + 0.05;
            }
        }
        let p = PerturbedTorus { n, eps, c, d };
        for x in p.sample_points(64, 0xfeed) {
            p.values_at(&x)?;
        }
        Ok(p)
    }

    pub fn fields<S: Scalar>(&self, x: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let n = self.n;
        let mut h = mat::identity::<S>(n);
        let mut m = mat::identity::<S>(n);
        for a in 0..n {
            for b in 0..n {
                let s = (x[a] + x[b] + S::constant(self.c[a * n + b])).sin();
                h[a * n + b] += s.scale(self.eps);
                let t = (x[a] - x[b].scale(2.0) + S::constant(self.d[a * n + b])).cos();
                m[a * n + b] += t.scale(self.eps);
            }
        }
        let minv = mat::inverse(n, &m)
            .ok_or_else(|| Error::InvalidParameter("perturbation degenerates J".into()))?;
        let j = mat::mul(n, &mat::mul(n, &m, &mat::from_f64(&standard_j(n))), &minv);
        Ok((compatibilize_raw(n, &h, &j), j))
    }
}

impl StructureProvider for PerturbedTorus {
    fn name(&self) -> String {
        "perturbed-torus".into()
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn setting(&self) -> Setting {
        Setting::Generic
    }
    fn parameters(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("dim".into(), self.n as f64), ("epsilon".into(), self.eps)])
    }
    fn values_at(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_point(self.n, x)?;
        let (g, j) = self.fields::<f64>(x)?;
        check_values(self.n, &g, &j, STRUCTURE_TOL)?;
        Ok((g, j))
    }
    fn jet_at(&self, x: &[f64]) -> Result<StructureJet> {
        check_point(self.n, x)?;
        let (g, j) = self.fields::<Jet2>(&jet_vars(x))?;
        let jet = StructureJet::from_jets(x, &g, &j, Setting::Generic);
        check_values(self.n, &jet.g, &jet.j, STRUCTURE_TOL)?;
        Ok(jet)
    }
    fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                (0..self.n)
                    .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                    .collect()
            })
            .collect()
    }
}

/// A non-homogeneous almost Kähler structure on the torus: the flat
/// structure moved by a point-dependent symplectic matrix `A(x)`, the
/// Cayley transform of `J₀S(x)` with `S` symmetric. `g = AᵀA`,
/// `J = A⁻¹J₀A`, and `ω` is the constant standard form.
#[derive(Clone, Debug)]
pub struct SymplecticTorus {
    n: usize,
    eps: f64,
    c: Vec<f64>,
}

impl SymplecticTorus {
    pub fn new(n: usize, eps: f64) -> Result<Self> {
        if n % 2 != 0 || n < 2 || n > MAX_DIM {
            return Err(Error::OddDimension(n));
        }
        if !eps.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be finite".into()));
        }
        let mut c = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let v = 0.29 * (a + 2 * b) as f64 + 0.13 * (a * b) as f64 + 0.07;
                c[a * n + b] = v;
                c[b * n + a] = v;
            }
        }
        let p = SymplecticTorus { n, eps, c };
        for x in p.sample_points(64, 0xbeef) {
            p.values_at(&x)?;
        }
        Ok(p)
    }

    pub fn fields<S: Scalar>(&self, x: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let n = self.n;
        let j0 = mat::from_f64::<S>(&standard_j(n));
        let mut s = vec![S::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                s[a * n + b] = (x[a] + x[b] + S::constant(self.c[a * n + b])).sin().scale(0.5 * self.eps);
            }
        }
        let half = mat::mul(n, &j0, &s);
        let mut plus = mat::identity::<S>(n);
        let mut minus = mat::identity::<S>(n);
        for e in 0..n * n {
            plus[e] += half[e];
            minus[e] += -half[e];
        }
        let minv = mat::inverse(n, &minus)
            .ok_or_else(|| Error::InvalidParameter("symplectic gauge degenerates".into()))?;
        let a = mat::mul(n, &minv, &plus);
        let ainv = mat::inverse(n, &a)
            .ok_or_else(|| Error::InvalidParameter("symplectic gauge degenerates".into()))?;
        let g = mat::mul(n, &mat::transpose(n, &a), &a);
        let j = mat::mul(n, &mat::mul(n, &ainv, &j0), &a);
        Ok((g, j))
    }
}

impl StructureProvider for SymplecticTorus {
    fn name(&self) -> String {
        "symplectic-torus".into()
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn setting(&self) -> Setting {
        Setting::AlmostKahler
    }
    fn parameters(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("dim".into(), self.n as f64), ("epsilon".into(), self.eps)])
    }
    fn values_at(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_point(self.n, x)?;
        let (g, j) = self.fields::<f64>(x)?;
        check_values(self.n, &g, &j, STRUCTURE_TOL)?;
        Ok((g, j))
    }
    fn jet_at(&self, x: &[f64]) -> Result<StructureJet> {
        check_point(self.n, x)?;
        let (g, j) = self.fields::<Jet2>(&jet_vars(x))?;
        let jet = StructureJet::from_jets(x, &g, &j, Setting::AlmostKahler);
        check_values(self.n, &jet.g, &jet.j, STRUCTURE_TOL)?;
        Ok(jet)
    }
    fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                (0..self.n)
                    .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                    .collect()
            })
            .collect()
    }
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "flat-torus",
    "perturbed-torus",
    "symplectic-torus",
    "kodaira-thurston",
    "hopf-surface",
];

fn take_params(
    params: &BTreeMap<String, f64>,
    allowed: &[(&str, f64)],
) -> Result<BTreeMap<String, f64>> {
    for k in params.keys() {
        if !allowed.iter().any(|(a, _)| a == k) {
            return Err(Error::InvalidParameter(format!("unknown parameter `{k}`")));
        }
    }
    Ok(allowed
        .iter()
        .map(|&(k, d)| (k.to_string(), params.get(k).copied().unwrap_or(d)))
        .collect())
}

fn dim_param(p: &BTreeMap<String, f64>) -> Result<usize> {
    let d = p["dim"];
    if d.fract() != 0.0 || !(d == 4.0 || d == 6.0) {
        if d.fract() == 0.0 && d > 0.0 && (d as usize) % 2 == 1 {
            return Err(Error::OddDimension(d as usize));
        }
        return Err(Error::InvalidParameter(format!(
            "dim must be 4 or 6, got {d}"
        )));
    }
    Ok(d as usize)
}

/// Built-in model geometry by name.
///
/// Parameters: `flat-torus` takes `dim`; `perturbed-torus` takes `dim` and
/// `epsilon` (default 0.1); `symplectic-torus` takes `dim` and `epsilon`
/// (default 0.3); `kodaira-thurston` takes `lambda1`, `lambda2`,
/// the frame metric `diag(λ1, λ2, λ1, λ2)`, which stays almost Kähler;
/// `hopf-surface` takes none.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn StructureProvider>> {
    match name {
        "perturbed-torus" => {
            let p = take_params(params, &[("dim", 4.0), ("epsilon", 0.1)])?;
            let n = dim_param(&p)?;
            Ok(Arc::new(PerturbedTorus::new(n, p["epsilon"])?))
        }
        "symplectic-torus" => {
            let p = take_params(params, &[("dim", 4.0), ("epsilon", 0.3)])?;
            let n = dim_param(&p)?;
            Ok(Arc::new(SymplecticTorus::new(n, p["epsilon"])?))
        }
        _ => Ok(Arc::new(homogeneous_builtin(name, params)?)),
    }
}

/// The left-invariant built-ins (`flat-torus`, `kodaira-thurston`,
/// `hopf-surface`) as [`Homogeneous`] models.
pub fn homogeneous_builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Homogeneous> {
    match name {
        "flat-torus" => {
            let p = take_params(params, &[("dim", 4.0)])?;
            let n = dim_param(&p)?;
            Ok(Homogeneous::standard(Model::FlatTorus, n)?.with_parameters(p))
        }
        "kodaira-thurston" => {
            let p = take_params(params, &[("lambda1", 1.0), ("lambda2", 1.0)])?;
            let (l1, l2) = (p["lambda1"], p["lambda2"]);
            if !(l1 > 0.0 && l2 > 0.0) {
                return Err(Error::NotSpd("frame metric weights must be positive".into()));
            }
            let mut gf = vec![0.0; 16];
            for (i, l) in [l1, l2, l1, l2].into_iter().enumerate() {
                gf[i * 5] = l;
            }
            let jf = Model::KodairaThurston.standard_frame_j(4);
            Ok(Homogeneous::new(Model::KodairaThurston, 4, gf, jf)?.with_parameters(p))
        }
        "hopf-surface" => {
            let p = take_params(params, &[])?;
            Ok(Homogeneous::standard(Model::HopfSurface, 4)?.with_parameters(p))
        }
        "perturbed-torus" | "symplectic-torus" => Err(Error::InvalidParameter(format!(
            "{name} is not a homogeneous model"
        ))),
        _ => Err(Error::UnknownStructure(name.to_string())),
    }
}

pub type ValueFn = dyn Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Jets from values by central differences: 5-point stencils for first and
/// pure second derivatives, the 4-point cross stencil for mixed ones.
pub struct FdProvider {
    name: String,
    n: usize,
    setting: Setting,
    step: f64,
    values: Arc<ValueFn>,
    inner: Option<Arc<dyn StructureProvider>>,
}

impl FdProvider {
    pub fn new(
        name: &str,
        dim: usize,
        setting: Setting,
        values: Arc<ValueFn>,
        step: f64,
    ) -> Result<Self> {
        if dim % 2 != 0 || dim < 2 {
            return Err(Error::OddDimension(dim));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
        }
        if step < 1e-6 {
            log::warn!("finite-difference step {step:e} is small enough for cancellation to dominate");
        }
        Ok(FdProvider {
            name: name.to_string(),
            n: dim,
            setting,
            step,
            values,
            inner: None,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

/// Wrap a provider so that its derivatives are recomputed from its values.
pub fn fd_adapter(inner: Arc<dyn StructureProvider>, step: f64) -> Result<FdProvider> {
    let src = inner.clone();
    let mut p = FdProvider::new(
        &format!("fd({})", inner.name()),
        inner.dim(),
        inner.setting(),
        Arc::new(move |x: &[f64]| src.values_at(x)),
        step,
    )?;
    p.inner = Some(inner);
    Ok(p)
}

fn concat_values(f: &ValueFn, x: &[f64]) -> Result<Vec<f64>> {
    let (mut g, j) = f(x)?;
    g.extend(j);
    Ok(g)
}

/// First and second central differences of a vector-valued function.
/// Returns `(value, first[c][e], second[c][d][e])` flattened like the jets.
fn fd_derivatives(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    step: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let f0 = f(x)?;
    let m = f0.len();
    let shifted = |offsets: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(c, s) in offsets {
            y[c] += s * step;
        }
        f(&y)
    };
    let mut first = vec![0.0; n * m];
    let mut second = vec![0.0; n * n * m];
    let h = step;
    for c in 0..n {
        let p1 = shifted(&[(c, 1.0)])?;
        let m1 = shifted(&[(c, -1.0)])?;
        let p2 = shifted(&[(c, 2.0)])?;
        let m2 = shifted(&[(c, -2.0)])?;
        for e in 0..m {
            first[c * m + e] = (m2[e] - 8.0 * m1[e] + 8.0 * p1[e] - p2[e]) / (12.0 * h);
            second[(c * n + c) * m + e] =
                (-p2[e] + 16.0 * p1[e] - 30.0 * f0[e] + 16.0 * m1[e] - m2[e]) / (12.0 * h * h);
        }
        for d in 0..c {
            let pp = shifted(&[(c, 1.0), (d, 1.0)])?;
            let pm = shifted(&[(c, 1.0), (d, -1.0)])?;
            let mp = shifted(&[(c, -1.0), (d, 1.0)])?;
            let mm = shifted(&[(c, -1.0), (d, -1.0)])?;
            for e in 0..m {
                let v = (pp[e] - pm[e] - mp[e] + mm[e]) / (4.0 * h * h);
                second[(c * n + d) * m + e] = v;
                second[(d * n + c) * m + e] = v;
            }
        }
    }
    Ok((f0, first, second))
}

/// Split concatenated `(g, J)` derivative arrays back into jet fields.
fn split_concat(n: usize, v: &[f64], blocks: usize) -> (Vec<f64>, Vec<f64>) {
    let n2 = n * n;
    let mut g = Vec::with_capacity(blocks * n2);
    let mut j = Vec::with_capacity(blocks * n2);
    for b in 0..blocks {
        g.extend_from_slice(&v[b * 2 * n2..b * 2 * n2 + n2]);
        j.extend_from_slice(&v[b * 2 * n2 + n2..(b + 1) * 2 * n2]);
    }
    (g, j)
}

impl StructureProvider for FdProvider {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn setting(&self) -> Setting {
        self.setting
    }
    fn parameters(&self) -> BTreeMap<String, f64> {
        let mut p = self
            .inner
            .as_ref()
            .map(|i| i.parameters())
            .unwrap_or_default();
        p.insert("step".into(), self.step);
        p
    }
    fn exact(&self) -> bool {
        false
    }
    fn values_at(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_point(self.n, x)?;
        (self.values)(x)
    }
    fn jet_at(&self, x: &[f64]) -> Result<StructureJet> {
        check_point(self.n, x)?;
        let n = self.n;
        let vf = self.values.clone();
        let f = move |y: &[f64]| concat_values(vf.as_ref(), y);
        let (v, d1, d2) = fd_derivatives(&f, x, self.step)?;
        let (g, j) = split_concat(n, &v, 1);
        let (dg, dj) = split_concat(n, &d1, n);
        let (ddg, ddj) = split_concat(n, &d2, n * n);
        check_values(n, &g, &j, STRUCTURE_TOL)?;
        Ok(StructureJet {
            n,
            x: x.to_vec(),
            g,
            dg,
            ddg,
            j,
            dj,
            ddj,
            setting: self.setting,
        })
    }
    fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        match &self.inner {
            Some(i) => i.sample_points(count, seed),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub dg: f64,
    pub ddg: f64,
    pub dj: f64,
    pub ddj: f64,
    pub max: f64,
}

fn rel_max(declared: &[f64], fd: &[f64]) -> f64 {
    let scale = declared.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    declared
        .iter()
        .zip(fd)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// Compare a provider's declared derivatives with central differences:
/// first derivatives against differences of the declared values, second
/// derivatives against differences of the declared first derivatives.
pub fn jet_consistency_check(
    p: &dyn StructureProvider,
    x: &[f64],
    step: f64,
) -> Result<ConsistencyReport> {
    let jet = p.jet_at(x)?;
    let n = jet.n;
    let vals = |y: &[f64]| {
        let (mut g, j) = p.values_at(y)?;
        g.extend(j);
        Ok(g)
    };
    let (_, d1, _) = fd_derivatives(&vals, x, step)?;
    let (fdg, fdj) = split_concat(n, &d1, n);
    let firsts = |y: &[f64]| {
        let jy = p.jet_at(y)?;
        let mut v = jy.dg;
        v.extend(jy.dj);
        Ok(v)
    };
    let (_, dd1, _) = fd_derivatives(&firsts, x, step)?;
    // dd1[c][(dg block | dj block)] with dg block indexed [d][a][b]
    let n3 = n * n * n;
    let mut fddg = vec![0.0; n * n3];
    let mut fddj = vec![0.0; n * n3];
    for c in 0..n {
        let row = &dd1[c * 2 * n3..(c + 1) * 2 * n3];
        fddg[c * n3..(c + 1) * n3].copy_from_slice(&row[..n3]);
        fddj[c * n3..(c + 1) * n3].copy_from_slice(&row[n3..]);
    }
    let r = ConsistencyReport {
        dg: rel_max(&jet.dg, &fdg),
        ddg: rel_max(&jet.ddg, &fddg),
        dj: rel_max(&jet.dj, &fdj),
        ddj: rel_max(&jet.ddj, &fddj),
        max: 0.0,
    };
    Ok(ConsistencyReport {
        max: r.dg.max(r.ddg).max(r.dj).max(r.ddj),
        ..r
    })
}

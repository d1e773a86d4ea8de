//! Principal symbols of the linearized second-order operators.
//!
//! A probe `(ξ, h, K)` stands for the perturbation `∂_i∂_j g ↦ ξ_iξ_j h`,
//! `∂_i∂_j J ↦ ξ_iξ_j K`, with `K(X, Y) = g(KX, Y)`. All displays are
//! evaluated in a `g`-orthonormal frame and returned in coordinates.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::report::VerificationReport;
use crate::structures::random_point_structure;
use crate::tensor::{compose_j, norm, part0220, part11, skew, sym, Frame, PointStructure, Tensor, Variance};
use crate::{Error, Result};

/// Residual threshold used by the certificates.
pub const CERTIFICATE_TOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SymbolProbe {
    pub structure: PointStructure,
    pub xi: Vec<f64>,
    pub h: Tensor,
    pub k: Tensor,
}

impl SymbolProbe {
    pub fn new(structure: PointStructure, xi: Vec<f64>, h: Tensor, k: Tensor) -> Result<Self> {
        let n = structure.dim();
        if xi.len() != n || h.dim() != n || k.dim() != n || h.rank() != 2 || k.rank() != 2 {
            return Err(Error::Shape("probe components must match the structure".into()));
        }
        let asym = skew(&h).norm();
        if asym > SYMMETRY_TOL * h.norm().max(1.0) {
            return Err(Error::InvalidParameter(format!("h is not symmetric (residual {asym:e})")));
        }
        Ok(SymbolProbe { structure, xi, h, k })
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    /// A random probe on a random almost Hermitian point structure.
    pub fn random(seed: u64, dim: usize) -> Self {
        let structure = random_point_structure(seed, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let n = dim;
        let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = sym(&Tensor::covariant(n, 2, a));
        SymbolProbe {
            structure,
            xi,
            h,
            k: Tensor::covariant(n, 2, k),
        }
    }

    /// [`SymbolProbe::random`] with the deformation conditions enforced:
    /// `K ← (K^{skew})^{(0,2)+(2,0)} − h^{(0,2)+(2,0)}(J·, ·)`, so that `K` is
    /// `(0,2)+(2,0)` and `K^{sym}J = h^{(0,2)+(2,0)}`.
    pub fn random_constrained(seed: u64, dim: usize) -> Self {
        let mut p = SymbolProbe::random(seed, dim);
        p.k = deformation_k(&p.h, &skew(&p.k), &p.structure.j);
        p
    }

    /// A random probe with `K = 0` and `h` of type (1,1).
    pub fn random_hermitian(seed: u64, dim: usize) -> Self {
        let mut p = SymbolProbe::random(seed, dim);
        p.h = part11(&p.h, &p.structure.j);
        p.k = Tensor::covariant(dim, 2, vec![0.0; dim * dim]);
        p
    }

    /// Residuals of the deformation conditions on `(h, K)`:
    /// `[h skew part, K^{(1,1)}, K^{sym}J − h^{(0,2)+(2,0)}]`.
    pub fn deformation_residuals(&self) -> [f64; 3] {
        let j = &self.structure.j;
        [
            skew(&self.h).norm(),
            part11(&self.k, j).norm(),
            compose_j(&sym(&self.k), j).sub(&part0220(&self.h, j)).norm(),
        ]
    }

    fn frame_data(&self) -> FrameData {
        let frame = self.structure.frame();
        let n = self.dim();
        FrameData {
            n,
            j: frame.endo_to_frame(self.structure.j.data()),
            xi: frame.covector_to_frame(&self.xi),
            h: frame.to_frame(self.h.data(), 2),
            k: frame.to_frame(self.k.data(), 2),
            frame,
        }
    }
}

/// `(K_skew)^{(0,2)+(2,0)} − h^{(0,2)+(2,0)}(J·, ·)`.
fn deformation_k(h: &Tensor, k_skew: &Tensor, j: &Tensor) -> Tensor {
    let ks = part0220(k_skew, j);
    ks.sub(&compose_j(&part0220(h, j), j))
}

/// Probe components in an orthonormal frame (`g = I`).
struct FrameData {
    n: usize,
    /// `J^a_b` at `[a, b]`.
    j: Vec<f64>,
    xi: Vec<f64>,
    h: Vec<f64>,
    k: Vec<f64>,
    frame: Frame,
}

impl FrameData {
    fn e(&self, a: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        v[a] = 1.0;
        v
    }
    fn jv(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|a| (0..n).map(|b| self.j[a * n + b] * v[b]).sum()).collect()
    }
    fn je(&self, a: usize) -> Vec<f64> {
        self.jv(&self.e(a))
    }
    fn bil(&self, t: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                s += t[p * n + q] * u[p] * v[q];
            }
        }
        s
    }
    fn hh(&self, u: &[f64], v: &[f64]) -> f64 {
        self.bil(&self.h, u, v)
    }
    fn kk(&self, u: &[f64], v: &[f64]) -> f64 {
        self.bil(&self.k, u, v)
    }
    fn xi(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.xi).map(|(a, b)| a * b).sum()
    }
    fn xi2(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum()
    }
    fn trh(&self) -> f64 {
        (0..self.n).map(|a| self.h[a * self.n + a]).sum()
    }
    fn jxi(&self) -> Vec<f64> {
        self.jv(&self.xi)
    }
    fn two(&self, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] = f(&self.e(a), &self.e(b));
            }
        }
        out
    }
    fn back(&self, t: Vec<f64>, rank: usize) -> Tensor {
        Tensor::covariant(self.n, rank, self.frame.from_frame(&t, rank))
    }
}

fn rm_frame(f: &FrameData) -> Vec<f64> {
    let n = f.n;
    let (x, h) = (&f.xi, &f.h);
    let mut out = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    out[((i * n + j) * n + k) * n + l] = 0.5
                        * (x[i] * x[k] * h[l * n + j] - x[i] * x[l] * h[j * n + k] - x[j] * x[k] * h[l * n + i]
                            + x[j] * x[l] * h[i * n + k]);
                }
            }
        }
    }
    out
}

fn d2j_frame(f: &FrameData) -> Vec<f64> {
    let n = f.n;
    let (x, h, kk) = (&f.xi, &f.h, &f.k);
    // hj[a, b] = h(Je_a, e_b), xj[a] = ξ(Je_a)
    let hj: Vec<f64> = f.two(|a, b| f.hh(&f.jv(a), b));
    let xj: Vec<f64> = (0..n).map(|a| f.xi(&f.je(a))).collect();
    let mut out = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    out[((i * n + j) * n + k) * n + l] = x[i] * x[j] * kk[k * n + l]
                        + 0.5
                            * (x[i] * x[j] * hj[k * n + l] + x[i] * xj[k] * h[l * n + j]
                                - x[i] * x[l] * hj[k * n + j]
                                + x[i] * x[j] * hj[l * n + k]
                                + x[i] * x[k] * hj[l * n + j]
                                - x[i] * xj[l] * h[j * n + k]);
                }
            }
        }
    }
    out
}

/// `σ(Rm)_ijkl = ½(ξ_iξ_k h_lj − ξ_iξ_l h_jk − ξ_jξ_k h_li + ξ_jξ_l h_ik)`.
pub fn symbol_rm(p: &SymbolProbe) -> Tensor {
    let f = p.frame_data();
    f.back(rm_frame(&f), 4)
}

/// `σ(D²J)_ijkl = ξ_iξ_jK_kl + ½(ξ_iξ_jJ_k^p h_lp + ξ_iξ_pJ_k^p h_lj − ξ_iξ_lJ_k^p h_jp
///  + ξ_iξ_jJ_l^p h_pk + ξ_iξ_kJ_l^p h_pj − ξ_iξ_pJ_l^p h_jk)`.
pub fn symbol_d2j(p: &SymbolProbe) -> Tensor {
    let f = p.frame_data();
    f.back(d2j_frame(&f), 4)
}

/// Second-order operators with a principal symbol in the catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SymbolOp {
    /// `ΔJ`.
    LapJ,
    /// Transpose of `L_{θ♯} J`.
    TLeeJ,
    /// `ℛ(X, Y) = Ric(JX, Y) + Ric(X, JY)`.
    ScriptR,
    /// `(ρ'(J·, ·))^{(0,2)+(2,0)}`.
    RhoPart,
    /// `L_{X̄₀} J`.
    LX0J,
    /// `L_{X̄₁} J`.
    LX1J,
    /// `L_{X̄₂} J`.
    LX2J,
    /// `−2 Ric`.
    Minus2Ric,
    /// `L_{X̄} g` with `X̄ = X̄₁ − ½X̄₂`.
    LXbarG,
}

impl SymbolOp {
    pub const ALL: [SymbolOp; 9] = [
        SymbolOp::LapJ,
        SymbolOp::TLeeJ,
        SymbolOp::ScriptR,
        SymbolOp::RhoPart,
        SymbolOp::LX0J,
        SymbolOp::LX1J,
        SymbolOp::LX2J,
        SymbolOp::Minus2Ric,
        SymbolOp::LXbarG,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SymbolOp::LapJ => "lapJ",
            SymbolOp::TLeeJ => "tLeeJ",
            SymbolOp::ScriptR => "scriptR",
            SymbolOp::RhoPart => "rhoPart",
            SymbolOp::LX0J => "LX0J",
            SymbolOp::LX1J => "LX1J",
            SymbolOp::LX2J => "LX2J",
            SymbolOp::Minus2Ric => "minus2Ric",
            SymbolOp::LXbarG => "LXbarG",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        SymbolOp::ALL
            .into_iter()
            .find(|op| op.id() == id)
            .ok_or_else(|| Error::UnknownOperator(id.to_string()))
    }
}

/// `σ(θ)(v) = K(Jξ, v) − h(ξ, v) + ½ tr h ξ(v)`.
fn lee_symbol(f: &FrameData, v: &[f64]) -> f64 {
    f.kk(&f.jxi(), v) - f.hh(&f.xi, v) + 0.5 * f.trh() * f.xi(v)
}

fn catalog_frame(op: SymbolOp, f: &FrameData) -> Vec<f64> {
    let xi = f.xi.clone();
    let jxi = f.jxi();
    let (x2, tr) = (f.xi2(), f.trh());
    match op {
        SymbolOp::LapJ => f.two(|a, b| {
            let (ja, jb) = (f.jv(a), f.jv(b));
            x2 * f.kk(a, b)
                + 0.5
                    * (x2 * f.hh(&ja, b) + f.hh(&xi, b) * f.xi(&ja) - f.hh(&xi, &ja) * f.xi(b)
                        + x2 * f.hh(&jb, a)
                        + f.hh(&xi, &jb) * f.xi(a)
                        - f.hh(&xi, a) * f.xi(&jb))
        }),
        // transpose of −ξ(Ja)σθ(b) − ξ(a)σθ(Jb)
        SymbolOp::TLeeJ => f.two(|a, b| {
            let jb = f.jv(b);
            -f.xi(&jb) * lee_symbol(f, a) - f.xi(b) * lee_symbol(f, &f.jv(a))
        }),
        SymbolOp::ScriptR => f.two(|a, b| {
            let (ja, jb) = (f.jv(a), f.jv(b));
            0.5 * (f.hh(b, &xi) * f.xi(&ja) + f.hh(&ja, &xi) * f.xi(b) - x2 * f.hh(&ja, b) - f.xi(&ja) * f.xi(b) * tr
                + f.hh(&jb, &xi) * f.xi(a)
                + f.hh(a, &xi) * f.xi(&jb)
                - x2 * f.hh(a, &jb)
                - f.xi(a) * f.xi(&jb) * tr)
        }),
        SymbolOp::RhoPart => f.two(|a, b| {
            let (ja, jb) = (f.jv(a), f.jv(b));
            0.5 * (f.hh(&jxi, a) * f.xi(b) - f.hh(&jxi, b) * f.xi(a) + f.hh(&jxi, &jb) * f.xi(&ja)
                - f.hh(&jxi, &ja) * f.xi(&jb))
        }),
        SymbolOp::LX0J => f.two(|a, b| {
            let (ja, jb) = (f.jv(a), f.jv(b));
            -f.xi(&ja) * f.hh(&jxi, &jb) + f.xi(a) * f.hh(&jxi, b)
        }),
        SymbolOp::LX1J => f.two(|a, b| {
            let (ja, jb) = (f.jv(a), f.jv(b));
            -f.xi(&ja) * f.hh(&xi, b) - f.xi(a) * f.hh(&xi, &jb)
        }),
        SymbolOp::LX2J => f.two(|a, b| {
            let (ja, jb) = (f.jv(a), f.jv(b));
            -f.xi(&ja) * f.xi(b) * tr - f.xi(a) * f.xi(&jb) * tr
        }),
        SymbolOp::Minus2Ric => {
            f.two(|a, b| x2 * f.hh(a, b) - f.xi(b) * f.hh(&xi, a) - f.xi(a) * f.hh(&xi, b) + f.xi(a) * f.xi(b) * tr)
        }
        SymbolOp::LXbarG => {
            let sx = |v: &[f64]| f.hh(&xi, v) - 0.5 * tr * f.xi(v);
            f.two(|a, b| f.xi(a) * sx(b) + f.xi(b) * sx(a))
        }
    }
}

/// The principal symbol of a catalog operator as a covariant 2-tensor.
pub fn symbol_catalog(op_id: &str, p: &SymbolProbe) -> Result<Tensor> {
    let op = SymbolOp::from_id(op_id)?;
    Ok(symbol_of(op, p))
}

pub fn symbol_of(op: SymbolOp, p: &SymbolProbe) -> Tensor {
    let f = p.frame_data();
    f.back(catalog_frame(op, &f), 2)
}

fn frame_norm(f: &FrameData, t: &[f64]) -> f64 {
    debug_assert_eq!(t.len(), f.n * f.n);
    norm(t)
}

/// `(‖σ(−2Ric + L_X̄ g) − |ξ|²h‖, ‖σ(ΔJ + ℛ + L_X̄ J) − |ξ|²K‖)` in an
/// orthonormal frame, `X̄ = X̄₁ − ½X̄₂`.
pub fn ellipticity_residuals(p: &SymbolProbe) -> (f64, f64) {
    let f = p.frame_data();
    let n2 = f.n * f.n;
    let ric = catalog_frame(SymbolOp::Minus2Ric, &f);
    let lxg = catalog_frame(SymbolOp::LXbarG, &f);
    let lap = catalog_frame(SymbolOp::LapJ, &f);
    let r = catalog_frame(SymbolOp::ScriptR, &f);
    let l1 = catalog_frame(SymbolOp::LX1J, &f);
    let l2 = catalog_frame(SymbolOp::LX2J, &f);
    let x2 = f.xi2();
    let rg: Vec<f64> = (0..n2).map(|e| ric[e] + lxg[e] - x2 * f.h[e]).collect();
    let rj: Vec<f64> = (0..n2)
        .map(|e| lap[e] + r[e] + l1[e] - 0.5 * l2[e] - x2 * f.k[e])
        .collect();
    (frame_norm(&f, &rg), frame_norm(&f, &rj))
}

/// `‖σ(−2Ric^{(1,1)} − 2(D²J(J·, i, ·, i))^{sym,(1,1)}) − |ξ|²h‖`.
pub fn hermitian_symbol_residual(p: &SymbolProbe) -> f64 {
    let f = p.frame_data();
    let n = f.n;
    let d2 = d2j_frame(&f);
    // T(a, b) = Σ_i σ(D²J)(Ja, i, b, i)
    let mut t = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut v = 0.0;
            for q in 0..n {
                for i in 0..n {
                    v += f.j[q * n + a] * d2[((q * n + i) * n + b) * n + i];
                }
            }
            t[a * n + b] = v;
        }
    }
    let ric2 = catalog_frame(SymbolOp::Minus2Ric, &f);
    let jt = Tensor::new(n, vec![Variance::Up, Variance::Down], f.j.clone()).expect("shape");
    let total = part11(&Tensor::covariant(n, 2, ric2), &jt).sub(&part11(&sym(&Tensor::covariant(n, 2, t)), &jt).scaled(2.0));
    let x2 = f.xi2();
    let r: Vec<f64> = total.data().iter().zip(&f.h).map(|(a, b)| a - x2 * b).collect();
    norm(&r)
}

fn max_report(report: &mut VerificationReport, id: &str, values: &[f64]) {
    let worst = values.iter().fold(0.0_f64, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b) });
    report.check(id, None, worst, CERTIFICATE_TOL);
}

/// Ellipticity modulo gauge on `trials` random constrained probes.
pub fn ellipticity_certificate(seed: u64, trials: usize, dim: usize) -> Result<VerificationReport> {
    check_certificate_args(trials, dim)?;
    let mut rg = Vec::with_capacity(trials);
    let mut rj = Vec::with_capacity(trials);
    for t in 0..trials {
        let p = SymbolProbe::random_constrained(seed.wrapping_add(t as u64), dim);
        let (a, b) = ellipticity_residuals(&p);
        rg.push(a);
        rj.push(b);
    }
    let mut report = VerificationReport::new(format!("ellipticity-dim{dim}"));
    max_report(&mut report, "ellipticity.metric", &rg);
    max_report(&mut report, "ellipticity.complex-structure", &rj);
    Ok(report)
}

/// The Hermitian certificate on `trials` probes with `K = 0`, `h` of type (1,1).
pub fn hermitian_symbol_certificate(seed: u64, trials: usize, dim: usize) -> Result<VerificationReport> {
    check_certificate_args(trials, dim)?;
    let values: Vec<f64> = (0..trials)
        .map(|t| hermitian_symbol_residual(&SymbolProbe::random_hermitian(seed.wrapping_add(t as u64), dim)))
        .collect();
    let mut report = VerificationReport::new(format!("hermitian-symbol-dim{dim}"));
    max_report(&mut report, "hermitian-symbol", &values);
    Ok(report)
}

/// Projects `trials` random probes with [`ak_constraint_projector`] and checks
/// the four traced identities and the full constraint.
pub fn ak_symbol_certificate(seed: u64, trials: usize, dim: usize) -> Result<VerificationReport> {
    check_certificate_args(trials, dim)?;
    let mut worst = [Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for t in 0..trials {
        let p = ak_constraint_projector(&SymbolProbe::random(seed.wrapping_add(t as u64), dim))?;
        let r = traced_identity_residuals(&p);
        for i in 0..4 {
            worst[i].push(r[i]);
        }
        worst[4].push(ak_constraint_residual(&p));
    }
    let mut report = VerificationReport::new(format!("ak-symbol-dim{dim}"));
    for (i, w) in worst.iter().enumerate().take(4) {
        max_report(&mut report, &format!("ak-symbol.traced-{}", i + 1), w);
    }
    max_report(&mut report, "ak-symbol.constraint", &worst[4]);
    Ok(report)
}

fn check_certificate_args(trials: usize, dim: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if dim < 2 || dim % 2 != 0 || dim > crate::autodiff::MAX_DIM {
        return Err(Error::OddDimension(dim));
    }
    Ok(())
}

/// `C(i,j,k) = ξ(i)K(j,k) + ξ(j)K(k,i) + ξ(k)K(i,j) + h(k,Jj)ξ(i) + h(i,Jk)ξ(j) + h(j,Ji)ξ(k)`,
/// the symbol of `dω = 0` in simplified form.
pub fn ak_constraint_tensor(p: &SymbolProbe) -> Tensor {
    let f = p.frame_data();
    f.back(constraint_frame(&f), 3)
}

/// Norm of the frame components of [`ak_constraint_tensor`].
pub fn ak_constraint_residual(p: &SymbolProbe) -> f64 {
    norm(&constraint_frame(&p.frame_data()))
}

fn constraint_frame(f: &FrameData) -> Vec<f64> {
    let n = f.n;
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let (ei, ej, ek) = (f.e(i), f.e(j), f.e(k));
                let (ji, jj, jk) = (f.jv(&ei), f.jv(&ej), f.jv(&ek));
                out[(i * n + j) * n + k] = f.xi[i] * f.kk(&ej, &ek)
                    + f.xi[j] * f.kk(&ek, &ei)
                    + f.xi[k] * f.kk(&ei, &ej)
                    + f.hh(&ek, &jj) * f.xi[i]
                    + f.hh(&ei, &jk) * f.xi[j]
                    + f.hh(&ej, &ji) * f.xi[k];
            }
        }
    }
    out
}

/// The linear map `(h, K) ↦` (constraint, `h^{skew}`, `K^{(1,1)}`,
/// `K^{sym}J − h^{(0,2)+(2,0)}`) on frame components.
fn constraint_matrix(f: &FrameData) -> DMatrix<f64> {
    let n = f.n;
    let n2 = n * n;
    let rows = n * n * n + 3 * n2;
    let mut m = DMatrix::zeros(rows, 2 * n2);
    let mut probe = FrameData {
        n,
        j: f.j.clone(),
        xi: f.xi.clone(),
        h: vec![0.0; n2],
        k: vec![0.0; n2],
        frame: f.frame.clone(),
    };
    for col in 0..2 * n2 {
        probe.h.iter_mut().for_each(|v| *v = 0.0);
        probe.k.iter_mut().for_each(|v| *v = 0.0);
        if col < n2 {
            probe.h[col] = 1.0;
        } else {
            probe.k[col - n2] = 1.0;
        }
        let c = constraint_frame(&probe);
        let image = conditions_frame(&probe);
        for (r, v) in c.iter().chain(&image).enumerate() {
            m[(r, col)] = *v;
        }
    }
    m
}

fn conditions_frame(f: &FrameData) -> Vec<f64> {
    let n = f.n;
    let mut out = Vec::with_capacity(3 * n * n);
    out.extend(f.two(|a, b| 0.5 * (f.hh(a, b) - f.hh(b, a))));
    out.extend(f.two(|a, b| 0.5 * (f.kk(a, b) + f.kk(&f.jv(a), &f.jv(b)))));
    out.extend(f.two(|a, b| {
        let ja = f.jv(a);
        let ksym = 0.5 * (f.kk(&ja, b) + f.kk(b, &ja));
        let h0220 = 0.5 * (f.hh(a, b) - f.hh(&ja, &f.jv(b)));
        ksym - h0220
    }));
    out
}

/// Orthogonal projection of `(h, K)` (frame components) onto the joint kernel
/// of the almost Kähler symbol constraint and the deformation conditions.
pub fn ak_constraint_projector(p: &SymbolProbe) -> Result<SymbolProbe> {
    let f = p.frame_data();
    let n2 = f.n * f.n;
    if f.xi2().sqrt() < 1e-12 {
        return Err(Error::Degenerate("ξ = 0".into()));
    }
    let m = constraint_matrix(&f);
    let eig = SymmetricEigen::new(m.transpose() * &m);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let cols: Vec<usize> = (0..2 * n2).filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * top).collect();
    if cols.is_empty() {
        return Err(Error::Degenerate("constraint kernel is trivial".into()));
    }
    let basis = eig.eigenvectors.select_columns(&cols);
    let v = nalgebra::DVector::from_iterator(2 * n2, f.h.iter().chain(&f.k).copied());
    let proj = &basis * (basis.transpose() * v);
    if proj.norm() < 1e-12 {
        return Err(Error::Degenerate("projection vanishes".into()));
    }
    let h = proj.as_slice()[..n2].to_vec();
    let k = proj.as_slice()[n2..].to_vec();
    // symmetrize away rounding in the skew part of h
    let h = sym(&f.back(h, 2));
    let k = f.back(k, 2);
    Ok(SymbolProbe {
        structure: p.structure.clone(),
        xi: p.xi.clone(),
        h,
        k,
    })
}

/// Norms of the four traced forms of the almost Kähler symbol constraint:
///
/// 1. `|ξ|²K(a,b) + ξ(a)K(b,ξ) + ξ(b)K(ξ,a) + |ξ|²h(Ja,b) + ξ(a)h(ξ,Jb) + ξ(b)h(a,Jξ)`
/// 2. `−ξ(Ja)K(b,Jξ) + ξ(b)K(ξ,a) − ξ(Ja)h(Jξ,Jb) + ξ(b)h(Ja,ξ)`
/// 3. `ξ(b)(K(ξ,a) + K(a,ξ) + h(a,Jξ) + h(ξ,Ja))`
/// 4. `ξ(b)(K(ξ,a) − K(a,ξ) + h(Ja,ξ) − h(Jξ,a) − tr h ξ(Ja))`
pub fn traced_identity_residuals(p: &SymbolProbe) -> [f64; 4] {
    let f = p.frame_data();
    let xi = f.xi.clone();
    let jxi = f.jxi();
    let x2 = f.xi2();
    let tr = f.trh();
    let t1 = f.two(|a, b| {
        let (ja, jb) = (f.jv(a), f.jv(b));
        x2 * f.kk(a, b) + f.xi(a) * f.kk(b, &xi) + f.xi(b) * f.kk(&xi, a) + x2 * f.hh(&ja, b)
            + f.xi(a) * f.hh(&xi, &jb)
            + f.xi(b) * f.hh(a, &jxi)
    });
    let t2 = f.two(|a, b| {
        let (ja, jb) = (f.jv(a), f.jv(b));
        -f.xi(&ja) * f.kk(b, &jxi) + f.xi(b) * f.kk(&xi, a) - f.xi(&ja) * f.hh(&jxi, &jb) + f.xi(b) * f.hh(&ja, &xi)
    });
    let t3 = f.two(|a, b| {
        let ja = f.jv(a);
        f.xi(b) * (f.kk(&xi, a) + f.kk(a, &xi) + f.hh(a, &jxi) + f.hh(&xi, &ja))
    });
    let t4 = f.two(|a, b| {
        let ja = f.jv(a);
        f.xi(b) * (f.kk(&xi, a) - f.kk(a, &xi) + f.hh(&ja, &xi) - f.hh(&jxi, a) - tr * f.xi(&ja))
    });
    [norm(&t1), norm(&t2), norm(&t3), norm(&t4)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::{gauge_fields, levi_civita_unchecked, lie_derivative_g, lie_derivative_j, LcPackage, VectorJet};
    use crate::structures::{builtin, StructureJet};
    use crate::tensor::contract_pair;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn frame_probe(n: usize, xi: Vec<f64>, h: Vec<f64>, k: Vec<f64>) -> SymbolProbe {
        let g = Tensor::covariant(n, 2, (0..n * n).map(|e| if e / n == e % n { 1.0 } else { 0.0 }).collect());
        let j = Tensor::new(n, vec![Variance::Up, Variance::Down], crate::structures::standard_j(n)).unwrap();
        SymbolProbe::new(PointStructure::new(g, j).unwrap(), xi, Tensor::covariant(n, 2, h), Tensor::covariant(n, 2, k))
            .unwrap()
    }

    fn diff(a: &Tensor, b: &Tensor) -> f64 {
        a.sub(b).norm()
    }

    #[test]
    fn zero_probes_have_zero_symbols() {
        let p = frame_probe(4, vec![0.3, -1.0, 0.2, 0.5], vec![0.0; 16], vec![0.0; 16]);
        assert_eq!(symbol_rm(&p).max_abs(), 0.0);
        assert_eq!(symbol_d2j(&p).max_abs(), 0.0);
        for op in SymbolOp::ALL {
            assert_eq!(symbol_of(op, &p).max_abs(), 0.0);
        }
    }

    #[test]
    fn rm_symbol_by_hand() {
        // ξ = e1, h = e2⊗e2 (0-based e0, e1): σ(Rm)_{0101} = ½ξ0ξ0 h11 = ½
        let mut h = vec![0.0; 16];
        h[5] = 1.0;
        let p = frame_probe(4, vec![1.0, 0.0, 0.0, 0.0], h, vec![0.0; 16]);
        let s = symbol_rm(&p);
        let at = |i: usize, j: usize, k: usize, l: usize| s.data()[((i * 4 + j) * 4 + k) * 4 + l];
        assert!((at(0, 1, 0, 1) - 0.5).abs() < 1e-15);
        assert!((at(0, 1, 1, 0) + 0.5).abs() < 1e-15);
        assert!((at(1, 0, 0, 1) + 0.5).abs() < 1e-15);
        assert!((at(1, 0, 1, 0) - 0.5).abs() < 1e-15);
        let others: f64 = s.data().iter().map(|v| v.abs()).sum::<f64>() - 2.0;
        assert!(others.abs() < 1e-15);
    }

    #[test]
    fn d2j_symbol_without_h() {
        let p = SymbolProbe::random(3, 4);
        let mut q = p.clone();
        q.h = q.h.scaled(0.0);
        let s = symbol_d2j(&q);
        let n = 4;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let want = q.xi[i] * q.xi[j] * q.k.data()[k * n + l];
                        assert!((s.data()[((i * n + j) * n + k) * n + l] - want).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn displays_are_traces_of_rm_and_d2j_symbols() {
        for seed in 0..10 {
            for dim in [4, 6] {
                let p = SymbolProbe::random(seed, dim);
                let ginv = p.structure.g_inverse();
                let gi: Vec<f64> = crate::tensor::mat_data(&ginv);
                let n = dim;
                let rm = symbol_rm(&p);
                let d2 = symbol_d2j(&p);
                // ΔJ = D²J contracted in the derivative slots
                let lap = contract_pair(d2.data(), n, 4, 0, 1, &gi);
                assert!(diff(&Tensor::covariant(n, 2, lap), &symbol_of(SymbolOp::LapJ, &p)) < 1e-12);
                // Ric_xy = g^{ab} Rm_{axyb}
                let ric = contract_pair(rm.data(), n, 4, 0, 3, &gi);
                let ric = Tensor::covariant(n, 2, ric);
                assert!(diff(&ric.scaled(-2.0), &symbol_of(SymbolOp::Minus2Ric, &p)) < 1e-12);
                let j = &p.structure.j;
                let script_r = compose_j(&ric, j).add(&compose_j(&ric, j).transpose());
                assert!(diff(&script_r, &symbol_of(SymbolOp::ScriptR, &p)) < 1e-12);
                // ρ'(JX, Y) = −Rm(X, Y, i, Ji)
                let w = crate::tensor::mat_data(&(p.structure.j.to_matrix() * &ginv));
                let wt: Vec<f64> = (0..n * n).map(|e| w[(e % n) * n + e / n]).collect();
                let rho_j = Tensor::covariant(n, 2, contract_pair(rm.data(), n, 4, 2, 3, &wt)).scaled(-1.0);
                assert!(diff(&part0220(&rho_j, j), &symbol_of(SymbolOp::RhoPart, &p)) < 1e-12);
            }
        }
    }

    #[test]
    fn rm_symbol_has_curvature_symmetries() {
        for seed in 0..5 {
            let p = SymbolProbe::random(seed, 6);
            let s = symbol_rm(&p);
            let n = 6;
            let at = |i: usize, j: usize, k: usize, l: usize| s.data()[((i * n + j) * n + k) * n + l];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            assert!((at(i, j, k, l) + at(j, i, k, l)).abs() < 1e-13);
                            assert!((at(i, j, k, l) + at(i, j, l, k)).abs() < 1e-13);
                            assert!((at(i, j, k, l) - at(k, l, i, j)).abs() < 1e-13);
                            assert!((at(i, j, k, l) + at(j, k, i, l) + at(k, i, j, l)).abs() < 1e-13);
                        }
                    }
                }
            }
        }
    }

    /// Each operator evaluated on a jet, as a covariant 2-tensor.
    fn operator(op: SymbolOp, p: &LcPackage) -> Vec<f64> {
        let n = p.n;
        let j = p.j_tensor();
        let ric = Tensor::covariant(n, 2, p.ric.clone());
        let gf = gauge_fields(p);
        match op {
            SymbolOp::LapJ => p.lap_j(),
            SymbolOp::TLeeJ => Tensor::covariant(n, 2, lie_derivative_j(&gf.theta_sharp, p)).transpose().into_data(),
            SymbolOp::ScriptR => compose_j(&ric, &j).add(&compose_j(&ric, &j).transpose()).into_data(),
            SymbolOp::RhoPart => {
                part0220(&compose_j(&Tensor::covariant(n, 2, p.rho_prime.clone()), &j), &j).into_data()
            }
            SymbolOp::LX0J => lie_derivative_j(&gf.x0, p),
            SymbolOp::LX1J => lie_derivative_j(&gf.x1, p),
            SymbolOp::LX2J => lie_derivative_j(&gf.x2, p),
            SymbolOp::Minus2Ric => ric.scaled(-2.0).into_data(),
            SymbolOp::LXbarG => {
                let xbar = VectorJet {
                    v: gf.x1.v.iter().zip(&gf.x2.v).map(|(a, b)| a - 0.5 * b).collect(),
                    d: gf.x1.d.iter().zip(&gf.x2.d).map(|(a, b)| a - 0.5 * b).collect(),
                };
                lie_derivative_g(&xbar, p)
            }
        }
    }

    /// Adds `ξ_cξ_d h_ab` to `∂_c∂_d g_ab` and `ξ_cξ_d K^a_b` to `∂_c∂_d J^a_b`.
    fn bumped(jet: &StructureJet, p: &SymbolProbe) -> StructureJet {
        let n = jet.n;
        let n2 = n * n;
        let gi = crate::tensor::mat_data(&p.structure.g_inverse());
        let mut out = jet.clone();
        for c in 0..n {
            for d in 0..n {
                let s = p.xi[c] * p.xi[d];
                for a in 0..n {
                    for b in 0..n {
                        out.ddg[(c * n + d) * n2 + a * n + b] += s * p.h.data()[a * n + b];
                        // K^a_b = g^{ac} K_bc
                        let km: f64 = (0..n).map(|e| gi[a * n + e] * p.k.data()[b * n + e]).sum();
                        out.ddj[(c * n + d) * n2 + a * n + b] += s * km;
                    }
                }
            }
        }
        out
    }

    fn probe_at(jet: &StructureJet, seed: u64, constrained: bool) -> SymbolProbe {
        let n = jet.n;
        let g = Tensor::covariant(n, 2, jet.g.clone());
        let j = Tensor::new(n, vec![Variance::Up, Variance::Down], jet.j.clone()).unwrap();
        let mut p = SymbolProbe::random(seed, n);
        p.structure = PointStructure::new(g, j).unwrap();
        if constrained {
            p.k = deformation_k(&p.h, &skew(&p.k), &p.structure.j);
        }
        p
    }

    #[test]
    fn catalog_matches_linearization() {
        let params = BTreeMap::new();
        for name in ["kodaira-thurston", "perturbed-torus"] {
            let prov = builtin(name, &params).unwrap();
            let jet = prov.jet_at(&[0.3, -0.4, 0.2, 0.7]).unwrap();
            let base = levi_civita_unchecked(&jet);
            for (seed, constrained) in [(1, false), (2, true)] {
                let probe = probe_at(&jet, seed, constrained);
                let moved = levi_civita_unchecked(&bumped(&jet, &probe));
                for op in SymbolOp::ALL {
                    let lin: Vec<f64> = operator(op, &moved)
                        .iter()
                        .zip(operator(op, &base))
                        .map(|(a, b)| a - b)
                        .collect();
                    let sym = symbol_of(op, &probe);
                    let r = diff(&Tensor::covariant(4, 2, lin), &sym);
                    assert!(r < 1e-8 * sym.norm().max(1.0), "{name} {} constrained={constrained}: {r:e}", op.id());
                }
                let rm: Vec<f64> = moved.rm.iter().zip(&base.rm).map(|(a, b)| a - b).collect();
                assert!(diff(&Tensor::covariant(4, 4, rm), &symbol_rm(&probe)) < 1e-8);
                let d2: Vec<f64> = moved.d2j.iter().zip(&base.d2j).map(|(a, b)| a - b).collect();
                assert!(diff(&Tensor::covariant(4, 4, d2), &symbol_d2j(&probe)) < 1e-8);
            }
        }
    }

    #[test]
    fn unknown_operator_is_rejected() {
        let p = SymbolProbe::random(0, 4);
        assert!(matches!(symbol_catalog("lapK", &p), Err(Error::UnknownOperator(_))));
        assert!(symbol_catalog("lapJ", &p).is_ok());
    }

    #[test]
    fn lap_j_without_h_and_script_r_on_metric() {
        let mut p = SymbolProbe::random(5, 6);
        p.h = p.h.scaled(0.0);
        let x2: f64 = {
            let gi = p.structure.g_inverse();
            let xi = nalgebra::DVector::from_column_slice(&p.xi);
            (xi.transpose() * gi * &xi)[0]
        };
        assert!(diff(&symbol_of(SymbolOp::LapJ, &p), &p.k.scaled(x2)) < 1e-12);
        // h = g, K = 0: σ(ℛ)(a,b) = −ξ(Ja)ξ(b)·n/2 − ξ(a)ξ(Jb)·n/2 after the |ξ|² terms cancel
        let mut q = SymbolProbe::random(6, 6);
        q.h = q.structure.g.clone();
        q.k = q.k.scaled(0.0);
        let n = 6;
        let xj: Vec<f64> = (0..n).map(|a| (0..n).map(|p| q.xi[p] * q.structure.j.data()[p * n + a]).sum()).collect();
        let want = Tensor::covariant(
            n,
            2,
            (0..n * n)
                .map(|e| {
                    let (a, b) = (e / n, e % n);
                    0.5 * (q.xi[b] * xj[a] + xj[a] * q.xi[b] - xj[a] * q.xi[b] * n as f64 + xj[b] * q.xi[a]
                        + q.xi[a] * xj[b]
                        - q.xi[a] * xj[b] * n as f64)
                })
                .collect(),
        );
        assert!(diff(&symbol_of(SymbolOp::ScriptR, &q), &want) < 1e-12);
    }

    #[test]
    fn certificates_pass() {
        for dim in [4, 6] {
            let r = ellipticity_certificate(11, 100, dim).unwrap();
            assert!(r.passed(), "{:?}", r.records);
            let r = hermitian_symbol_certificate(12, 100, dim).unwrap();
            assert!(r.passed(), "{:?}", r.records);
        }
        assert!(ellipticity_certificate(0, 0, 4).is_err());
        assert!(ellipticity_certificate(0, 1, 5).is_err());
    }

    #[test]
    fn conformal_probe_is_exact() {
        let mut p = SymbolProbe::random(9, 4);
        p.h = p.structure.g.clone();
        p.k = p.k.scaled(0.0);
        let (a, b) = ellipticity_residuals(&p);
        assert!(a < 1e-14 && b < 1e-14);
        assert!(hermitian_symbol_residual(&p) < 1e-14);
        assert!(p.deformation_residuals().iter().all(|&r| r < 1e-14));
    }

    #[test]
    fn certificate_needs_gauge() {
        let p = SymbolProbe::random_constrained(3, 4);
        let f = p.frame_data();
        let ric = catalog_frame(SymbolOp::Minus2Ric, &f);
        let x2 = f.xi2();
        let r: Vec<f64> = ric.iter().zip(&f.h).map(|(a, b)| a - x2 * b).collect();
        assert!(norm(&r) > 1e-3);
    }

    #[test]
    fn hermitian_rank_one_probe() {
        let mut p = SymbolProbe::random_hermitian(4, 4);
        let v = nalgebra::DVector::from_column_slice(&[0.3, -0.2, 0.9, 0.1]);
        let vv = &v * v.transpose();
        p.h = part11(&Tensor::from_matrix(&vv, [Variance::Down, Variance::Down]), &p.structure.j);
        assert!(hermitian_symbol_residual(&p) < 1e-13);
    }

    #[test]
    fn projector_is_idempotent_and_satisfies_identities() {
        for dim in [4, 6] {
            for seed in 0..5 {
                let p = SymbolProbe::random(seed, dim);
                let q = ak_constraint_projector(&p).unwrap();
                assert!(q.h.norm() + q.k.norm() > 1e-3, "kernel is nontrivial");
                let q2 = ak_constraint_projector(&q).unwrap();
                assert!(diff(&q.h, &q2.h) + diff(&q.k, &q2.k) < 1e-12);
                assert!(ak_constraint_residual(&q) < 1e-12);
                assert!(q.deformation_residuals().iter().all(|&r| r < 1e-12));
                assert!(traced_identity_residuals(&q).iter().all(|&r| r < 1e-12));
            }
        }
        let mut z = SymbolProbe::random(0, 4);
        z.xi = vec![0.0; 4];
        assert!(matches!(ak_constraint_projector(&z), Err(Error::Degenerate(_))));
        let r = ak_symbol_certificate(1, 20, 6).unwrap();
        assert!(r.passed(), "{:?}", r.records);
    }

    #[test]
    fn traced_identities_are_contractions_of_the_constraint() {
        // contract C(i, j, k) ξ(l) directly, on projected probes
        for seed in 0..4 {
            let q = ak_constraint_projector(&SymbolProbe::random(seed, 4)).unwrap();
            let f = q.frame_data();
            let n = f.n;
            // an unprojected probe satisfying only the deformation conditions
            let u = SymbolProbe::random_constrained(seed + 100, 4);
            let fu = u.frame_data();
            for (probe, fd) in [(&q, &f), (&u, &fu)] {
                let jm = &fd.j;
                let c = constraint_frame(fd);
                let cc = |i: usize, j: usize, k: usize| c[(i * n + j) * n + k];
                let xj = |a: usize| (0..n).map(|p| fd.xi[p] * jm[p * n + a]).sum::<f64>();
                let mut t = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
                for a in 0..n {
                    for b in 0..n {
                        let e = a * n + b;
                        for i in 0..n {
                            // l = i, j = a, k = b
                            t[0][e] += fd.xi[i] * cc(i, a, b);
                            // l = Ji, j = Ja, k = b
                            for jj in 0..n {
                                t[1][e] += xj(i) * jm[jj * n + a] * cc(i, jj, b);
                            }
                            // i = j, k = a, l = b
                            t[2][e] += fd.xi[b] * cc(i, i, a);
                            // i = Jj, k = Ja, l = b
                            for ii in 0..n {
                                for kk in 0..n {
                                    t[3][e] += fd.xi[b] * jm[ii * n + i] * jm[kk * n + a] * cc(ii, i, kk);
                                }
                            }
                        }
                    }
                }
                let closed = traced_identity_residuals(probe);
                for (idx, tt) in t.iter().enumerate() {
                    let want = norm(tt);
                    assert!((closed[idx] - want).abs() < 1e-12 * want.max(1.0), "identity {}: {} vs {}", idx + 1, closed[idx], want);
                }
            }
        }
    }

    #[test]
    fn paper_display_of_second_traced_identity_needs_type_11_h() {
        // −ξ(Ja)h(Jξ,Jb) vs the displayed h(ξ,b)ξ(Ja): equal only when h is (1,1)
        let q = ak_constraint_projector(&SymbolProbe::random(2, 4)).unwrap();
        let f = q.frame_data();
        let jxi = f.jxi();
        let d = f.two(|a, b| {
            let (ja, jb) = (f.jv(a), f.jv(b));
            -f.xi(&ja) * f.hh(&jxi, &jb) - f.hh(&f.xi, b) * f.xi(&ja)
        });
        assert!(norm(&d) > 1e-3);
    }

    proptest! {
        #[test]
        fn ellipticity_holds_for_unconstrained_probes(seed in 0u64..10_000) {
            let p = SymbolProbe::random(seed, 4);
            let (a, b) = ellipticity_residuals(&p);
            prop_assert!(a < 1e-12 && b < 1e-12);
        }

        #[test]
        fn symbols_are_linear_in_the_perturbation(seed in 0u64..10_000, c in -3.0f64..3.0) {
            let p = SymbolProbe::random(seed, 4);
            let mut q = p.clone();
            q.h = p.h.scaled(c);
            q.k = p.k.scaled(c);
            for op in SymbolOp::ALL {
                let a = symbol_of(op, &p).scaled(c);
                prop_assert!(diff(&a, &symbol_of(op, &q)) < 1e-11 * a.norm().max(1.0));
            }
        }
    }
}

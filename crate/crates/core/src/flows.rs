//! Deformation conditions, flow right-hand sides and fixed-step integration
//! of the flows on left-invariant models.
//!
//! A deformation is `(h, K) = (∂g/∂t, ∂J/∂t)` with `K(X, Y) = g(KX, Y)`;
//! `η = ∂ω/∂t = h(J·, ·) + K`.

use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::autodiff::mat;
use crate::chern::{hermitian_connection, ChernPackage, Family, CHERN_T};
use crate::classify::{classified, ClassifiedTensors};
use crate::riemann::{dj_cyclic_residual, gauge_fields, levi_civita_unchecked, lie_derivative_g, lie_derivative_j, nijenhuis_residual, LcPackage};
use crate::structures::{Homogeneous, Setting, StructureJet, StructureProvider};
use crate::tensor::{compose_j, part0220, part11, skew, sym, Tensor, ZERO_GUARD};
use crate::{Error, Result};

/// Sign `s` in `η = s·P` for the symplectic curvature flow, resolved once on
/// Kodaira–Thurston at the origin (see `scf_sign_resolution`).
pub const SCF_SIGN: f64 = 1.0;

/// Tolerance on the `Q₁, Q₂` conditions and on the type of the HCF `η`.
pub const SPEC_TOL: f64 = 1e-9;

/// Tolerance accepted for intermediate integrator stages.
const STAGE_TOL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowFamily {
    Ahcf,
    Scf,
    Hcf,
}

impl FlowFamily {
    pub fn name(self) -> &'static str {
        match self {
            FlowFamily::Ahcf => "ahcf",
            FlowFamily::Scf => "scf",
            FlowFamily::Hcf => "hcf",
        }
    }
}

impl FromStr for FlowFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ahcf" => Ok(FlowFamily::Ahcf),
            "scf" => Ok(FlowFamily::Scf),
            "hcf" => Ok(FlowFamily::Hcf),
            _ => Err(Error::FlowSpec(format!("unknown flow `{s}` (expected ahcf, scf or hcf)"))),
        }
    }
}

/// Names of the `q1` coefficients, in order.
pub const Q1_BASIS: [&str; 11] = [
    "B1", "B2", "B3", "B5", "B4sym", "B6sym", "B8sym", "E1g", "E2g", "E3g", "E4g",
];

/// Names of the `q2` coefficients, in order.
pub const Q2_BASIS: [&str; 14] = [
    "B1J", "B2J", "B3J", "B4J", "B5J", "B6J", "B7J", "B8J", "B9J", "B10J", "E1w", "E2w", "E3w", "E4w",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub family: FlowFamily,
    /// Gauge coefficient of `L_{θ♯}` (AHCF).
    #[serde(default)]
    pub a: f64,
    /// Coefficients over [`Q1_BASIS`] (AHCF); missing entries are zero.
    #[serde(default)]
    pub q1: Vec<f64>,
    /// Coefficients over [`Q2_BASIS`] (AHCF).
    #[serde(default)]
    pub q2: Vec<f64>,
    /// `a₁..a₄` (HCF).
    #[serde(default)]
    pub hcf: [f64; 4],
}

impl FlowSpec {
    pub fn new(family: FlowFamily) -> Self {
        FlowSpec {
            family,
            a: 0.0,
            q1: Vec::new(),
            q2: Vec::new(),
            hcf: [0.0; 4],
        }
    }

    pub fn ahcf(a: f64, q1: Vec<f64>, q2: Vec<f64>) -> Self {
        FlowSpec {
            a,
            q1,
            q2,
            ..FlowSpec::new(FlowFamily::Ahcf)
        }
    }

    pub fn hcf(coeffs: [f64; 4]) -> Self {
        FlowSpec {
            hcf: coeffs,
            ..FlowSpec::new(FlowFamily::Hcf)
        }
    }

    /// Shape and finiteness checks independent of the geometry.
    pub fn validate(&self) -> Result<()> {
        if self.q1.len() > Q1_BASIS.len() {
            return Err(Error::FlowSpec(format!("q1 has at most {} coefficients", Q1_BASIS.len())));
        }
        if self.q2.len() > Q2_BASIS.len() {
            return Err(Error::FlowSpec(format!("q2 has at most {} coefficients", Q2_BASIS.len())));
        }
        let all = std::iter::once(self.a).chain(self.q1.iter().copied()).chain(self.q2.iter().copied()).chain(self.hcf);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::FlowSpec("coefficients must be finite".into()));
        }
        let ahcf_only = self.a != 0.0 || self.q1.iter().chain(&self.q2).any(|&v| v != 0.0);
        if self.family != FlowFamily::Ahcf && ahcf_only {
            return Err(Error::FlowSpec("a, q1 and q2 apply to ahcf only".into()));
        }
        if self.family != FlowFamily::Hcf && self.hcf.iter().any(|&v| v != 0.0) {
            return Err(Error::FlowSpec("a1..a4 apply to hcf only".into()));
        }
        Ok(())
    }
}

/// The `q1` basis tensors at a point.
pub fn q1_basis(ct: &ClassifiedTensors) -> Vec<Tensor> {
    let mut out = vec![ct.bi(1).clone(), ct.bi(2).clone(), ct.bi(3).clone(), ct.bi(5).clone()];
    for i in [4, 6, 8] {
        out.push(sym(ct.bi(i)));
    }
    for i in 1..=4 {
        out.push(ct.g.scaled(ct.ei(i)));
    }
    out
}

/// The `q2` basis tensors at a point.
pub fn q2_basis(ct: &ClassifiedTensors) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = (1..=10).map(|i| ct.bi_j(i)).collect();
    for i in 1..=4 {
        out.push(ct.omega.scaled(ct.ei(i)));
    }
    out
}

fn combine(basis: &[Tensor], coeffs: &[f64], n: usize) -> Tensor {
    let mut acc = Tensor::covariant(n, 2, vec![0.0; n * n]);
    for (t, &c) in basis.iter().zip(coeffs) {
        if c != 0.0 {
            acc = acc.axpy(c, t);
        }
    }
    acc
}

fn rel(t: &Tensor, scale: f64) -> f64 {
    t.norm() / scale.max(ZERO_GUARD)
}

/// Residuals of the five deformation relations, relative to
/// `max(‖h‖, ‖K‖)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeformationResiduals {
    /// `h − h^T`.
    pub h_symmetric: f64,
    /// `K^{(1,1)}`.
    pub k_type0220: f64,
    /// `K^{sym}J − h^{(0,2)+(2,0)}`.
    pub k_sym_j: f64,
    /// `η^{(0,2)+(2,0)} − K^{skew}`.
    pub eta_0220: f64,
    /// `η^{(1,1)} − h^{(1,1)}J`.
    pub eta_11: f64,
}

impl DeformationResiduals {
    pub fn max(&self) -> f64 {
        [self.h_symmetric, self.k_type0220, self.k_sym_j, self.eta_0220, self.eta_11]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("h-symmetric", self.h_symmetric),
            ("k-type0220", self.k_type0220),
            ("k-sym-j", self.k_sym_j),
            ("eta-0220", self.eta_0220),
            ("eta-11", self.eta_11),
        ]
    }
}

/// `η = h(J·, ·) + K`.
pub fn eta_of(h: &Tensor, k: &Tensor, j: &Tensor) -> Tensor {
    compose_j(h, j).add(k)
}

pub fn validate_deformation(h: &Tensor, k: &Tensor, j: &Tensor) -> DeformationResiduals {
    let scale = h.norm().max(k.norm());
    let eta = eta_of(h, k, j);
    DeformationResiduals {
        h_symmetric: rel(&h.sub(&h.transpose()), scale),
        k_type0220: rel(&part11(k, j), scale),
        k_sym_j: rel(&compose_j(&sym(k), j).sub(&part0220(h, j)), scale),
        eta_0220: rel(&part0220(&eta, j).sub(&skew(k)), scale),
        eta_11: rel(&part11(&eta, j).sub(&compose_j(&part11(h, j), j)), scale),
    }
}

/// A right-hand side `(η, h, K)` at a point, covariant in chart coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct FlowRhs {
    pub eta: Tensor,
    pub h: Tensor,
    pub k: Tensor,
}

/// `ΔJ + 𝒩 + ℛ`.
fn k_core(ct: &ClassifiedTensors) -> Tensor {
    ct.lap_j.add(&ct.script_n).add(&ct.script_r)
}

fn ric(p: &LcPackage) -> Tensor {
    Tensor::covariant(p.n, 2, p.ric.clone())
}

/// `h = −2Ric + aL_{θ♯}g + Q₁`, `K = ΔJ + 𝒩 + ℛ + aL_{θ♯}J + Q₂`.
pub fn rhs_ahcf(p: &LcPackage, ct: &ClassifiedTensors, spec: &FlowSpec) -> Result<FlowRhs> {
    if spec.family != FlowFamily::Ahcf {
        return Err(Error::FlowSpec("rhs_ahcf needs an ahcf spec".into()));
    }
    spec.validate()?;
    let n = p.n;
    let q1 = combine(&q1_basis(ct), &spec.q1, n);
    let q2 = combine(&q2_basis(ct), &spec.q2, n);
    let qs = q1.norm().max(q2.norm());
    if qs > 0.0 {
        let checks = [
            ("Q1 is not symmetric", rel(&skew(&q1), qs)),
            ("Q2 is not (0,2)+(2,0)", rel(&part11(&q2, &ct.j), qs)),
            (
                "Q1^(0,2)+(2,0) differs from Q2^sym J",
                rel(&part0220(&q1, &ct.j).sub(&compose_j(&sym(&q2), &ct.j)), qs),
            ),
        ];
        for (what, r) in checks {
            if r > SPEC_TOL {
                return Err(Error::FlowSpec(format!("{what} (relative residual {r:e})")));
            }
        }
    }
    let mut h = ric(p).scaled(-2.0).add(&q1);
    let mut k = k_core(ct).add(&q2);
    if spec.a != 0.0 {
        let theta = gauge_fields(p).theta_sharp;
        h = h.axpy(spec.a, &Tensor::covariant(n, 2, lie_derivative_g(&theta, p)));
        k = k.axpy(spec.a, &Tensor::covariant(n, 2, lie_derivative_j(&theta, p)));
    }
    Ok(FlowRhs {
        eta: eta_of(&h, &k, &ct.j),
        h,
        k,
    })
}

/// The symplectic curvature flow right-hand side with its consistency
/// residuals.
#[derive(Clone, Debug, Serialize)]
pub struct ScfRhs {
    pub rhs: FlowRhs,
    /// `‖h^{(1,1)} − (−2Ric^{(1,1)} + ½B¹ − B²)‖`, relative.
    pub h11_residual: f64,
    /// `‖η^{(0,2)+(2,0)} − (ΔJ + 𝒩)‖`, relative.
    pub k_skew_residual: f64,
}

impl ScfRhs {
    pub fn max_residual(&self) -> f64 {
        self.h11_residual.max(self.k_skew_residual)
    }

    /// Errors if a consistency residual exceeds `tol`.
    pub fn ensure_consistent(&self, tol: f64) -> Result<()> {
        if self.max_residual() > tol {
            return Err(Error::FlowSpec(format!(
                "symplectic curvature flow consistency residuals ({:e}, {:e}) exceed {tol:e}",
                self.h11_residual, self.k_skew_residual
            )));
        }
        Ok(())
    }
}

fn scf_with_sign(p: &LcPackage, ct: &ClassifiedTensors, chern: &ChernPackage, sign: f64) -> ScfRhs {
    let j = &ct.j;
    let eta = chern.p_tensor().scaled(sign);
    let k = k_core(ct);
    // η^{(1,1)} = h^{(1,1)}J and h^{(0,2)+(2,0)} = K^{sym}J
    let h11 = compose_j(&part11(&eta, j), j).scaled(-1.0);
    let h = h11.add(&compose_j(&sym(&k), j));
    let target = part11(&ric(p), j).scaled(-2.0).axpy(0.5, ct.bi(1)).sub(ct.bi(2));
    // second-order quantities are compared on the scale of Ric and |DJ|²
    let floor = ric(p).norm().max(ct.ei(1).abs());
    let h11_residual = rel(&h11.sub(&target), target.norm().max(h11.norm()).max(floor));
    let lap_n = ct.lap_j.add(&ct.script_n);
    let e0220 = part0220(&eta, j);
    let k_skew_residual = rel(&e0220.sub(&lap_n), lap_n.norm().max(e0220.norm()).max(floor));
    ScfRhs {
        rhs: FlowRhs { eta, h, k },
        h11_residual,
        k_skew_residual,
    }
}

/// Tolerance on the SCF consistency residuals.
pub const SCF_TOL: f64 = 1e-8;

fn require_ak(jet: &StructureJet) -> Result<()> {
    if !matches!(jet.setting, Setting::AlmostKahler | Setting::Kahler) {
        return Err(Error::SettingMismatch(format!(
            "the symplectic curvature flow needs an almost Kähler structure, got {}",
            jet.setting.name()
        )));
    }
    Ok(())
}

/// `η = s·P`, `K = ΔJ + 𝒩 + ℛ`, `h` recovered from `(η, K)`. Errors if a
/// consistency residual exceeds [`SCF_TOL`].
pub fn rhs_scf(jet: &StructureJet, p: &LcPackage, ct: &ClassifiedTensors, chern: &ChernPackage) -> Result<ScfRhs> {
    require_ak(jet)?;
    let r = scf_with_sign(p, ct, chern, SCF_SIGN);
    r.ensure_consistent(SCF_TOL)?;
    Ok(r)
}

/// Maximum consistency residual for `s = +1` and `s = −1`.
pub fn scf_sign_resolution(p: &LcPackage, ct: &ClassifiedTensors, chern: &ChernPackage) -> (f64, f64) {
    (
        scf_with_sign(p, ct, chern, 1.0).max_residual(),
        scf_with_sign(p, ct, chern, -1.0).max_residual(),
    )
}

/// `η = S + a₁B¹J + a₂B²J + a₃(B⁵)^{(1,1)}J + a₄(B⁶)^{sym}J`, `K = 0`.
pub fn rhs_hcf(
    jet: &StructureJet,
    ct: &ClassifiedTensors,
    chern: &ChernPackage,
    spec: &FlowSpec,
) -> Result<FlowRhs> {
    let (rhs, scale) = hcf_unchecked(jet, ct, chern, spec)?;
    let r = rel(&part0220(&rhs.eta, &ct.j), scale);
    if r > SPEC_TOL {
        return Err(Error::FlowSpec(format!("η is not (1,1) (relative residual {r:e})")));
    }
    Ok(rhs)
}

/// The HCF right-hand side and the size of the summands of `η`.
fn hcf_unchecked(
    jet: &StructureJet,
    ct: &ClassifiedTensors,
    chern: &ChernPackage,
    spec: &FlowSpec,
) -> Result<(FlowRhs, f64)> {
    if spec.family != FlowFamily::Hcf {
        return Err(Error::FlowSpec("rhs_hcf needs an hcf spec".into()));
    }
    spec.validate()?;
    if !matches!(jet.setting, Setting::Hermitian | Setting::Kahler) {
        return Err(Error::SettingMismatch(format!(
            "the Hermitian curvature flow needs a Hermitian structure, got {}",
            jet.setting.name()
        )));
    }
    let j = &ct.j;
    let n = ct.n;
    let terms = [
        ct.bi_j(1),
        ct.bi_j(2),
        compose_j(&part11(ct.bi(5), j), j),
        compose_j(&sym(ct.bi(6)), j),
    ];
    let s = chern.s_tensor();
    let scale = terms
        .iter()
        .zip(spec.hcf)
        .fold(s.norm(), |acc, (t, c)| acc.max(c.abs() * t.norm()));
    let eta = combine(&terms, &spec.hcf, n).add(&s);
    let h = compose_j(&part11(&eta, j), j).scaled(-1.0);
    let rhs = FlowRhs {
        eta,
        h,
        k: Tensor::covariant(n, 2, vec![0.0; n * n]),
    };
    Ok((rhs, scale))
}

/// Evaluates the flow at a jet without the consistency and type checks, as
/// needed at intermediate integrator stages.
pub fn flow_rhs(jet: &StructureJet, spec: &FlowSpec) -> Result<FlowRhs> {
    let p = levi_civita_unchecked(jet);
    let ct = classified(&p);
    match spec.family {
        FlowFamily::Ahcf => rhs_ahcf(&p, &ct, spec),
        FlowFamily::Scf => {
            let c = hermitian_connection(&p, CHERN_T, Family::AlmostHermitian)?;
            require_ak(jet)?;
            Ok(scf_with_sign(&p, &ct, &c, SCF_SIGN).rhs)
        }
        FlowFamily::Hcf => {
            let c = hermitian_connection(&p, CHERN_T, Family::AlmostHermitian)?;
            Ok(hcf_unchecked(jet, &ct, &c, spec)?.0)
        }
    }
}

/// Thresholds for the per-step monitors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorThresholds {
    pub compatibility: f64,
    pub j_squared: f64,
    pub d_omega: f64,
    pub nijenhuis: f64,
    pub eta_type11: f64,
}

impl Default for MonitorThresholds {
    fn default() -> Self {
        MonitorThresholds {
            compatibility: 1e-6,
            j_squared: 1e-6,
            d_omega: 1e-6,
            nijenhuis: 1e-6,
            eta_type11: 1e-6,
        }
    }
}

/// Invariant residuals of a state. `d_omega` is recorded for SCF runs,
/// `nijenhuis` and `eta_type11` for HCF runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Monitors {
    /// `‖JfᵀGJf − G‖/‖G‖`.
    pub compatibility: f64,
    /// `max |Jf² + I|`.
    pub j_squared: f64,
    pub min_eig_g: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nijenhuis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_type11: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowRecord {
    pub t: f64,
    /// Frame metric `G`, row-major.
    #[serde(rename = "G")]
    pub g: Vec<f64>,
    /// Frame complex structure `Jf`, row-major.
    #[serde(rename = "Jf")]
    pub jf: Vec<f64>,
    pub monitors: Monitors,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlowStatus {
    Completed,
    /// `G` stopped being positive definite between the last recorded time and `t`.
    Singular { t: f64, min_eig: f64 },
    MonitorBreach { t: f64, monitor: String, value: f64, threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub structure: String,
    pub spec: FlowSpec,
    pub t_end: f64,
    pub dt: f64,
    pub records: Vec<FlowRecord>,
    pub status: FlowStatus,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.status == FlowStatus::Completed
    }

    pub fn last(&self) -> &FlowRecord {
        self.records.last().expect("trajectory has the initial state")
    }

    /// Largest entry change of `(G, Jf)` between the first and last records.
    pub fn drift(&self) -> f64 {
        let (a, b) = (&self.records[0], self.last());
        a.g.iter()
            .zip(&b.g)
            .chain(a.jf.iter().zip(&b.jf))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Largest recorded value of a monitor.
    pub fn max_monitor(&self, f: impl Fn(&Monitors) -> Option<f64>) -> f64 {
        self.records
            .iter()
            .filter_map(|r| f(&r.monitors))
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }
}

fn min_eigenvalue(n: usize, g: &[f64]) -> f64 {
    let m = DMatrix::from_row_slice(n, n, g);
    let s = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn frame_residuals(n: usize, g: &[f64], jf: &[f64]) -> (f64, f64) {
    let jt = mat::transpose(n, jf);
    let jgj = mat::mul(n, &mat::mul(n, &jt, g), jf);
    let d: Vec<f64> = jgj.iter().zip(g).map(|(a, b)| a - b).collect();
    let gn = crate::tensor::norm(g);
    let j2 = mat::mul(n, jf, jf);
    let mut sq: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let id = if a == b { 1.0 } else { 0.0 };
            sq = sq.max((j2[a * n + b] + id).abs());
        }
    }
    (crate::tensor::norm(&d) / gn.max(ZERO_GUARD), sq)
}

/// The frame derivatives `(dG/dt, dJf/dt)` of `spec` at the frame state.
fn frame_rhs(model: &Homogeneous, g: &[f64], jf: &[f64], spec: &FlowSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.dim();
    let state = Homogeneous::with_tolerance(model.model(), n, g.to_vec(), jf.to_vec(), STAGE_TOL)?;
    let x = state.base_point();
    let jet = state.jet_at(&x)?;
    let rhs = flow_rhs(&jet, spec)?;
    let e = state.frame_at(&x);
    let theta = mat::inverse(n, &e).ok_or_else(|| Error::OutsideDomain("frame degenerates".into()))?;
    // h_f = Eᵀ h E, K_f = Θ K^♯ E with K^♯^p_a = g^{pb} K_ab
    let hf = mat::mul(n, &mat::mul(n, &mat::transpose(n, &e), rhs.h.data()), &e);
    let ginv = mat::inverse(n, &jet.g).ok_or_else(|| Error::NotSpd("metric is singular".into()))?;
    let kmix = mat::mul(n, &ginv, &mat::transpose(n, rhs.k.data()));
    let kf = mat::mul(n, &mat::mul(n, &theta, &kmix), &e);
    Ok((hf, kf))
}

fn monitors_at(model: &Homogeneous, g: &[f64], jf: &[f64], spec: &FlowSpec) -> Result<Monitors> {
    let n = model.dim();
    let (compatibility, j_squared) = frame_residuals(n, g, jf);
    let min_eig_g = min_eigenvalue(n, g);
    let mut m = Monitors {
        compatibility,
        j_squared,
        min_eig_g,
        d_omega: None,
        nijenhuis: None,
        eta_type11: None,
    };
    if spec.family == FlowFamily::Ahcf {
        return Ok(m);
    }
    let state = Homogeneous::with_tolerance(model.model(), n, g.to_vec(), jf.to_vec(), STAGE_TOL)?;
    let jet = state.jet_at(&state.base_point())?;
    let p = levi_civita_unchecked(&jet);
    match spec.family {
        FlowFamily::Scf => {
            m.d_omega = Some(if crate::tensor::norm(&p.dj) == 0.0 { 0.0 } else { dj_cyclic_residual(&p) });
        }
        FlowFamily::Hcf => {
            m.nijenhuis = Some(if crate::tensor::norm(&p.dj) == 0.0 { 0.0 } else { nijenhuis_residual(&p) });
            let ct = classified(&p);
            let c = hermitian_connection(&p, CHERN_T, Family::AlmostHermitian)?;
            let (rhs, scale) = hcf_unchecked(&jet, &ct, &c, spec)?;
            m.eta_type11 = Some(rel(&part0220(&rhs.eta, &ct.j), scale));
        }
        FlowFamily::Ahcf => {}
    }
    Ok(m)
}

fn breach(m: &Monitors, th: &MonitorThresholds) -> Option<(&'static str, f64, f64)> {
    let checks = [
        ("compatibility", Some(m.compatibility), th.compatibility),
        ("j-squared", Some(m.j_squared), th.j_squared),
        ("d-omega", m.d_omega, th.d_omega),
        ("nijenhuis", m.nijenhuis, th.nijenhuis),
        ("eta-type11", m.eta_type11, th.eta_type11),
    ];
    checks
        .into_iter()
        .find_map(|(name, v, t)| v.filter(|v| !(*v <= t)).map(|v| (name, v, t)))
}

fn axpy(x: &[f64], c: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + c * b).collect()
}

/// Classical fixed-step RK4 on the frame matrices `(G, Jf)` of a
/// left-invariant model, evaluating the flow at the model's base point.
pub fn integrate_homogeneous(
    model: &Homogeneous,
    spec: &FlowSpec,
    t_end: f64,
    dt: f64,
    thresholds: &MonitorThresholds,
) -> Result<Trajectory> {
    spec.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::FlowSpec(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::FlowSpec(format!("t_end must be non-negative, got {t_end}")));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut g = model.frame_metric().to_vec();
    let mut jf = model.frame_j().to_vec();
    // surfaces setting errors before any stepping
    frame_rhs(model, &g, &jf, spec)?;
    let mut traj = Trajectory {
        structure: model.name(),
        spec: spec.clone(),
        t_end,
        dt,
        records: vec![FlowRecord {
            t: 0.0,
            g: g.clone(),
            jf: jf.clone(),
            monitors: monitors_at(model, &g, &jf, spec)?,
        }],
        status: FlowStatus::Completed,
    };
    for step in 0..steps {
        let t0 = step as f64 * dt;
        let t1 = ((step + 1) as f64 * dt).min(t_end);
        let h = t1 - t0;
        let stage = |gs: &[f64], js: &[f64]| frame_rhs(model, gs, js, spec);
        let result = (|| -> Result<(Vec<f64>, Vec<f64>)> {
            let (k1g, k1j) = stage(&g, &jf)?;
            let (k2g, k2j) = stage(&axpy(&g, 0.5 * h, &k1g), &axpy(&jf, 0.5 * h, &k1j))?;
            let (k3g, k3j) = stage(&axpy(&g, 0.5 * h, &k2g), &axpy(&jf, 0.5 * h, &k2j))?;
            let (k4g, k4j) = stage(&axpy(&g, h, &k3g), &axpy(&jf, h, &k3j))?;
            let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
                (0..x.len())
                    .map(|e| x[e] + h / 6.0 * (a[e] + 2.0 * b[e] + 2.0 * c[e] + d[e]))
                    .collect()
            };
            Ok((comb(&g, &k1g, &k2g, &k3g, &k4g), comb(&jf, &k1j, &k2j, &k3j, &k4j)))
        })();
        let (ng, nj) = match result {
            Ok(v) => v,
            Err(Error::NotSpd(_)) => {
                traj.status = FlowStatus::Singular {
                    t: t1,
                    min_eig: f64::NAN,
                };
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        let n = model.dim();
        let min_eig = min_eigenvalue(n, &ng);
        if !(min_eig > 0.0) {
            traj.status = FlowStatus::Singular { t: t1, min_eig };
            return Ok(traj);
        }
        let monitors = monitors_at(model, &ng, &nj, spec)?;
        if let Some((name, value, threshold)) = breach(&monitors, thresholds) {
            traj.status = FlowStatus::MonitorBreach {
                t: t1,
                monitor: name.to_string(),
                value,
                threshold,
            };
            return Ok(traj);
        }
        g = ng;
        jf = nj;
        traj.records.push(FlowRecord {
            t: t1,
            g: g.clone(),
            jf: jf.clone(),
            monitors,
        });
    }
    Ok(traj)
}

//! Hermitian connections `∇ = D + A`, their torsion and curvature.
//!
//! `g(∇_X Y, Z) = g(D_X Y, Z) + A(X, Y, Z)`. The families below follow the
//! classification of first-order even-type Hermitian connections; `t = 1` is
//! the Chern connection.

use serde::Serialize;

use crate::autodiff::{Jet1, Scalar};
use crate::riemann::{curvature, dj_cyclic_residual, j_in_slot, levi_civita, nijenhuis_residual, LcPackage};
use crate::structures::{Setting, StructureProvider};
use crate::tensor::{contract_pair, norm, rel_residual, Tensor};
use crate::{Error, Result};

/// Relative residual above which a structure is not treated as integrable
/// (resp. almost Kähler) when a setting-specific family is requested.
pub const SETTING_TOL: f64 = 1e-6;

/// The member of the almost Hermitian family singled out by the torsion
/// condition.
pub const CHERN_T: f64 = 1.0;

/// Which family of Hermitian connections to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `½DJ(X,JY,Z) + t/4 (DJ(JY,Z,X) + DJ(JZ,X,Y) − DJ(Y,Z,JX) − DJ(Z,X,JY))`.
    AlmostHermitian,
    /// `½DJ(X,JY,Z) − t/2 (DJ(Y,Z,JX) + DJ(Z,X,JY))`; requires `N_J = 0`.
    Hermitian,
    /// `½DJ(X,JY,Z)`; requires `dω = 0`.
    AlmostKahler,
}

impl Family {
    pub fn for_setting(setting: Setting) -> Family {
        match setting {
            Setting::Generic => Family::AlmostHermitian,
            Setting::Hermitian => Family::Hermitian,
            Setting::AlmostKahler | Setting::Kahler => Family::AlmostKahler,
        }
    }
}

/// Torsion conditions distinguishing members of the families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TorsionType {
    /// `Tor(JX, JY, Z) = −Tor(X, Y, Z)`.
    Type0220,
    /// `Tor(JX, JY, Z) = Tor(X, Y, Z)`.
    Type11,
    /// `Tor` totally skew.
    TotallySkew,
}

/// The torsion type expected of the family member `t` in `setting`, if the
/// setting determines one.
pub fn expected_torsion(setting: Setting, t: f64) -> Option<TorsionType> {
    match setting {
        Setting::AlmostKahler | Setting::Kahler => Some(TorsionType::Type0220),
        Setting::Hermitian if t == 1.0 => Some(TorsionType::Type0220),
        Setting::Hermitian if t == 0.0 => Some(TorsionType::Type11),
        Setting::Hermitian if t == -1.0 => Some(TorsionType::TotallySkew),
        Setting::Generic if t == CHERN_T => Some(TorsionType::Type0220),
        _ => None,
    }
}

fn family_a<S: Scalar>(n: usize, dj: &[S], j: &[S], family: Family, t: f64) -> Vec<S> {
    let s0 = j_in_slot(dj, n, 0, j);
    let s1 = j_in_slot(dj, n, 1, j);
    let s2 = j_in_slot(dj, n, 2, j);
    let ix = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut out = vec![S::zero(); n * n * n];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let base = s1[ix(x, y, z)].scale(0.5);
                out[ix(x, y, z)] = match family {
                    Family::AlmostKahler => base,
                    Family::AlmostHermitian => {
                        base + (s0[ix(y, z, x)] + s0[ix(z, x, y)] - s2[ix(y, z, x)] - s2[ix(z, x, y)])
                            .scale(0.25 * t)
                    }
                    Family::Hermitian => base - (s2[ix(y, z, x)] + s2[ix(z, x, y)]).scale(0.5 * t),
                };
            }
        }
    }
    out
}

fn check_family(p: &LcPackage, family: Family) -> Result<()> {
    match family {
        Family::Hermitian => {
            let r = nijenhuis_residual(p);
            if r > SETTING_TOL {
                return Err(Error::SettingMismatch(format!(
                    "Hermitian family requested but N_J relative residual is {r:e}"
                )));
            }
        }
        Family::AlmostKahler => {
            let r = dj_cyclic_residual(p);
            if r > SETTING_TOL {
                return Err(Error::SettingMismatch(format!(
                    "almost Kähler family requested but dω relative residual is {r:e}"
                )));
            }
        }
        Family::AlmostHermitian => {}
    }
    Ok(())
}

/// `A` and `∂_m A_xyz` at `[m, x, y, z]` for the family member `t`.
pub fn hermitian_a(p: &LcPackage, t: f64, family: Family) -> Result<(Vec<f64>, Vec<f64>)> {
    check_family(p, family)?;
    Ok(hermitian_a_unchecked(p, t, family))
}

fn hermitian_a_unchecked(p: &LcPackage, t: f64, family: Family) -> (Vec<f64>, Vec<f64>) {
    let n = p.n;
    let a1 = family_a::<Jet1>(n, &p.dj1, &p.j1, family, t);
    let len = a1.len();
    let mut da = vec![0.0; n * len];
    for m in 0..n {
        for e in 0..len {
            da[m * len + e] = a1[e].d[m];
        }
    }
    (a1.iter().map(|v| v.v).collect(), da)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChernPackage {
    pub n: usize,
    pub t: f64,
    pub family: Family,
    pub a: Vec<f64>,
    /// `∂_m A_xyz` at `[m, x, y, z]`.
    pub da: Vec<f64>,
    /// Connection coefficients `∇_i ∂_j = C^k_ij ∂_k` at `[k, i, j]`.
    pub coeff: Vec<f64>,
    /// `g(Tor(X, Y), Z)`.
    pub torsion: Vec<f64>,
    /// `g(Ω(X, Y) Z, W)`.
    pub omega: Vec<f64>,
    /// `P(X, Y) = Ω(X, Y, e_i, J e_i)`.
    pub p: Vec<f64>,
    /// `S(X, Y) = Ω(e_i, J e_i, X, Y)`.
    pub s: Vec<f64>,
}

/// The connection of `family` at parameter `t`, with torsion and curvature.
pub fn hermitian_connection(pkg: &LcPackage, t: f64, family: Family) -> Result<ChernPackage> {
    let (a, da) = hermitian_a(pkg, t, family)?;
    let n = pkg.n;
    let n3 = n * n * n;
    let zero = Jet1::constant(0.0);
    // C^k_ij = Γ^k_ij + g^{kl} A_ijl, with first derivatives
    let mut c1 = vec![zero; n3];
    for k in 0..n {
        for i in 0..n {
            for jj in 0..n {
                let e = (k * n + i) * n + jj;
                let mut acc = Jet1::from_fn(pkg.gamma[e], n, |m| pkg.dgamma[m * n3 + e]);
                for l in 0..n {
                    let al = (i * n + jj) * n + l;
                    acc += pkg.ginv1[k * n + l] * Jet1::from_fn(a[al], n, |m| da[m * n3 + al]);
                }
                c1[e] = acc;
            }
        }
    }
    let coeff: Vec<f64> = c1.iter().map(|v| v.v).collect();
    let mut dcoeff = vec![0.0; n * n3];
    for m in 0..n {
        for e in 0..n3 {
            dcoeff[m * n3 + e] = c1[e].d[m];
        }
    }
    let mut torsion = vec![0.0; n3];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                torsion[(x * n + y) * n + z] = (0..n)
                    .map(|k| pkg.g[z * n + k] * (coeff[(k * n + x) * n + y] - coeff[(k * n + y) * n + x]))
                    .sum();
            }
        }
    }
    let (_, omega) = curvature(n, &coeff, &dcoeff, &pkg.g);
    let p = contract_pair(&omega, n, 4, 2, 3, &pkg.w);
    let s = contract_pair(&omega, n, 4, 0, 1, &pkg.w);
    Ok(ChernPackage {
        n,
        t,
        family,
        a,
        da,
        coeff,
        torsion,
        omega,
        p,
        s,
    })
}

/// The Chern connection: the almost Hermitian family at `t = 1`, checked
/// against the torsion condition.
pub fn chern_connection(pkg: &LcPackage, tol: f64) -> Result<ChernPackage> {
    let c = hermitian_connection(pkg, CHERN_T, Family::AlmostHermitian)?;
    let r = c.torsion_residual(pkg, TorsionType::Type0220);
    if r > tol {
        return Err(Error::TorsionType(r));
    }
    Ok(c)
}

/// Residuals of the Hermitian conditions and torsion types.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConnectionResiduals {
    /// `A(X,Y,Z) + A(X,Z,Y)`.
    pub metric_identity: f64,
    /// `A(X,JY,Z) + A(X,Y,JZ) + DJ(X,Y,Z)`.
    pub j_identity: f64,
    /// `∇g` from the coefficients.
    pub metric_coeff: f64,
    /// `∇J` from the coefficients.
    pub j_coeff: f64,
    pub torsion_0220: f64,
    pub torsion_11: f64,
    pub torsion_skew: f64,
}

impl ChernPackage {
    pub fn p_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 2, self.p.clone())
    }
    pub fn s_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 2, self.s.clone())
    }
    pub fn a_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 3, self.a.clone())
    }
    pub fn torsion_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 3, self.torsion.clone())
    }
    pub fn omega_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 4, self.omega.clone())
    }

    fn scale(&self, pkg: &LcPackage) -> f64 {
        norm(&pkg.dj).max(norm(&self.a))
    }

    /// Relative residual of the given torsion condition.
    pub fn torsion_residual(&self, pkg: &LcPackage, kind: TorsionType) -> f64 {
        let n = self.n;
        let ix = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
        let t = &self.torsion;
        let mut r = vec![0.0; t.len()];
        match kind {
            TorsionType::Type0220 | TorsionType::Type11 => {
                let sign = if kind == TorsionType::Type0220 { 1.0 } else { -1.0 };
                let tj = j_in_slot(&j_in_slot(t, n, 0, &pkg.j), n, 1, &pkg.j);
                for e in 0..t.len() {
                    r[e] = tj[e] + sign * t[e];
                }
            }
            TorsionType::TotallySkew => {
                for x in 0..n {
                    for y in 0..n {
                        for z in 0..n {
                            r[ix(x, y, z)] = t[ix(x, y, z)] + t[ix(x, z, y)];
                        }
                    }
                }
            }
        }
        rel_residual(&r, self.scale(pkg))
    }

    pub fn residuals(&self, pkg: &LcPackage) -> ConnectionResiduals {
        let n = self.n;
        let len = self.a.len();
        let ix = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
        let a1 = j_in_slot(&self.a, n, 1, &pkg.j);
        let a2 = j_in_slot(&self.a, n, 2, &pkg.j);
        let mut rg = vec![0.0; len];
        let mut rj = vec![0.0; len];
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    rg[ix(x, y, z)] = self.a[ix(x, y, z)] + self.a[ix(x, z, y)];
                    rj[ix(x, y, z)] = a1[ix(x, y, z)] + a2[ix(x, y, z)] + pkg.dj[ix(x, y, z)];
                }
            }
        }
        // the coordinate derivatives of g and J are recovered from the jets
        let dg: Vec<f64> = pkg.dg1.iter().map(|v| v.v).collect();
        let djp = self.j_partials(pkg);
        let mg = pkg.metric_defect(&self.coeff, &dg);
        let mj = pkg.j_defect(&self.coeff, &djp);
        let s = self.scale(pkg);
        ConnectionResiduals {
            metric_identity: rel_residual(&rg, s),
            j_identity: rel_residual(&rj, s),
            metric_coeff: rel_residual(&mg, norm(&dg).max(s)),
            j_coeff: rel_residual(&mj, norm(&djp).max(s)),
            torsion_0220: self.torsion_residual(pkg, TorsionType::Type0220),
            torsion_11: self.torsion_residual(pkg, TorsionType::Type11),
            torsion_skew: self.torsion_residual(pkg, TorsionType::TotallySkew),
        }
    }

    fn j_partials(&self, pkg: &LcPackage) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        for m in 0..n {
            for e in 0..n * n {
                out[m * n * n + e] = pkg.j1[e].d[m];
            }
        }
        out
    }
}

/// The 3-form `dP` at `x` by central differences of the Chern `P` field
/// (step `step`); returns the largest component.
pub fn chern_form_closedness(provider: &dyn StructureProvider, x: &[f64], step: f64) -> Result<f64> {
    let n = provider.dim();
    let p_at = |y: &[f64]| -> Result<Vec<f64>> {
        let pkg = levi_civita(&provider.jet_at(y)?)?;
        Ok(hermitian_connection(&pkg, CHERN_T, Family::AlmostHermitian)?.p)
    };
    let mut dp = vec![vec![0.0; n * n]; n];
    for (m, slot) in dp.iter_mut().enumerate() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[m] += step;
        xm[m] -= step;
        let (pp, pm) = (p_at(&xp)?, p_at(&xm)?);
        for e in 0..n * n {
            slot[e] = (pp[e] - pm[e]) / (2.0 * step);
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let v = dp[a][b * n + c] + dp[b][c * n + a] + dp[c][a * n + b];
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

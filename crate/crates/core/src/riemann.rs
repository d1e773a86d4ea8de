//! Levi-Civita calculus from a 2-jet.
//!
//! Quantities that are needed together with their first derivatives
//! (Christoffel symbols, `DJ`, the Lee form) are computed over [`Jet1`]
//! numbers seeded from the jet, so `∂Γ`, `∂DJ` and `∂θ` are exact whenever
//! the jet is.

use serde::Serialize;

use crate::autodiff::{mat, Jet1, Scalar};
use crate::structures::StructureJet;
use crate::tensor::{norm, rel_residual, Tensor, Variance};
use crate::Result;

/// Jet tolerance accepted by [`levi_civita`].
pub const JET_TOL: f64 = 1e-8;

/// Levi-Civita data at a point. Arrays are row-major, fully covariant unless
/// stated otherwise.
#[derive(Clone, Debug)]
pub struct LcPackage {
    pub n: usize,
    pub g: Vec<f64>,
    pub ginv: Vec<f64>,
    /// `J^a_b` at `[a, b]`.
    pub j: Vec<f64>,
    /// `ω(e_a, e_b)` at `[a, b]`.
    pub omega: Vec<f64>,
    /// Complex-trace weight: `Σ_i T(e_i, J e_i) = Σ T[p, q] w[p, q]`.
    pub w: Vec<f64>,
    /// `Γ^k_ij` at `[k, i, j]`.
    pub gamma: Vec<f64>,
    /// `∂_m Γ^k_ij` at `[m, k, i, j]`.
    pub dgamma: Vec<f64>,
    /// `(D_c J)^a_b` at `[c, a, b]`.
    pub nabla_j: Vec<f64>,
    /// `DJ(X, Y, Z) = g((D_X J) Y, Z)`.
    pub dj: Vec<f64>,
    /// `∂_m DJ_abc` at `[m, a, b, c]`.
    pub dj_partial: Vec<f64>,
    /// `D²J(X, Y, Z, W) = (D_X DJ)(Y, Z, W)`.
    pub d2j: Vec<f64>,
    /// `R^l_ijk` at `[i, j, k, l]`, i.e. the `l`-th component of `R(e_i, e_j) e_k`.
    pub riem: Vec<f64>,
    pub rm: Vec<f64>,
    pub ric: Vec<f64>,
    pub scal: f64,
    /// `ρ'(X, Y) = Rm(JX, Y, e_i, J e_i)`.
    pub rho_prime: Vec<f64>,
    /// `s' = Rm(e_i, J e_i, e_j, J e_j)`.
    pub s_prime: f64,
    /// Lee form `θ(X) = DJ(e_i, J e_i, X)`.
    pub theta: Vec<f64>,
    /// `N^k(e_x, e_y)` at `[x, y, k]`.
    pub nij: Vec<f64>,
    pub(crate) ginv1: Vec<Jet1>,
    pub(crate) j1: Vec<Jet1>,
    pub(crate) dg1: Vec<Jet1>,
    pub(crate) dj1: Vec<Jet1>,
    pub(crate) theta1: Vec<Jet1>,
}

fn seed1(n: usize, value: &[f64], deriv: &[f64]) -> Vec<Jet1> {
    let len = value.len();
    (0..len)
        .map(|e| Jet1::from_fn(value[e], n, |m| deriv[m * len + e]))
        .collect()
}

/// `T(.., J·, ..)` in slot `slot` of a rank-3 array over any scalar.
pub(crate) fn j_in_slot<S: Scalar>(t: &[S], n: usize, slot: usize, j: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let idx = [a, b, c];
                let mut acc = S::zero();
                for p in 0..n {
                    let mut src = idx;
                    src[slot] = p;
                    acc += j[p * n + idx[slot]] * t[(src[0] * n + src[1]) * n + src[2]];
                }
                out[(a * n + b) * n + c] = acc;
            }
        }
    }
    out
}

/// Curvature of the connection with coefficients `c[k, i, j]` (`∇_i ∂_j =
/// c^k_ij ∂_k`) and derivatives `dc[m, k, i, j]`. Returns `R^l_ijk` at
/// `[i, j, k, l]` and its lowering with `g` in the last slot.
pub fn curvature(n: usize, c: &[f64], dc: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n3 = n * n * n;
    let cf = |k: usize, i: usize, j: usize| c[(k * n + i) * n + j];
    let mut up = vec![0.0; n3 * n];
    for i in 0..n {
        for jj in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = dc[i * n3 + (l * n + jj) * n + k] - dc[jj * n3 + (l * n + i) * n + k];
                    for m in 0..n {
                        v += cf(l, i, m) * cf(m, jj, k) - cf(l, jj, m) * cf(m, i, k);
                    }
                    up[((i * n + jj) * n + k) * n + l] = v;
                }
            }
        }
    }
    let mut low = vec![0.0; n3 * n];
    for ijk in 0..n3 {
        for l in 0..n {
            let mut v = 0.0;
            for m in 0..n {
                v += g[l * n + m] * up[ijk * n + m];
            }
            low[ijk * n + l] = v;
        }
    }
    (up, low)
}

pub fn levi_civita(jet: &StructureJet) -> Result<LcPackage> {
    jet.validate(JET_TOL)?;
    Ok(levi_civita_unchecked(jet))
}

/// [`levi_civita`] without validating the jet.
pub fn levi_civita_unchecked(jet: &StructureJet) -> LcPackage {
    let n = jet.n;
    let n2 = n * n;
    let n3 = n2 * n;
    let g1 = seed1(n, &jet.g, &jet.dg);
    let j1 = seed1(n, &jet.j, &jet.dj);
    let dg1 = seed1(n, &jet.dg, &jet.ddg);
    let dj1_partial = seed1(n, &jet.dj, &jet.ddj);
    let ginv1 = mat::inverse(n, &g1).expect("metric is invertible");

    // Γ_ijl = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij), Γ^k_ij = g^{kl} Γ_ijl
    let dgf = |c: usize, a: usize, b: usize| dg1[(c * n + a) * n + b];
    let mut gamma1 = vec![Jet1::constant(0.0); n3];
    for k in 0..n {
        for i in 0..n {
            for jj in 0..n {
                let mut acc = Jet1::constant(0.0);
                for l in 0..n {
                    let low = (dgf(i, jj, l) + dgf(jj, i, l) - dgf(l, i, jj)).scale(0.5);
                    acc += ginv1[k * n + l] * low;
                }
                gamma1[(k * n + i) * n + jj] = acc;
            }
        }
    }
    let gm = |k: usize, i: usize, j: usize| gamma1[(k * n + i) * n + j];

    // (D_c J)^a_b = ∂_c J^a_b + Γ^a_cp J^p_b − Γ^p_cb J^a_p
    let mut nabla1 = vec![Jet1::constant(0.0); n3];
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut acc = dj1_partial[(c * n + a) * n + b];
                for p in 0..n {
                    acc += gm(a, c, p) * j1[p * n + b] - gm(p, c, b) * j1[a * n + p];
                }
                nabla1[(c * n + a) * n + b] = acc;
            }
        }
    }
    // DJ_cbz = g_za (D_c J)^a_b
    let mut dj1 = vec![Jet1::constant(0.0); n3];
    for c in 0..n {
        for b in 0..n {
            for z in 0..n {
                let mut acc = Jet1::constant(0.0);
                for a in 0..n {
                    acc += g1[z * n + a] * nabla1[(c * n + a) * n + b];
                }
                dj1[(c * n + b) * n + z] = acc;
            }
        }
    }
    // w[p, q] = Σ_r J^q_r g^{rp}
    let mut w1 = vec![Jet1::constant(0.0); n2];
    for p in 0..n {
        for q in 0..n {
            let mut acc = Jet1::constant(0.0);
            for r in 0..n {
                acc += j1[q * n + r] * ginv1[r * n + p];
            }
            w1[p * n + q] = acc;
        }
    }
    let mut theta1 = vec![Jet1::constant(0.0); n];
    for (x, th) in theta1.iter_mut().enumerate() {
        let mut acc = Jet1::constant(0.0);
        for p in 0..n {
            for q in 0..n {
                acc += dj1[(p * n + q) * n + x] * w1[p * n + q];
            }
        }
        *th = acc;
    }

    let val = |v: &[Jet1]| v.iter().map(|x| x.v).collect::<Vec<_>>();
    let der = |v: &[Jet1]| {
        let len = v.len();
        let mut out = vec![0.0; n * len];
        for m in 0..n {
            for e in 0..len {
                out[m * len + e] = v[e].d[m];
            }
        }
        out
    };
    let g = jet.g.clone();
    let j = jet.j.clone();
    let ginv = val(&ginv1);
    let gamma = val(&gamma1);
    let dgamma = der(&gamma1);
    let nabla_j = val(&nabla1);
    let dj = val(&dj1);
    let dj_partial = der(&dj1);
    let w = val(&w1);
    let theta = val(&theta1);

    let mut omega = vec![0.0; n2];
    for a in 0..n {
        for b in 0..n {
            omega[a * n + b] = (0..n).map(|m| j[m * n + a] * g[m * n + b]).sum();
        }
    }

    // D²J_mabc = ∂_m DJ_abc − Γ^p_ma DJ_pbc − Γ^p_mb DJ_apc − Γ^p_mc DJ_abp
    let gmv = |k: usize, i: usize, jj: usize| gamma[(k * n + i) * n + jj];
    let djv = |a: usize, b: usize, c: usize| dj[(a * n + b) * n + c];
    let mut d2j = vec![0.0; n3 * n];
    for m in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut v = dj_partial[m * n3 + (a * n + b) * n + c];
                    for p in 0..n {
                        v -= gmv(p, m, a) * djv(p, b, c)
                            + gmv(p, m, b) * djv(a, p, c)
                            + gmv(p, m, c) * djv(a, b, p);
                    }
                    d2j[((m * n + a) * n + b) * n + c] = v;
                }
            }
        }
    }

    let (riem, rm) = curvature(n, &gamma, &dgamma, &g);
    let rmv = |i: usize, jj: usize, k: usize, l: usize| rm[((i * n + jj) * n + k) * n + l];

    let mut ric = vec![0.0; n2];
    for x in 0..n {
        for y in 0..n {
            let mut v = 0.0;
            for a in 0..n {
                for b in 0..n {
                    v += ginv[a * n + b] * rmv(a, x, y, b);
                }
            }
            ric[x * n + y] = v;
        }
    }
    let scal = (0..n2).map(|e| ginv[e] * ric[e]).sum();

    let rm_ct34 = crate::tensor::contract_pair(&rm, n, 4, 2, 3, &w);
    let mut rho_prime = vec![0.0; n2];
    for x in 0..n {
        for y in 0..n {
            rho_prime[x * n + y] = (0..n).map(|p| j[p * n + x] * rm_ct34[p * n + y]).sum();
        }
    }
    let s_prime = (0..n2).map(|e| rm_ct34[e] * w[e]).sum();

    // N(X,Y) = (D_JX J)Y − (D_JY J)X + J(D_Y J)X − J(D_X J)Y
    let nj = |c: usize, a: usize, b: usize| nabla_j[(c * n + a) * n + b];
    let mut nij = vec![0.0; n3];
    for x in 0..n {
        for y in 0..n {
            for k in 0..n {
                let mut v = 0.0;
                for c in 0..n {
                    v += j[c * n + x] * nj(c, k, y) - j[c * n + y] * nj(c, k, x);
                    v += j[k * n + c] * (nj(y, c, x) - nj(x, c, y));
                }
                nij[(x * n + y) * n + k] = v;
            }
        }
    }

    LcPackage {
        n,
        g,
        ginv,
        j,
        omega,
        w,
        gamma,
        dgamma,
        nabla_j,
        dj,
        dj_partial,
        d2j,
        riem,
        rm,
        ric,
        scal,
        rho_prime,
        s_prime,
        theta,
        nij,
        ginv1,
        j1,
        dg1,
        dj1,
        theta1,
    }
}

impl LcPackage {
    fn ix3(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.n + b) * self.n + c
    }

    pub fn dj_at(&self, a: usize, b: usize, c: usize) -> f64 {
        self.dj[self.ix3(a, b, c)]
    }

    pub fn rm_at(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.rm[((i * self.n + j) * self.n + k) * self.n + l]
    }

    pub fn d2j_at(&self, m: usize, a: usize, b: usize, c: usize) -> f64 {
        self.d2j[((m * self.n + a) * self.n + b) * self.n + c]
    }

    /// `DJ` with `J` applied in the given slot.
    pub fn dj_j(&self, slot: usize) -> Vec<f64> {
        j_in_slot(&self.dj, self.n, slot, &self.j)
    }

    pub fn dj_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 3, self.dj.clone())
    }
    pub fn rm_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 4, self.rm.clone())
    }
    pub fn ric_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 2, self.ric.clone())
    }
    pub fn rho_prime_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 2, self.rho_prime.clone())
    }
    pub fn theta_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 1, self.theta.clone())
    }
    pub fn d2j_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 4, self.d2j.clone())
    }
    pub fn nij_tensor(&self) -> Tensor {
        Tensor::new(
            self.n,
            vec![Variance::Down, Variance::Down, Variance::Up],
            self.nij.clone(),
        )
        .expect("shape")
    }
    pub fn g_tensor(&self) -> Tensor {
        Tensor::covariant(self.n, 2, self.g.clone())
    }
    pub fn j_tensor(&self) -> Tensor {
        Tensor::new(self.n, vec![Variance::Up, Variance::Down], self.j.clone()).expect("shape")
    }

    /// `ΔJ(X, Y) = D²J(e_i, e_i, X, Y)`.
    pub fn lap_j(&self) -> Vec<f64> {
        crate::tensor::contract_pair(&self.d2j, self.n, 4, 0, 1, &self.ginv)
    }

    /// `ΔJ` as an endomorphism: `[a, b]` is the `a`-th component of `(ΔJ) e_b`.
    pub fn lap_j_endo(&self) -> Vec<f64> {
        let n = self.n;
        let l = self.lap_j();
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] = (0..n).map(|c| self.ginv[a * n + c] * l[b * n + c]).sum();
            }
        }
        out
    }

    /// `(D_X J)` as endomorphisms, `[c, a, b]`.
    pub fn dj_endo(&self) -> &[f64] {
        &self.nabla_j
    }

    /// `∂_m θ_x` at `[m, x]`.
    pub fn dtheta(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for m in 0..n {
            for x in 0..n {
                out[m * n + x] = self.theta1[x].d[m];
            }
        }
        out
    }

    /// `(∇_c g)_ab` for a connection with coefficients `c` (`[k, i, j]`).
    pub fn metric_defect(&self, c: &[f64], dg: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        for cc in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let mut v = dg[(cc * n + a) * n + b];
                    for p in 0..n {
                        v -= c[(p * n + cc) * n + a] * self.g[p * n + b]
                            + c[(p * n + cc) * n + b] * self.g[a * n + p];
                    }
                    out[(cc * n + a) * n + b] = v;
                }
            }
        }
        out
    }

    /// `(∇_c J)^a_b` for a connection with coefficients `c` (`[k, i, j]`).
    pub fn j_defect(&self, c: &[f64], dj: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        for cc in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let mut v = dj[(cc * n + a) * n + b];
                    for p in 0..n {
                        v += c[(a * n + cc) * n + p] * self.j[p * n + b]
                            - c[(p * n + cc) * n + b] * self.j[a * n + p];
                    }
                    out[(cc * n + a) * n + b] = v;
                }
            }
        }
        out
    }
}

/// `N^k(e_x, e_y)` from partial derivatives only:
/// `N^k_xy = J^m_x ∂_m J^k_y − J^m_y ∂_m J^k_x + J^k_m (∂_y J^m_x − ∂_x J^m_y)`.
pub fn nijenhuis_partials(jet: &StructureJet) -> Vec<f64> {
    let n = jet.n;
    let jv = |a: usize, b: usize| jet.j[a * n + b];
    let dj = |c: usize, a: usize, b: usize| jet.dj[(c * n + a) * n + b];
    let mut out = vec![0.0; n * n * n];
    for x in 0..n {
        for y in 0..n {
            for k in 0..n {
                let mut v = 0.0;
                for m in 0..n {
                    v += jv(m, x) * dj(m, k, y) - jv(m, y) * dj(m, k, x);
                    v += jv(k, m) * (dj(y, m, x) - dj(x, m, y));
                }
                out[(x * n + y) * n + k] = v;
            }
        }
    }
    out
}

/// `dω(e_a, e_b, e_c) = ∂_a ω_bc + ∂_b ω_ca + ∂_c ω_ab` from partials.
pub fn d_omega_partials(jet: &StructureJet) -> Vec<f64> {
    let n = jet.n;
    let mut domega = vec![0.0; n * n * n];
    let dw = |c: usize, a: usize, b: usize| -> f64 {
        // ω_ab = g_bm J^m_a
        (0..n)
            .map(|m| {
                jet.dg[(c * n + b) * n + m] * jet.j[m * n + a]
                    + jet.g[b * n + m] * jet.dj[(c * n + m) * n + a]
            })
            .sum()
    };
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                domega[(a * n + b) * n + c] = dw(a, b, c) + dw(b, c, a) + dw(c, a, b);
            }
        }
    }
    domega
}

/// Scale used for relative residuals of `∂ω`-level identities.
pub fn first_order_scale(jet: &StructureJet) -> f64 {
    norm(&jet.dg) + norm(&jet.dj)
}

/// Residual records of the pointwise identities of Levi-Civita calculus.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityResiduals {
    pub dj_skew: f64,
    pub dj_type: f64,
    pub first_bianchi: f64,
    pub ricci_identity: f64,
    pub curvature_of_j: f64,
    pub rho_trace: f64,
    pub lap_j_type: f64,
}

/// `DJ(X, Y, Z) + DJ(X, Z, Y)` relative to `‖DJ‖`.
pub fn dj_skew_residual(p: &LcPackage) -> f64 {
    let n = p.n;
    let mut r = vec![0.0; p.dj.len()];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                r[p.ix3(a, b, c)] = p.dj_at(a, b, c) + p.dj_at(a, c, b);
            }
        }
    }
    rel_residual(&r, norm(&p.dj))
}

/// `DJ(X, JY, JZ) + DJ(X, Y, Z)` relative to `‖DJ‖`.
pub fn dj_type_residual(p: &LcPackage) -> f64 {
    let d12 = j_in_slot(&j_in_slot(&p.dj, p.n, 1, &p.j), p.n, 2, &p.j);
    let r: Vec<f64> = d12.iter().zip(&p.dj).map(|(a, b)| a + b).collect();
    rel_residual(&r, norm(&p.dj))
}

/// `DJ(JX, JY, Z) − sign·DJ(X, Y, Z)` relative to `‖DJ‖`; `sign = +1` is the
/// Hermitian condition, `sign = −1` its almost Kähler counterpart.
pub fn dj_first_pair_residual(p: &LcPackage, sign: f64) -> f64 {
    let d01 = j_in_slot(&j_in_slot(&p.dj, p.n, 0, &p.j), p.n, 1, &p.j);
    let r: Vec<f64> = d01.iter().zip(&p.dj).map(|(a, b)| a - sign * b).collect();
    rel_residual(&r, norm(&p.dj))
}

/// `DJ(JX,Y,Z) − DJ(JY,X,Z) + DJ(X,JY,Z) − DJ(Y,JX,Z)`, the Nijenhuis tensor
/// written through `DJ`, relative to `‖DJ‖`.
pub fn dj_nijenhuis_form(p: &LcPackage) -> f64 {
    let n = p.n;
    let d0 = p.dj_j(0);
    let d1 = p.dj_j(1);
    let mut r = vec![0.0; p.dj.len()];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                r[p.ix3(x, y, z)] =
                    d0[p.ix3(x, y, z)] - d0[p.ix3(y, x, z)] + d1[p.ix3(x, y, z)] - d1[p.ix3(y, x, z)];
            }
        }
    }
    rel_residual(&r, norm(&p.dj))
}

/// `DJ(X,Y,Z) + DJ(Y,Z,X) + DJ(Z,X,Y)` relative to `‖DJ‖`.
pub fn dj_cyclic_residual(p: &LcPackage) -> f64 {
    let n = p.n;
    let mut r = vec![0.0; p.dj.len()];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                r[p.ix3(a, b, c)] = p.dj_at(a, b, c) + p.dj_at(b, c, a) + p.dj_at(c, a, b);
            }
        }
    }
    rel_residual(&r, norm(&p.dj))
}

/// `‖N_J‖` relative to `‖DJ‖`.
pub fn nijenhuis_residual(p: &LcPackage) -> f64 {
    rel_residual(&p.nij, norm(&p.dj))
}

/// First Bianchi identity, the Ricci identity for `ω`, the commutator
/// identity `Rm(i,j,Jk,l) + Rm(i,j,k,Jl) = D²J(i,j,k,l) − D²J(j,i,k,l)`, the
/// trace identity `Rm(JX, i, Ji, Y) = −½ρ'(X, Y)`, `DJ` symmetries and the
/// `(1,1)` part of `ΔJ`.
pub fn identity_residuals(p: &LcPackage) -> IdentityResiduals {
    let n = p.n;
    let n4 = n * n * n * n;
    let rm_scale = norm(&p.rm);
    let ix4 = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;

    let mut bianchi = vec![0.0; n4];
    let mut ricci = vec![0.0; n4];
    let mut comm = vec![0.0; n4];
    for i in 0..n {
        for jj in 0..n {
            for k in 0..n {
                for l in 0..n {
                    bianchi[ix4(i, jj, k, l)] =
                        p.rm_at(i, jj, k, l) + p.rm_at(jj, k, i, l) + p.rm_at(k, i, jj, l);
                    let mut v = p.d2j_at(i, jj, k, l) - p.d2j_at(jj, i, k, l);
                    for m in 0..n {
                        v += p.riem[ix4(i, jj, k, m)] * p.omega[m * n + l]
                            + p.riem[ix4(i, jj, l, m)] * p.omega[k * n + m];
                    }
                    ricci[ix4(i, jj, k, l)] = v;
                    let mut c = -(p.d2j_at(i, jj, k, l) - p.d2j_at(jj, i, k, l));
                    for m in 0..n {
                        c += p.j[m * n + k] * p.rm_at(i, jj, m, l) + p.j[m * n + l] * p.rm_at(i, jj, k, m);
                    }
                    comm[ix4(i, jj, k, l)] = c;
                }
            }
        }
    }
    let d2_scale = norm(&p.d2j).max(rm_scale);

    // Rm(JX, i, Ji, Y) + ½ρ'(X, Y)
    let rm_ct12 = crate::tensor::contract_pair(&p.rm, n, 4, 1, 2, &p.w);
    let mut rho = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let lhs: f64 = (0..n).map(|q| p.j[q * n + x] * rm_ct12[q * n + y]).sum();
            rho[x * n + y] = lhs + 0.5 * p.rho_prime[x * n + y];
        }
    }

    // (ΔJ)^{(1,1)} + 𝒩
    let lap = Tensor::covariant(n, 2, p.lap_j());
    let jt = p.j_tensor();
    let nn = Tensor::covariant(n, 2, crate::classify::script_n(p));
    let lap11 = crate::tensor::part11(&lap, &jt);
    let lap_res = lap11.add(&nn);

    IdentityResiduals {
        dj_skew: dj_skew_residual(p),
        dj_type: dj_type_residual(p),
        first_bianchi: rel_residual(&bianchi, rm_scale),
        ricci_identity: rel_residual(&ricci, d2_scale),
        curvature_of_j: rel_residual(&comm, d2_scale),
        rho_trace: rel_residual(&rho, rm_scale),
        lap_j_type: rel_residual(lap_res.data(), lap.norm().max(nn.norm())),
    }
}

/// A vector field together with its first partials at a point:
/// `v[k] = Z^k`, `d[m * n + k] = ∂_m Z^k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorJet {
    pub v: Vec<f64>,
    pub d: Vec<f64>,
}

impl VectorJet {
    pub fn zero(n: usize) -> Self {
        VectorJet {
            v: vec![0.0; n],
            d: vec![0.0; n * n],
        }
    }

    fn from_jets(z: &[Jet1]) -> Self {
        let n = z.len();
        let mut d = vec![0.0; n * n];
        for m in 0..n {
            for k in 0..n {
                d[m * n + k] = z[k].d[m];
            }
        }
        VectorJet {
            v: z.iter().map(|c| c.v).collect(),
            d,
        }
    }

    pub fn norm(&self, g: &[f64]) -> f64 {
        let n = self.v.len();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += g[a * n + b] * self.v[a] * self.v[b];
            }
        }
        s.max(0.0).sqrt()
    }
}

/// `DZ(X, Y) = g(D_X Z, Y)`.
pub fn covariant_derivative(z: &VectorJet, p: &LcPackage) -> Vec<f64> {
    let n = p.n;
    let mut dz = vec![0.0; n * n];
    for x in 0..n {
        let mut col = vec![0.0; n];
        for (k, c) in col.iter_mut().enumerate() {
            *c = z.d[x * n + k] + (0..n).map(|m| p.gamma[(k * n + x) * n + m] * z.v[m]).sum::<f64>();
        }
        for y in 0..n {
            dz[x * n + y] = (0..n).map(|k| p.g[y * n + k] * col[k]).sum();
        }
    }
    dz
}

/// `(L_Z g)(X, Y) = g(D_X Z, Y) + g(X, D_Y Z)`.
pub fn lie_derivative_g(z: &VectorJet, p: &LcPackage) -> Vec<f64> {
    let n = p.n;
    let dz = covariant_derivative(z, p);
    let mut out = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            out[x * n + y] = dz[x * n + y] + dz[y * n + x];
        }
    }
    out
}

/// `(L_Z J)(X, Y) = DJ(Z, X, Y) − DZ(JX, Y) − DZ(X, JY)`, covariant in the
/// sense `g((L_Z J) X, Y)`.
pub fn lie_derivative_j(z: &VectorJet, p: &LcPackage) -> Vec<f64> {
    let n = p.n;
    let dz = covariant_derivative(z, p);
    let mut out = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let mut v: f64 = (0..n).map(|c| z.v[c] * p.dj_at(c, x, y)).sum();
            for q in 0..n {
                v -= p.j[q * n + x] * dz[q * n + y] + p.j[q * n + y] * dz[x * n + q];
            }
            out[x * n + y] = v;
        }
    }
    out
}

/// `L_{θ♯} J` expanded through second derivatives of `J`:
/// `−D²J(JX,i,Ji,Y) − D²J(X,i,Ji,JY) − DJ(JX,i,j)DJ(i,j,Y) − DJ(X,i,j)DJ(i,j,JY)
///  + DJ(j,X,Y)DJ(i,Ji,j)`.
pub fn lie_theta_j_expanded(p: &LcPackage) -> Vec<f64> {
    let n = p.n;
    // D²J(Z, i, Ji, Y) at [z, y]
    let d2ct = crate::tensor::contract_pair(&p.d2j, n, 4, 1, 2, &p.w);
    // DJ(Z, i, j) DJ(i, j, Y) at [z, y]
    let mut q = vec![0.0; n * n];
    for z in 0..n {
        for y in 0..n {
            let mut v = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            v += p.dj_at(z, a, b) * p.ginv[a * n + c] * p.ginv[b * n + d] * p.dj_at(c, d, y);
                        }
                    }
                }
            }
            q[z * n + y] = v;
        }
    }
    let theta_up: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|l| p.ginv[k * n + l] * p.theta[l]).sum())
        .collect();
    let mut out = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let mut v = 0.0;
            for s in 0..n {
                v -= p.j[s * n + x] * (d2ct[s * n + y] + q[s * n + y]);
                v -= p.j[s * n + y] * (d2ct[x * n + s] + q[x * n + s]);
            }
            v += (0..n).map(|c| theta_up[c] * p.dj_at(c, x, y)).sum::<f64>();
            out[x * n + y] = v;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugeFields {
    pub theta_sharp: VectorJet,
    pub j_theta_sharp: VectorJet,
    pub x0: VectorJet,
    pub x1: VectorJet,
    pub x2: VectorJet,
}

/// The canonical gauge fields `θ♯`, `Jθ♯` and the coordinate gauge fields
/// `X̄₀♭ = g^{ij} J^k_j ∂_i g(k, J·)`, `X̄₁♭ = g^{ij} ∂_i g(j, ·)`,
/// `X̄₂♭ = g^{ij} ∂_· g_ij` (the chart's flat connection is the background).
pub fn gauge_fields(p: &LcPackage) -> GaugeFields {
    let n = p.n;
    let zero = Jet1::constant(0.0);
    let raise = |low: &[Jet1]| -> Vec<Jet1> {
        (0..n)
            .map(|k| {
                let mut acc = zero;
                for l in 0..n {
                    acc += p.ginv1[k * n + l] * low[l];
                }
                acc
            })
            .collect()
    };
    let dgf = |c: usize, a: usize, b: usize| p.dg1[(c * n + a) * n + b];
    let theta_sharp = raise(&p.theta1);
    let j_theta: Vec<Jet1> = (0..n)
        .map(|k| {
            let mut acc = zero;
            for m in 0..n {
                acc += p.j1[k * n + m] * theta_sharp[m];
            }
            acc
        })
        .collect();
    let mut x1 = vec![zero; n];
    let mut x2 = vec![zero; n];
    let mut x0 = vec![zero; n];
    for y in 0..n {
        for i in 0..n {
            for jj in 0..n {
                let gij = p.ginv1[i * n + jj];
                x1[y] += gij * dgf(i, jj, y);
                x2[y] += gij * dgf(y, i, jj);
                for k in 0..n {
                    let jk = p.ginv1[i * n + jj] * p.j1[k * n + jj];
                    for m in 0..n {
                        x0[y] += jk * dgf(i, k, m) * p.j1[m * n + y];
                    }
                }
            }
        }
    }
    GaugeFields {
        theta_sharp: VectorJet::from_jets(&theta_sharp),
        j_theta_sharp: VectorJet::from_jets(&j_theta),
        x0: VectorJet::from_jets(&raise(&x0)),
        x1: VectorJet::from_jets(&raise(&x1)),
        x2: VectorJet::from_jets(&raise(&x2)),
    }
}

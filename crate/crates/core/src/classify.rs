//! The classified quadratic tensors `B¹…B¹⁰`, `E¹…E⁴`, `𝒩`, `ℛ`, `ΔJ` and
//! the properties and reductions they satisfy in each setting.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::report::VerificationReport;
use crate::riemann::{j_in_slot, LcPackage};
use crate::structures::Setting;
use crate::tensor::{
    classify_2tensor, compose_j, g_eigenvalues, j_action, norm, part0220, part11, rel_residual, skew, sym,
    Frame, Tensor,
};
use crate::{Error, Result};

/// Default tolerance for property flags on analytic jets.
pub const PROPERTY_TOL: f64 = 1e-9;

/// Signs of the almost Kähler reductions `B⁸ = c₈B¹`, `B⁹ = c₉B²`.
pub const AK_B8_SIGN: f64 = 1.0;
pub const AK_B9_SIGN: f64 = 1.0;

/// Hermitian reductions `B⁸ = c₈B¹`, `B⁹ = c₉B²`, `B¹⁰ = c₁₀B⁷`; there
/// `B⁴` vanishes.
pub const HERMITIAN_B8_SIGN: f64 = -1.0;
pub const HERMITIAN_B9_SIGN: f64 = -1.0;
pub const HERMITIAN_B10_SIGN: f64 = -1.0;

#[derive(Clone, Debug, Serialize)]
pub struct ClassifiedTensors {
    pub n: usize,
    /// `B[i]` is `B^{i+1}`, covariant in chart coordinates.
    pub b: Vec<Tensor>,
    /// `e[i]` is `E^{i+1}`.
    pub e: [f64; 4],
    pub script_n: Tensor,
    pub script_r: Tensor,
    pub lap_j: Tensor,
    /// `D²J(X, e_i, Y, e_i)`.
    pub d2j_trace: Tensor,
    pub g: Tensor,
    pub j: Tensor,
    pub omega: Tensor,
}

struct FrameDj {
    n: usize,
    d: Vec<f64>,
    j: Vec<f64>,
}

impl FrameDj {
    fn new(p: &LcPackage, frame: &Frame) -> Self {
        FrameDj {
            n: p.n,
            d: frame.to_frame(&p.dj, 3),
            j: frame.endo_to_frame(&p.j),
        }
    }

    fn slot(&self, slot: usize) -> Vec<f64> {
        j_in_slot(&self.d, self.n, slot, &self.j)
    }

    /// `Σ_{i,j} a[σ(X,i,j)] b[τ(Y,i,j)]` where `pa`, `pb` give the positions of
    /// `(X or Y, i, j)` inside each factor.
    fn pair(&self, a: &[f64], pa: [usize; 3], b: &[f64], pb: [usize; 3]) -> Vec<f64> {
        let n = self.n;
        let at = |t: &[f64], pos: [usize; 3], v: [usize; 3]| {
            let mut idx = [0; 3];
            for s in 0..3 {
                idx[pos[s]] = v[s];
            }
            t[(idx[0] * n + idx[1]) * n + idx[2]]
        };
        let mut out = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                let mut v = 0.0;
                for i in 0..n {
                    for jj in 0..n {
                        v += at(a, pa, [x, i, jj]) * at(b, pb, [y, i, jj]);
                    }
                }
                out[x * n + y] = v;
            }
        }
        out
    }

    /// `v[i] = Σ_j t(e_j, e_i, e_j)`.
    fn trace13(&self, t: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| (0..n).map(|j| t[(j * n + i) * n + j]).sum()).collect()
    }
}

/// `𝒩(X, Y) = DJ(e_i, e_j, JX) DJ(e_i, e_j, Y)` in chart coordinates.
pub fn script_n(p: &LcPackage) -> Vec<f64> {
    let frame = Frame::new(&p.g_tensor()).expect("metric validated");
    let f = FrameDj::new(p, &frame);
    let d2 = f.slot(2);
    // positions: X sits in slot 2 of the first factor, i and j in slots 0, 1
    let out = f.pair(&d2, [2, 0, 1], &f.d, [2, 0, 1]);
    frame.from_frame(&out, 2)
}

pub fn classified(p: &LcPackage) -> ClassifiedTensors {
    let n = p.n;
    let frame = Frame::new(&p.g_tensor()).expect("metric validated");
    let f = FrameDj::new(p, &frame);
    let d = &f.d;
    let d0 = f.slot(0);
    let d1 = f.slot(1);
    let d2 = f.slot(2);
    let tr = f.trace13(d);
    let tr1 = f.trace13(&d1);
    let vec_term = |t: &[f64], v: &[f64], xy_slots: (usize, usize)| -> Vec<f64> {
        // Σ_i t(.., e_i, ..) v[i] with X, Y in the given slots
        let mut out = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    let mut idx = [i; 3];
                    idx[xy_slots.0] = x;
                    idx[xy_slots.1] = y;
                    acc += t[(idx[0] * n + idx[1]) * n + idx[2]] * v[i];
                }
                out[x * n + y] = acc;
            }
        }
        out
    };
    let mut b_frame = Vec::with_capacity(10);
    b_frame.push(f.pair(d, [0, 1, 2], d, [0, 1, 2]));
    b_frame.push(f.pair(d, [1, 0, 2], d, [1, 0, 2]));
    // B³: DJ(i, X, j) DJ(j, Y, i)
    b_frame.push(f.pair(d, [1, 0, 2], d, [1, 2, 0]));
    // B⁴: DJ(X, i, j) DJ(i, Y, j)
    b_frame.push(f.pair(d, [0, 1, 2], d, [1, 0, 2]));
    // B⁵: DJ(i, X, i) DJ(j, Y, j)
    let mut b5 = vec![0.0; n * n];
    {
        let col: Vec<f64> = (0..n).map(|x| (0..n).map(|i| d[(i * n + x) * n + i]).sum()).collect();
        for x in 0..n {
            for y in 0..n {
                b5[x * n + y] = col[x] * col[y];
            }
        }
    }
    b_frame.push(b5);
    b_frame.push(vec_term(d, &tr, (0, 1)));
    b_frame.push(vec_term(d, &tr, (1, 2)));
    b_frame.push(f.pair(&d0, [0, 1, 2], &d1, [0, 1, 2]));
    b_frame.push(f.pair(&d1, [1, 0, 2], &d0, [1, 0, 2]));
    b_frame.push(vec_term(&d1, &tr1, (1, 2)));

    let d01 = j_in_slot(&d0, n, 1, &f.j);
    let mut e = [0.0; 4];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let v = d[(a * n + b) * n + c];
                e[0] += v * v;
                e[1] += v * d[(b * n + a) * n + c];
                e[3] += v * d01[(a * n + b) * n + c];
            }
        }
    }
    let ii: Vec<f64> = (0..n).map(|c| (0..n).map(|i| d[(i * n + i) * n + c]).sum()).collect();
    e[2] = ii.iter().map(|v| v * v).sum();

    let scn = f.pair(&d2, [2, 0, 1], d, [2, 0, 1]);

    let g = p.g_tensor();
    let j = p.j_tensor();
    let ric = p.ric_tensor();
    let script_r = compose_j(&ric, &j).add(&compose_j(&ric, &j).transpose());
    let d2j_trace = Tensor::covariant(n, 2, crate::tensor::contract_pair(&p.d2j, n, 4, 1, 3, &p.ginv));
    ClassifiedTensors {
        n,
        b: b_frame
            .iter()
            .map(|t| Tensor::covariant(n, 2, frame.from_frame(t, 2)))
            .collect(),
        e,
        script_n: Tensor::covariant(n, 2, frame.from_frame(&scn, 2)),
        script_r,
        lap_j: Tensor::covariant(n, 2, p.lap_j()),
        d2j_trace,
        omega: compose_j(&g, &j),
        g,
        j,
    }
}

impl ClassifiedTensors {
    /// `B^i` for `i` in `1..=10`.
    pub fn bi(&self, i: usize) -> &Tensor {
        &self.b[i - 1]
    }

    /// `B^i J`, i.e. `(X, Y) ↦ B^i(JX, Y)`.
    pub fn bi_j(&self, i: usize) -> Tensor {
        compose_j(self.bi(i), &self.j)
    }

    /// `E^i` for `i` in `1..=4`.
    pub fn ei(&self, i: usize) -> f64 {
        self.e[i - 1]
    }

    fn scale(&self) -> f64 {
        self.e[0].abs().max(crate::tensor::ZERO_GUARD)
    }
}

fn rel(t: &Tensor, scale: f64) -> f64 {
    rel_residual(t.data(), scale)
}

/// Residuals of (symmetric, skew, (1,1), (0,2)+(2,0)) relative to `scale`.
fn type_residuals(t: &Tensor, j: &Tensor, scale: f64) -> [f64; 4] {
    let f = classify_2tensor(t, j, 0.0);
    let tn = t.norm();
    f.residuals.map(|r| r * tn.max(crate::tensor::ZERO_GUARD) / scale)
}

/// Property table for the declared setting. Residuals are relative to `E¹`,
/// the natural size of the quadratic tensors, so that identically vanishing
/// tensors pass.
pub fn property_audit(ct: &ClassifiedTensors, setting: Setting, tol: f64) -> VerificationReport {
    let mut r = VerificationReport::new("classify.properties");
    let s = ct.scale();
    let flags = |i: usize| type_residuals(ct.bi(i), &ct.j, s);
    let has = |r: &mut VerificationReport, prefix: &str, i: usize, kinds: &[usize]| {
        const NAMES: [&str; 4] = ["symmetric", "skew", "type11", "type0220"];
        let f = flags(i);
        for &k in kinds {
            r.check(&format!("{prefix}B{i}.{}", NAMES[k]), None, f[k], tol);
        }
    };
    for i in [1, 3, 5] {
        has(&mut r, "", i, &[0]);
    }
    for i in [2, 9] {
        has(&mut r, "", i, &[0, 2]);
    }
    for i in [7, 10] {
        has(&mut r, "", i, &[1, 3]);
    }
    let b8 = ct.bi(8);
    r.check(
        "B8.transpose-is-J-action",
        None,
        rel(&b8.transpose().sub(&j_action(b8, &ct.j)), s),
        tol,
    );
    r.check("E1.nonnegative", None, (-ct.e[0]).max(0.0), tol);
    r.check("E3.nonnegative", None, (-ct.e[2]).max(0.0), tol);
    let ls = s.max(ct.lap_j.norm());
    let lap11 = part11(&ct.lap_j, &ct.j);
    r.check("lapJ.type11-is-minus-N", None, rel(&lap11.add(&ct.script_n), ls), tol);
    let lpn = ct.lap_j.add(&ct.script_n);
    r.check("lapJ-plus-N.type0220", None, rel(&part11(&lpn, &ct.j), ls), tol);
    let rs = ct.script_r.norm().max(s).max(crate::tensor::ZERO_GUARD);
    r.check("scriptR.symmetric", None, rel(&skew(&ct.script_r), rs), tol);
    r.check("scriptR.type0220", None, rel(&part11(&ct.script_r, &ct.j), rs), tol);
    match setting {
        Setting::AlmostKahler | Setting::Kahler => {
            for i in [1, 2] {
                has(&mut r, "ak.", i, &[0, 2]);
            }
        }
        Setting::Hermitian => {
            for i in [1, 2] {
                has(&mut r, "herm.", i, &[0, 2]);
            }
            has(&mut r, "herm.", 3, &[0, 3]);
            has(&mut r, "herm.", 5, &[0]);
            has(&mut r, "herm.", 6, &[2]);
            has(&mut r, "herm.", 7, &[1, 3]);
        }
        Setting::Generic => {}
    }
    r
}

fn require(setting: Setting, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::SettingMismatch(format!("{what} requires a different setting than {}", setting.name())))
    }
}

/// Almost Kähler reductions of the `B` list.
pub fn ak_reductions(ct: &ClassifiedTensors, setting: Setting, tol: f64) -> Result<VerificationReport> {
    require(setting, setting.closed(), "almost Kähler reductions")?;
    let s = ct.scale();
    let b = |i: usize| ct.bi(i);
    let mut r = VerificationReport::new("classify.ak");
    r.check("ak.B4-half-B1", None, rel(&b(4).axpy(-0.5, b(1)), s), tol);
    r.check("ak.B3-B2-plus-half-B1", None, rel(&b(3).sub(b(2)).axpy(0.5, b(1)), s), tol);
    for i in [5, 6, 7, 10] {
        r.check(&format!("ak.B{i}-vanishes"), None, rel(b(i), s), tol);
    }
    r.check("ak.B8-reduces-to-B1", None, rel(&b(8).axpy(-AK_B8_SIGN, b(1)), s), tol);
    r.check("ak.B9-reduces-to-B2", None, rel(&b(9).axpy(-AK_B9_SIGN, b(2)), s), tol);
    r.check("ak.theta-vanishes", None, ct.e[2].sqrt() / s.sqrt(), tol);
    r.check("ak.d2j-trace-vanishes", None, rel(&ct.d2j_trace, s.max(ct.lap_j.norm())), tol);
    Ok(r)
}

/// `|s' + 2R + E¹|` relative to `max(|R|, |s'|, E¹, 1)`.
pub fn ak_scalar_identity(p: &LcPackage, ct: &ClassifiedTensors, setting: Setting) -> Result<f64> {
    require(setting, setting.closed(), "the scalar identity")?;
    let v = p.s_prime + 2.0 * p.scal + ct.e[0];
    Ok(v.abs() / p.scal.abs().max(p.s_prime.abs()).max(ct.e[0]).max(1.0))
}

/// Four-dimensional almost Kähler checks: `B² = ¼E¹g`, the spectrum of `B¹`,
/// and `½B¹ − B² ≤ 0`.
pub fn dim4_ak_checks(ct: &ClassifiedTensors, setting: Setting, tol: f64) -> Result<VerificationReport> {
    require(setting, setting.closed(), "the four-dimensional identities")?;
    if ct.n != 4 {
        return Err(Error::Shape(format!("dimension 4 required, got {}", ct.n)));
    }
    let s = ct.scale();
    let mut r = VerificationReport::new("classify.dim4");
    r.check("dim4.B2-quarter-E1-g", None, rel(&ct.bi(2).axpy(-0.25 * ct.e[0], &ct.g), s), tol);
    let ev = g_eigenvalues(ct.bi(1), &ct.g)?;
    let want = [0.0, 0.0, 0.5 * ct.e[0], 0.5 * ct.e[0]];
    let dev = ev.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    r.check("dim4.B1-spectrum", None, dev / s, tol);
    let m = ct.bi(1).scaled(0.5).sub(ct.bi(2));
    let top = *g_eigenvalues(&m, &ct.g)?.last().expect("nonempty");
    r.check("dim4.half-B1-minus-B2-nonpositive", None, top.max(0.0) / s, tol);
    Ok(r)
}

/// Hermitian reductions of `B⁴, B⁸, B⁹, B¹⁰, E⁴` onto the retained list.
pub fn hermitian_reductions(ct: &ClassifiedTensors, setting: Setting, tol: f64) -> Result<VerificationReport> {
    require(setting, setting.integrable(), "Hermitian reductions")?;
    let s = ct.scale();
    let b = |i: usize| ct.bi(i);
    let mut r = VerificationReport::new("classify.hermitian");
    r.check("herm.B8-reduces-to-B1", None, rel(&b(8).axpy(-HERMITIAN_B8_SIGN, b(1)), s), tol);
    r.check("herm.B9-reduces-to-B2", None, rel(&b(9).axpy(-HERMITIAN_B9_SIGN, b(2)), s), tol);
    r.check("herm.B10-reduces-to-B7", None, rel(&b(10).axpy(-HERMITIAN_B10_SIGN, b(7)), s), tol);
    r.check("herm.B4-vanishes", None, rel(b(4), s), tol);
    r.check("herm.E4-equals-E1", None, (ct.e[3] - ct.e[0]).abs() / s, tol);
    Ok(r)
}

/// Least-squares coefficients expressing `target` in the span of `basis`
/// over several samples, with the relative residual of the fit.
pub fn fit_coefficients(samples: &[(Tensor, Vec<Tensor>)]) -> (Vec<f64>, f64) {
    let k = samples[0].1.len();
    let rows: usize = samples.iter().map(|(t, _)| t.data().len()).sum();
    let mut a = DMatrix::zeros(rows, k);
    let mut b = DVector::zeros(rows);
    let mut row = 0;
    for (t, basis) in samples {
        for e in 0..t.data().len() {
            b[row] = t.data()[e];
            for (c, bt) in basis.iter().enumerate() {
                a[(row, c)] = bt.data()[e];
            }
            row += 1;
        }
    }
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-10).expect("svd computed");
    let res = &a * &x - &b;
    let coeffs: Vec<f64> = x.iter().copied().collect();
    (coeffs, res.norm() / b.norm().max(crate::tensor::ZERO_GUARD))
}

/// Even/odd parity residual: `max ‖Bⁱ(−J) − Bⁱ(J)‖` and `max ‖(BⁱJ)(−J) + BⁱJ‖`.
pub fn parity_residuals(ct: &ClassifiedTensors, flipped: &ClassifiedTensors) -> (f64, f64) {
    let s = ct.scale();
    let mut even: f64 = 0.0;
    let mut odd: f64 = 0.0;
    for i in 1..=10 {
        even = even.max(rel(&ct.bi(i).sub(flipped.bi(i)), s));
        odd = odd.max(rel(&ct.bi_j(i).add(&flipped.bi_j(i)), s));
    }
    for i in 0..4 {
        even = even.max((ct.e[i] - flipped.e[i]).abs() / s);
    }
    (even, odd)
}

/// `‖T^{sym}‖`, `‖T^{(1,1)}‖` style helpers used by the flows.
pub fn sym11(t: &Tensor, j: &Tensor) -> Tensor {
    part11(&sym(t), j)
}

pub fn part0220_of(t: &Tensor, j: &Tensor) -> Tensor {
    part0220(t, j)
}

/// Euclidean norm of a raw array.
pub fn array_norm(v: &[f64]) -> f64 {
    norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::levi_civita;
    use crate::structures::{builtin, Homogeneous, Model, StructureProvider};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn provider(name: &str) -> Arc<dyn StructureProvider> {
        builtin(name, &BTreeMap::new()).unwrap()
    }

    fn at(prov: &dyn StructureProvider, x: &[f64]) -> (LcPackage, ClassifiedTensors) {
        let p = levi_civita(&prov.jet_at(x).unwrap()).unwrap();
        let ct = classified(&p);
        (p, ct)
    }

    /// Entrywise `B¹` and `E¹` in coordinates with explicit inverse metrics.
    fn oracle_b1_e1(p: &LcPackage) -> (Vec<f64>, f64) {
        let n = p.n;
        let gi = &p.ginv;
        let mut b1 = vec![0.0; n * n];
        let mut e1 = 0.0;
        for x in 0..n {
            for y in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            for d in 0..n {
                                b1[x * n + y] += p.dj_at(x, a, b) * p.dj_at(y, c, d) * gi[a * n + c] * gi[b * n + d];
                            }
                        }
                    }
                }
            }
        }
        for x in 0..n {
            for y in 0..n {
                e1 += gi[x * n + y] * b1[x * n + y];
            }
        }
        (b1, e1)
    }

    #[test]
    fn flat_torus_all_zero() {
        let flat = provider("flat-torus");
        let (_, ct) = at(flat.as_ref(), &[0.2, 0.4, 0.6, 0.8]);
        assert!(ct.b.iter().all(|t| t.max_abs() == 0.0));
        assert_eq!(ct.e, [0.0; 4]);
        assert!(ct.lap_j.max_abs() == 0.0 && ct.script_n.max_abs() == 0.0 && ct.script_r.max_abs() == 0.0);
    }

    #[test]
    fn e1_matches_entrywise_oracle() {
        for name in ["kodaira-thurston", "perturbed-torus", "hopf-surface"] {
            let prov = provider(name);
            let x = prov.sample_points(1, 8).remove(0);
            let (p, ct) = at(prov.as_ref(), &x);
            let (b1, e1) = oracle_b1_e1(&p);
            assert!((ct.e[0] - e1).abs() < 1e-10 * e1.max(1.0));
            assert!(rel_residual(&ct.bi(1).data().iter().zip(&b1).map(|(a, b)| a - b).collect::<Vec<_>>(), norm(&b1)) < 1e-12);
        }
    }

    #[test]
    fn e_values_are_frame_independent() {
        // compare the Gram–Schmidt frame with a rotated orthonormal frame
        let prov = provider("perturbed-torus");
        let x = prov.sample_points(1, 21).remove(0);
        let (p, ct) = at(prov.as_ref(), &x);
        let fm = crate::tensor::orthonormal_frame(&p.g_tensor()).unwrap();
        let (c, s) = (0.6_f64.cos(), 0.6_f64.sin());
        let mut rot = DMatrix::<f64>::identity(4, 4);
        rot[(0, 0)] = c;
        rot[(0, 2)] = -s;
        rot[(2, 0)] = s;
        rot[(2, 2)] = c;
        let frame = Frame::from_matrix(&(fm * rot));
        let f = FrameDj::new(&p, &frame);
        let e1: f64 = f.d.iter().map(|v| v * v).sum();
        assert!((e1 - ct.e[0]).abs() < 1e-12 * e1.max(1.0));
        let n = 4;
        let mut e2 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    e2 += f.d[(a * n + b) * n + c] * f.d[(b * n + a) * n + c];
                }
            }
        }
        assert!((e2 - ct.e[1]).abs() < 1e-12 * e1.max(1.0));
    }

    #[test]
    fn e3_is_lee_form_norm() {
        let hopf = provider("hopf-surface");
        let (p, ct) = at(hopf.as_ref(), &[0.7, -0.4, 0.3, 0.2]);
        let th = &p.theta;
        let mut v = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                v += p.ginv[a * 4 + b] * th[a] * th[b];
            }
        }
        assert!((ct.e[2] - v).abs() < 1e-12 * v.max(1.0));
        assert!(v > 0.1);
    }

    #[test]
    fn generic_property_table() {
        let pt = provider("perturbed-torus");
        for x in pt.sample_points(5, 3) {
            let (_, ct) = at(pt.as_ref(), &x);
            let r = property_audit(&ct, Setting::Generic, PROPERTY_TOL);
            assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn ak_reductions_on_kodaira_thurston_and_variant() {
        let kt = provider("kodaira-thurston");
        let variant = builtin(
            "kodaira-thurston",
            &BTreeMap::from([("lambda1".to_string(), 2.0), ("lambda2".to_string(), 0.5)]),
        )
        .unwrap();
        for prov in [kt, variant, provider("symplectic-torus")] {
            for x in prov.sample_points(4, 1) {
                let (p, ct) = at(prov.as_ref(), &x);
                let s = Setting::AlmostKahler;
                for rep in [
                    property_audit(&ct, s, PROPERTY_TOL),
                    ak_reductions(&ct, s, PROPERTY_TOL).unwrap(),
                    dim4_ak_checks(&ct, s, PROPERTY_TOL).unwrap(),
                ] {
                    assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
                }
                assert!(ak_scalar_identity(&p, &ct, s).unwrap() < 1e-12);
                assert!(ct.e[0] > 0.1);
            }
        }
    }

    #[test]
    fn reduction_signs_are_forced() {
        // the opposite signs give order-one residuals
        let kt = provider("kodaira-thurston");
        let (_, ct) = at(kt.as_ref(), &[0.0; 4]);
        assert!(rel(&ct.bi(8).add(ct.bi(1)), ct.scale()) > 0.5);
        let hopf = provider("hopf-surface");
        let (_, ch) = at(hopf.as_ref(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(rel(&ch.bi(8).sub(ch.bi(1)), ch.scale()) > 0.5);
    }

    #[test]
    fn hermitian_properties_and_reductions() {
        let hopf = provider("hopf-surface");
        for x in hopf.sample_points(5, 7) {
            let (_, ct) = at(hopf.as_ref(), &x);
            for rep in [
                property_audit(&ct, Setting::Hermitian, PROPERTY_TOL),
                hermitian_reductions(&ct, Setting::Hermitian, PROPERTY_TOL).unwrap(),
            ] {
                assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
            }
        }
    }

    /// Product of a 4-dimensional jet with the flat plane `ℂ`.
    fn with_flat_factor(a: &crate::StructureJet) -> crate::StructureJet {
        let (m, n) = (4, 6);
        let mut g = vec![0.0; n * n];
        let mut j = vec![0.0; n * n];
        let mut dg = vec![0.0; n * n * n];
        let mut dj = vec![0.0; n * n * n];
        let mut ddg = vec![0.0; n * n * n * n];
        let mut ddj = vec![0.0; n * n * n * n];
        for p in 0..m {
            for q in 0..m {
                g[p * n + q] = a.g[p * m + q];
                j[p * n + q] = a.j[p * m + q];
                for c in 0..m {
                    dg[(c * n + p) * n + q] = a.dg[(c * m + p) * m + q];
                    dj[(c * n + p) * n + q] = a.dj[(c * m + p) * m + q];
                    for d in 0..m {
                        ddg[((c * n + d) * n + p) * n + q] = a.ddg[((c * m + d) * m + p) * m + q];
                        ddj[((c * n + d) * n + p) * n + q] = a.ddj[((c * m + d) * m + p) * m + q];
                    }
                }
            }
        }
        g[4 * n + 4] = 1.0;
        g[5 * n + 5] = 1.0;
        j[5 * n + 4] = 1.0;
        j[4 * n + 5] = -1.0;
        let mut x = a.x.clone();
        x.extend([0.0, 0.0]);
        crate::StructureJet { n, x, g, dg, ddg, j, dj, ddj, setting: a.setting }
    }

    /// A Hopf jet with random frame metric (still Hermitian, the frame
    /// `J` is unchanged), times a flat factor, under the conformal factor
    /// `exp(u)` with a random 2-jet for `u`. The result is Hermitian and not
    /// locally conformally Kähler.
    fn hermitian_jet(seed: u64) -> crate::StructureJet {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let jf = Model::HopfSurface.standard_frame_j(4);
        let mut h = DMatrix::<f64>::identity(4, 4);
        for a in 0..4 {
            for b in 0..4 {
                h[(a, b)] += 0.3 * rng.gen_range(-1.0..1.0);
            }
        }
        let h = &h * h.transpose();
        let ht = Tensor::from_matrix(&h, [crate::Variance::Down; 2]);
        let jt = Tensor::new(4, vec![crate::Variance::Up, crate::Variance::Down], jf.clone()).unwrap();
        let g = crate::structures::compatibilize(&ht, &jt).unwrap();
        let hom = Homogeneous::new(Model::HopfSurface, 4, g.into_data(), jf).unwrap();
        let x = hom.sample_points(1, seed).remove(0);
        let jet = with_flat_factor(&hom.jet_at(&x).unwrap());
        // φ = exp(u), ∂φ = φ ∂u, ∂∂φ = φ(∂∂u + ∂u ∂u)
        let du: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut ddu = vec![0.0; 36];
        for a in 0..6 {
            for b in 0..=a {
                let v = rng.gen_range(-0.5..0.5);
                ddu[a * 6 + b] = v;
                ddu[b * 6 + a] = v;
            }
        }
        let phi = rng.gen_range(0.5..2.0);
        let dphi: Vec<f64> = du.iter().map(|d| phi * d).collect();
        let ddphi: Vec<f64> = (0..36).map(|e| phi * (ddu[e] + du[e / 6] * du[e % 6])).collect();
        jet.conformal(phi, &dphi, &ddphi)
    }

    #[test]
    fn reduction_constants_are_least_squares_fits() {
        // fit at one point, verify at the others
        let mut cts = Vec::new();
        for seed in 0..20 {
            let jet = hermitian_jet(seed);
            assert_eq!(jet.setting, Setting::Hermitian);
            let p = levi_civita(&jet).unwrap();
            assert!(crate::riemann::nijenhuis_residual(&p) < 1e-12);
            cts.push(classified(&p));
        }
        let fit = |target: usize, basis: usize| {
            fit_coefficients(&[(cts[0].bi(target).clone(), vec![cts[0].bi(basis).clone()])])
        };
        for (target, basis, frozen) in [
            (8, 1, HERMITIAN_B8_SIGN),
            (9, 2, HERMITIAN_B9_SIGN),
            (10, 7, HERMITIAN_B10_SIGN),
        ] {
            let (c, res) = fit(target, basis);
            assert!(res < 1e-12 && (c[0] - frozen).abs() < 1e-12, "B{target}: {c:?} {res:e}");
        }
        assert!(cts[0].bi(7).norm() > 1e-3 * cts[0].e[0]);
        for ct in &cts[1..] {
            let rep = hermitian_reductions(ct, Setting::Hermitian, 1e-10).unwrap();
            assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
            let props = property_audit(ct, Setting::Hermitian, 1e-10);
            assert!(props.passed(), "{:?}", props.failures().collect::<Vec<_>>());
        }

        let kt = builtin("kodaira-thurston", &BTreeMap::from([("lambda1".to_string(), 1.7)])).unwrap();
        let ct = at(kt.as_ref(), &[0.3, 0.2, 0.1, 0.0]).1;
        for (target, basis, frozen) in [(8, 1, AK_B8_SIGN), (9, 2, AK_B9_SIGN)] {
            let (c, res) = fit_coefficients(&[(ct.bi(target).clone(), vec![ct.bi(basis).clone()])]);
            assert!(res < 1e-12 && (c[0] - frozen).abs() < 1e-12);
        }
    }
}

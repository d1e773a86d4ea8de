//! Identity suites over sampled points of a structure, as run by `verify`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chern::{chern_connection, chern_form_closedness, expected_torsion, hermitian_connection, Family, TorsionType};
use crate::classify::{
    ak_reductions, ak_scalar_identity, classified, dim4_ak_checks, hermitian_reductions, parity_residuals,
    property_audit,
};
use crate::flows::{flow_rhs, rhs_hcf, rhs_scf, validate_deformation, FlowFamily, FlowSpec};
use crate::report::VerificationReport;
use crate::riemann::{
    d_omega_partials, dj_cyclic_residual, dj_first_pair_residual, dj_nijenhuis_form, first_order_scale,
    identity_residuals, levi_civita, nijenhuis_residual, LcPackage,
};
use crate::structures::{fd_adapter, StructureJet, StructureProvider, FD_STEP};
use crate::tensor::{norm, rel_residual, TOL_ANALYTIC, TOL_FD};
use crate::{Error, Result};

/// Closedness tolerance on the finite-difference `dP`.
pub const CLOSEDNESS_TOL: f64 = 1e-4;

/// Tolerance of the parity and scaling audits.
pub const AUDIT_TOL: f64 = 1e-12;

/// Tolerance of the SCF consistency identities.
pub const SCF_CHECK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub points: usize,
    pub seed: u64,
    pub tol_analytic: f64,
    pub tol_fd: f64,
    pub fd_step: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            points: 20,
            seed: 0,
            tol_analytic: TOL_ANALYTIC,
            tol_fd: TOL_FD,
            fd_step: FD_STEP,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::InvalidParameter("points must be at least 1".into()));
        }
        for (name, v) in [
            ("tol-analytic", self.tol_analytic),
            ("tol-fd", self.tol_fd),
            ("fd step", self.fd_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn point_report(report: &mut VerificationReport, sub: VerificationReport, x: &[f64]) {
    report.extend_at(sub, x);
}

/// Levi-Civita identities and the setting's first-order conditions at one jet.
fn identity_checks(p: &LcPackage, jet: &StructureJet, prefix: &str, tol: f64) -> VerificationReport {
    let mut r = VerificationReport::new("identities");
    let id = |s: &str| format!("{prefix}{s}");
    let res = identity_residuals(p);
    for (name, v) in [
        ("dj-skew", res.dj_skew),
        ("dj-type", res.dj_type),
        ("first-bianchi", res.first_bianchi),
        ("ricci-identity", res.ricci_identity),
        ("curvature-of-j", res.curvature_of_j),
        ("rho-trace", res.rho_trace),
        ("lapj-type11", res.lap_j_type),
    ] {
        r.check(&id(name), None, v, tol);
    }
    if jet.setting.integrable() {
        r.check(&id("hermitian.nijenhuis"), None, nijenhuis_residual(p), tol);
        r.check(&id("hermitian.dj-first-pair"), None, dj_first_pair_residual(p, 1.0), tol);
        r.check(&id("hermitian.nijenhuis-through-dj"), None, dj_nijenhuis_form(p), tol);
    }
    if jet.setting.closed() {
        r.check(&id("ak.d-omega"), None, rel_residual(&d_omega_partials(jet), first_order_scale(jet)), tol);
        r.check(&id("ak.dj-cyclic"), None, dj_cyclic_residual(p), tol);
        r.check(&id("ak.dj-first-pair"), None, dj_first_pair_residual(p, -1.0), tol);
    }
    r
}

/// Levi-Civita identities on analytic jets and on finite-difference jets.
pub fn identity_suite(prov: Arc<dyn StructureProvider>, cfg: &SuiteConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let mut report = VerificationReport::new("identities");
    let fd = fd_adapter(prov.clone(), cfg.fd_step)?;
    for x in prov.sample_points(cfg.points, cfg.seed) {
        let jet = prov.jet_at(&x)?;
        let p = levi_civita(&jet)?;
        point_report(&mut report, identity_checks(&p, &jet, "lc.", cfg.tol_analytic), &x);
        let fjet = fd.jet_at(&x)?;
        let fp = crate::riemann::levi_civita_unchecked(&fjet);
        point_report(&mut report, identity_checks(&fp, &fjet, "lc-fd.", cfg.tol_fd), &x);
    }
    Ok(report)
}

/// Property table and the setting's reductions of the quadratic tensors.
pub fn classification_suite(prov: &dyn StructureProvider, cfg: &SuiteConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let setting = prov.setting();
    let tol = cfg.tol_analytic;
    let mut report = VerificationReport::new("classification");
    for x in prov.sample_points(cfg.points, cfg.seed) {
        let p = levi_civita(&prov.jet_at(&x)?)?;
        let ct = classified(&p);
        point_report(&mut report, property_audit(&ct, setting, tol), &x);
        if setting.closed() {
            point_report(&mut report, ak_reductions(&ct, setting, tol)?, &x);
            report.check("ak.scalar-identity", Some(&x), ak_scalar_identity(&p, &ct, setting)?, tol);
            if ct.n == 4 {
                point_report(&mut report, dim4_ak_checks(&ct, setting, tol)?, &x);
            }
        }
        if setting.integrable() {
            point_report(&mut report, hermitian_reductions(&ct, setting, tol)?, &x);
        }
    }
    Ok(report)
}

/// The Hermitian connection families: `∇g = 0`, `∇J = 0`, torsion types, and
/// `t`-independence on almost Kähler structures.
pub fn connection_suite(prov: &dyn StructureProvider, cfg: &SuiteConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let setting = prov.setting();
    let family = Family::for_setting(setting);
    let tol = cfg.tol_analytic;
    let mut report = VerificationReport::new("connections");
    for x in prov.sample_points(cfg.points, cfg.seed) {
        let p = levi_civita(&prov.jet_at(&x)?)?;
        let xs = Some(x.as_slice());
        let mut a_of_t = Vec::new();
        for t in [-1.0, 0.0, 1.0] {
            let c = hermitian_connection(&p, t, family)?;
            let r = c.residuals(&p);
            let id = |s: &str| format!("connection.t{t}.{s}");
            report.check(&id("metric"), xs, r.metric_identity, tol);
            report.check(&id("complex-structure"), xs, r.j_identity, tol);
            report.check(&id("metric-coefficients"), xs, r.metric_coeff, tol);
            report.check(&id("j-coefficients"), xs, r.j_coeff, tol);
            if let Some(kind) = expected_torsion(setting, t) {
                let name = match kind {
                    TorsionType::Type0220 => "torsion-0220",
                    TorsionType::Type11 => "torsion-11",
                    TorsionType::TotallySkew => "torsion-skew",
                };
                report.check(&id(name), xs, c.torsion_residual(&p, kind), tol);
            }
            a_of_t.push(c.a);
        }
        if family == Family::AlmostKahler {
            let scale = norm(&p.dj).max(norm(&a_of_t[2]));
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let d: Vec<f64> = a_of_t[i].iter().zip(&a_of_t[j]).map(|(a, b)| a - b).collect();
                report.check(&format!("connection.ak-t-independent.{i}{j}"), xs, rel_residual(&d, scale), tol);
            }
        }
        report.check("connection.chern", xs, chern_connection(&p, tol).map(|_| 0.0).unwrap_or(f64::INFINITY), tol);
    }
    Ok(report)
}

/// Flow right-hand sides at sampled points: every applicable flow gives a
/// genuine deformation; the SCF consistency identities and closedness of `P`
/// on almost Kähler structures; `η` of type `(1,1)` for the HCF.
pub fn flow_rhs_suite(prov: &dyn StructureProvider, cfg: &SuiteConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let setting = prov.setting();
    let mut report = VerificationReport::new("flow-rhs");
    let tol = cfg.tol_analytic;
    let points = prov.sample_points(cfg.points, cfg.seed);
    for x in &points {
        let jet = prov.jet_at(x)?;
        let p = levi_civita(&jet)?;
        let ct = classified(&p);
        let xs = Some(x.as_slice());
        let mut families = vec![(FlowSpec::ahcf(0.0, vec![], vec![]), "ahcf"), (FlowSpec::ahcf(1.0, vec![], vec![]), "ahcf-gauged")];
        if setting.closed() {
            families.push((FlowSpec::new(FlowFamily::Scf), "scf"));
        }
        if setting.integrable() {
            families.push((FlowSpec::hcf([0.0; 4]), "hcf"));
        }
        for (spec, name) in families {
            let rhs = flow_rhs(&jet, &spec)?;
            let d = validate_deformation(&rhs.h, &rhs.k, &ct.j);
            for (what, v) in d.entries() {
                report.check(&format!("deformation.{name}.{what}"), xs, v, tol);
            }
        }
        if setting.closed() {
            let c = chern_connection(&p, tol)?;
            let r = match rhs_scf(&jet, &p, &ct, &c) {
                Ok(r) => (r.h11_residual, r.k_skew_residual),
                Err(Error::FlowSpec(_)) => (f64::INFINITY, f64::INFINITY),
                Err(e) => return Err(e),
            };
            report.check("scf.h11-identity", xs, r.0, SCF_CHECK_TOL);
            report.check("scf.p0220-is-lapj-plus-n", xs, r.1, SCF_CHECK_TOL);
        }
        if setting.integrable() {
            let c = chern_connection(&p, tol)?;
            let v = match rhs_hcf(&jet, &ct, &c, &FlowSpec::hcf([0.0; 4])) {
                Ok(_) => 0.0,
                Err(Error::FlowSpec(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            report.check("hcf.eta-type11", xs, v, tol);
        }
    }
    if setting.closed() {
        for x in points.iter().take(5) {
            report.check("scf.p-closed", Some(x), chern_form_closedness(prov, x, 1e-4)?, CLOSEDNESS_TOL);
        }
    }
    Ok(report)
}

/// `J → −J` and `g → 4g` audits of the classified tensors, `ΔJ`, `Ric`, and
/// the AHCF right-hand side.
pub fn parity_scaling_suite(prov: &dyn StructureProvider, cfg: &SuiteConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let mut report = VerificationReport::new("parity-scaling");
    for x in prov.sample_points(cfg.points, cfg.seed) {
        let xs = Some(x.as_slice());
        let jet = prov.jet_at(&x)?;
        let p = levi_civita(&jet)?;
        let ct = classified(&p);
        let flipped = jet.negate_j();
        let pf = levi_civita(&flipped)?;
        let (even, odd) = parity_residuals(&ct, &classified(&pf));
        report.check("parity.classified-even", xs, even, AUDIT_TOL);
        report.check("parity.classified-odd", xs, odd, AUDIT_TOL);
        let spec = FlowSpec::ahcf(1.0, vec![], vec![]);
        let r = flow_rhs(&jet, &spec)?;
        let rf = flow_rhs(&flipped, &spec)?;
        let hs = r.h.norm().max(r.k.norm()).max(ct.ei(1)).max(p.ric.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        report.check("parity.ahcf-h-even", xs, r.h.sub(&rf.h).norm() / hs.max(1e-300), AUDIT_TOL);
        report.check("parity.ahcf-k-odd", xs, r.k.add(&rf.k).norm() / hs.max(1e-300), AUDIT_TOL);

        let big = jet.scale_metric(4.0);
        let pb = levi_civita(&big)?;
        let rs = norm(&p.ric).max(1.0);
        let d: Vec<f64> = p.ric.iter().zip(&pb.ric).map(|(a, b)| a - b).collect();
        report.check("scaling.ric-invariant", xs, norm(&d) / rs, AUDIT_TOL);
        let l = p.lap_j_endo();
        let lb = pb.lap_j_endo();
        let d: Vec<f64> = l.iter().zip(&lb).map(|(a, b)| 0.25 * a - b).collect();
        report.check("scaling.lapj-endo-quarter", xs, norm(&d) / norm(&l).max(1.0), AUDIT_TOL);
        let rb = flow_rhs(&big, &spec)?;
        report.check("scaling.ahcf-h-invariant", xs, r.h.sub(&rb.h).norm() / hs.max(1e-300), AUDIT_TOL);
        // covariant K(X,Y) = g(KX,Y) is invariant exactly when K as an endomorphism scales by ¼
        report.check("scaling.ahcf-k-endo-quarter", xs, r.k.sub(&rb.k).norm() / hs.max(1e-300), AUDIT_TOL);
    }
    Ok(report)
}

/// Every suite applicable to the structure.
pub fn full_suite(prov: Arc<dyn StructureProvider>, cfg: &SuiteConfig) -> Result<VerificationReport> {
    let mut report = VerificationReport::new(format!("verify.{}", prov.name()));
    report.extend(identity_suite(prov.clone(), cfg)?);
    report.extend(classification_suite(prov.as_ref(), cfg)?);
    report.extend(connection_suite(prov.as_ref(), cfg)?);
    report.extend(flow_rhs_suite(prov.as_ref(), cfg)?);
    report.extend(parity_scaling_suite(prov.as_ref(), cfg)?);
    Ok(report)
}

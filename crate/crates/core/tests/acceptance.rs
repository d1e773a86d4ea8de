//! Acceptance criteria, one pass/fail line each. Exits non-zero on failure.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use ahlab_core::flows::{integrate_homogeneous, FlowFamily, FlowSpec, MonitorThresholds};
use ahlab_core::report::VerificationReport;
use ahlab_core::riemann::levi_civita;
use ahlab_core::structures::{builtin, homogeneous_builtin, BUILTIN_NAMES};
use ahlab_core::suite::{
    classification_suite, connection_suite, flow_rhs_suite, identity_suite, parity_scaling_suite, SuiteConfig,
};
use ahlab_core::symbols::{ak_symbol_certificate, ellipticity_certificate, hermitian_symbol_certificate};
use ahlab_core::StructureProvider;
use nalgebra::{DMatrix, SymmetricEigen};

const TOL_ANALYTIC: f64 = 1e-9;
const TOL_FD: f64 = 1e-5;
const TOL_SYMBOL: f64 = 1e-12;
const TOL_SCF: f64 = 1e-8;
const TOL_CLOSED: f64 = 1e-4;
const TOL_MONITOR: f64 = 1e-6;
const TOL_FIXED: f64 = 1e-12;
const TOL_AUDIT: f64 = 1e-12;
const ORDER_RANGE: (f64, f64) = (12.0, 20.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn provider(name: &str) -> Arc<dyn StructureProvider> {
    builtin(name, &BTreeMap::new()).expect("built-in structure")
}

fn cfg() -> SuiteConfig {
    SuiteConfig {
        points: 20,
        seed: 2024,
        tol_analytic: TOL_ANALYTIC,
        tol_fd: TOL_FD,
        ..SuiteConfig::default()
    }
}

fn first_failure(r: &VerificationReport) -> String {
    r.failures()
        .next()
        .map(|f| format!("; first failure {} = {:e}", f.id, f.residual))
        .unwrap_or_default()
}

fn identity_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in BUILTIN_NAMES {
        let r = identity_suite(provider(name), &cfg()).expect("suite runs");
        pass &= r.passed();
        parts.push(format!(
            "{name}: analytic {:.1e}, fd {:.1e}{}",
            r.max_residual("lc."),
            r.max_residual("lc-fd."),
            first_failure(&r)
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

/// `B¹`, `B²`, `E¹` directly from `DJ` components at a point where `g = δ`.
fn dj_quadratics_at_identity_metric(dj: &[f64], n: usize) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let d = |a: usize, b: usize, c: usize| dj[(a * n + b) * n + c];
    let mut b1 = DMatrix::zeros(n, n);
    let mut b2 = DMatrix::zeros(n, n);
    let mut e1 = 0.0;
    for x in 0..n {
        for y in 0..n {
            for i in 0..n {
                for j in 0..n {
                    b1[(x, y)] += d(x, i, j) * d(y, i, j);
                    b2[(x, y)] += d(i, x, j) * d(i, y, j);
                }
            }
        }
    }
    for v in dj {
        e1 += v * v;
    }
    (b1, b2, e1)
}

fn classification_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in BUILTIN_NAMES {
        let prov = provider(name);
        let r = classification_suite(prov.as_ref(), &cfg()).expect("suite runs");
        pass &= r.passed();
        parts.push(format!("{name}: {:.1e}{}", r.max_residual(""), first_failure(&r)));
    }
    // oracle at the Kodaira–Thurston origin, where g is the identity matrix
    let kt = provider("kodaira-thurston");
    let p = levi_civita(&kt.jet_at(&[0.0; 4]).unwrap()).unwrap();
    let (b1, b2, e1) = dj_quadratics_at_identity_metric(&p.dj, 4);
    let quarter = (&b2 - DMatrix::identity(4, 4) * (0.25 * e1)).norm();
    let mut ev: Vec<f64> = SymmetricEigen::new(b1.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let spec_dev = ev
        .iter()
        .zip([0.0, 0.0, 0.5 * e1, 0.5 * e1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let top = SymmetricEigen::new(&b1 * 0.5 - &b2).eigenvalues.max();
    let oracle_ok = e1 > 0.1 && quarter < TOL_ANALYTIC && spec_dev < TOL_ANALYTIC && top < TOL_ANALYTIC;
    pass &= oracle_ok;
    parts.push(format!(
        "oracle at KT origin: E1 = {e1:.3}, |B2 - E1 g/4| = {quarter:.1e}, spectrum dev {spec_dev:.1e}, top eig of B1/2 - B2 = {top:.1e}"
    ));
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn connection_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in BUILTIN_NAMES {
        let r = connection_suite(provider(name).as_ref(), &cfg()).expect("suite runs");
        pass &= r.passed();
        parts.push(format!("{name}: {:.1e}{}", r.max_residual("connection."), first_failure(&r)));
        if name == "kodaira-thurston" {
            let n_ind = r.records.iter().filter(|c| c.id.starts_with("connection.ak-t-independent")).count();
            pass &= n_ind == 60;
            parts.push(format!("t-independence {:.1e}", r.max_residual("connection.ak-t-independent")));
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn symbol_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for dim in [4, 6] {
        for (label, r) in [
            ("ellipticity", ellipticity_certificate(11, 100, dim)),
            ("hermitian", hermitian_symbol_certificate(12, 100, dim)),
            ("ak-traced", ak_symbol_certificate(13, 100, dim)),
        ] {
            let r = r.expect("certificate runs");
            let m = r.max_residual("");
            let ok = m < TOL_SYMBOL && r.records.iter().all(|c| c.residual.is_finite());
            pass &= ok;
            parts.push(format!("{label} dim {dim}: {m:.1e}"));
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn scf_consistency_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    // Kodaira–Thurston as required, plus the non-homogeneous almost Kähler torus
    // where P does not vanish and the sign is actually tested
    for name in ["kodaira-thurston", "symplectic-torus"] {
        let r = flow_rhs_suite(provider(name).as_ref(), &cfg()).expect("suite runs");
        let h11 = r.max_residual("scf.h11-identity");
        let k = r.max_residual("scf.p0220-is-lapj-plus-n");
        let closed = r.max_residual("scf.p-closed");
        let n_points = r.records.iter().filter(|c| c.id == "scf.h11-identity").count();
        let ok = r.passed() && h11 < TOL_SCF && k < TOL_SCF && closed < TOL_CLOSED && n_points == 20;
        pass &= ok;
        parts.push(format!("{name}: h11 {h11:.1e}, P0220 {k:.1e}, |dP| {closed:.1e}{}", first_failure(&r)));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn flat_row(t: &ahlab_core::flows::Trajectory) -> Vec<f64> {
    let r = t.last();
    r.g.iter().chain(&r.jf).copied().collect()
}

fn flow_criterion() -> Outcome {
    let th = MonitorThresholds::default();
    let mut pass = true;
    let mut parts = Vec::new();

    let kt = homogeneous_builtin("kodaira-thurston", &BTreeMap::new()).unwrap();
    let scf = integrate_homogeneous(&kt, &FlowSpec::new(FlowFamily::Scf), 0.5, 1e-3, &th).unwrap();
    let compat = scf.max_monitor(|m| Some(m.compatibility));
    let j2 = scf.max_monitor(|m| Some(m.j_squared));
    let dw = scf.max_monitor(|m| m.d_omega);
    let ok = scf.completed() && scf.records.len() == 501 && compat < TOL_MONITOR && j2 < TOL_MONITOR && dw < TOL_MONITOR;
    pass &= ok;
    parts.push(format!("SCF KT: compat {compat:.1e}, J² {j2:.1e}, dω {dw:.1e}, drift {:.3}", scf.drift()));

    let hopf = homogeneous_builtin("hopf-surface", &BTreeMap::new()).unwrap();
    let hcf = integrate_homogeneous(&hopf, &FlowSpec::hcf([0.3, -0.2, 0.5, 0.1]), 0.2, 1e-3, &th).unwrap();
    let eta = hcf.max_monitor(|m| m.eta_type11);
    let min_eig = hcf.records.iter().map(|r| r.monitors.min_eig_g).fold(f64::INFINITY, f64::min);
    let ok = hcf.completed() && eta < TOL_MONITOR && min_eig > 0.0;
    pass &= ok;
    parts.push(format!("HCF Hopf: η type {eta:.1e}, min eig G {min_eig:.3}"));

    let flat = homogeneous_builtin("flat-torus", &BTreeMap::new()).unwrap();
    let mut worst: f64 = 0.0;
    for spec in [
        FlowSpec::ahcf(1.0, vec![], vec![]),
        FlowSpec::new(FlowFamily::Scf),
        FlowSpec::hcf([1.0, 1.0, 1.0, 1.0]),
    ] {
        let t = integrate_homogeneous(&flat, &spec, 0.5, 1e-2, &th).unwrap();
        pass &= t.completed();
        worst = worst.max(t.drift());
    }
    pass &= worst < TOL_FIXED;
    parts.push(format!("flat drift {worst:.1e}"));

    let spec = FlowSpec::new(FlowFamily::Scf);
    let ends: Vec<Vec<f64>> = [0.05, 0.025, 0.0125]
        .into_iter()
        .map(|dt| flat_row(&integrate_homogeneous(&kt, &spec, 0.5, dt, &th).unwrap()))
        .collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let ratio = diff(&ends[0], &ends[1]) / diff(&ends[1], &ends[2]);
    pass &= (ORDER_RANGE.0..=ORDER_RANGE.1).contains(&ratio);
    parts.push(format!("halving ratio {ratio:.2}"));
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn parity_scaling_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in BUILTIN_NAMES {
        let r = parity_scaling_suite(provider(name).as_ref(), &cfg()).expect("suite runs");
        let parity = r.max_residual("parity.");
        let scaling = r.max_residual("scaling.");
        pass &= r.passed() && parity < TOL_AUDIT && scaling < TOL_AUDIT;
        parts.push(format!("{name}: parity {parity:.1e}, scaling {scaling:.1e}{}", first_failure(&r)));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("identity suite", identity_criterion),
        ("classification suite", classification_criterion),
        ("hermitian connections", connection_criterion),
        ("symbol certificates", symbol_criterion),
        ("SCF consistency", scf_consistency_criterion),
        ("flow runs", flow_criterion),
        ("parity and scaling audits", parity_scaling_criterion),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::collections::BTreeMap;

use ahlab_core::riemann::{levi_civita, LcPackage};
use ahlab_core::structures::builtin;
use proptest::prelude::*;

fn package(name: &str, dim: usize, eps: f64, x: &[f64]) -> LcPackage {
    let params = BTreeMap::from([("dim".to_string(), dim as f64), ("epsilon".to_string(), eps)]);
    let prov = builtin(name, &params).unwrap();
    levi_civita(&prov.jet_at(x).unwrap()).unwrap()
}

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1e-300)
}

fn rm(p: &LcPackage, i: usize, j: usize, k: usize, l: usize) -> f64 {
    let n = p.n;
    p.rm[((i * n + j) * n + k) * n + l]
}

fn dj(p: &LcPackage, a: usize, b: usize, c: usize) -> f64 {
    let n = p.n;
    p.dj[(a * n + b) * n + c]
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0..3.0f64, dim)
}

fn check_curvature(p: &LcPackage) {
    let n = p.n;
    let scale = p.rm.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    err = err.max((rm(p, i, j, k, l) + rm(p, j, i, k, l)).abs());
                    err = err.max((rm(p, i, j, k, l) + rm(p, i, j, l, k)).abs());
                    err = err.max((rm(p, i, j, k, l) - rm(p, k, l, i, j)).abs());
                    err = err.max((rm(p, i, j, k, l) + rm(p, j, k, i, l) + rm(p, k, i, j, l)).abs());
                }
            }
        }
    }
    assert!(rel(err, scale) < 1e-10, "curvature symmetries {err:e}");

    let mut ric_err: f64 = 0.0;
    let mut scal = 0.0;
    for x in 0..n {
        for y in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for l in 0..n {
                    s += p.ginv[i * n + l] * rm(p, i, x, y, l);
                }
            }
            ric_err = ric_err.max((s - p.ric[x * n + y]).abs());
            scal += p.ginv[x * n + y] * s;
        }
    }
    assert!(rel(ric_err, scale) < 1e-10, "ricci trace {ric_err:e}");
    assert!(rel((scal - p.scal).abs(), scale) < 1e-10);
}

fn check_dj_type(p: &LcPackage) {
    let n = p.n;
    let scale = p.dj.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut err: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                err = err.max((dj(p, a, b, c) + dj(p, a, c, b)).abs());
                // DJ(X, JY, JZ) = −DJ(X, Y, Z)
                let mut s = 0.0;
                for u in 0..n {
                    for v in 0..n {
                        s += p.j[u * n + b] * p.j[v * n + c] * dj(p, a, u, v);
                    }
                }
                err = err.max((s + dj(p, a, b, c)).abs());
            }
        }
    }
    assert!(rel(err, scale) < 1e-10, "DJ type {err:e}");

    let mut theta_err: f64 = 0.0;
    for x in 0..n {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    s += p.ginv[a * n + b] * p.j[c * n + b] * dj(p, a, c, x);
                }
            }
        }
        theta_err = theta_err.max((s - p.theta[x]).abs());
    }
    assert!(rel(theta_err, scale) < 1e-10, "Lee form {theta_err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perturbed_torus_identities(x in point(4), eps in 0.01..0.3f64) {
        let p = package("perturbed-torus", 4, eps, &x);
        check_curvature(&p);
        check_dj_type(&p);
    }

    #[test]
    fn symplectic_torus_is_almost_kahler(x in point(4), eps in 0.01..0.4f64) {
        let p = package("symplectic-torus", 4, eps, &x);
        check_curvature(&p);
        check_dj_type(&p);
        let n = p.n;
        let scale = p.dj.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut cyc: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    cyc = cyc.max((dj(&p, a, b, c) + dj(&p, b, c, a) + dj(&p, c, a, b)).abs());
                }
            }
        }
        prop_assert!(rel(cyc, scale) < 1e-10, "dω {cyc:e}");
        prop_assert!(p.theta.iter().all(|v| v.abs() < 1e-10 * scale.max(1.0)));
    }

    #[test]
    fn six_dimensional_tori(x in point(6), eps in 0.01..0.2f64) {
        check_curvature(&package("perturbed-torus", 6, eps, &x));
        check_dj_type(&package("symplectic-torus", 6, eps, &x));
    }
}

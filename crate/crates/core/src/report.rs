//! Structured pass/fail records for identity suites.

use serde::Serialize;

/// How a residual is compared with its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// Pass iff `residual < tolerance`.
    Below,
    /// Pass iff `residual > tolerance` (non-vanishing assertions).
    Above,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: String,
    pub point: Option<Vec<f64>>,
    pub residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub suite: String,
    pub records: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>) -> Self {
        VerificationReport {
            suite: suite.into(),
            records: Vec::new(),
        }
    }

    fn record(&mut self, id: &str, point: Option<&[f64]>, residual: f64, tolerance: f64, bound: Bound) {
        let pass = match bound {
            Bound::Below => residual < tolerance,
            Bound::Above => residual > tolerance,
        };
        self.records.push(CheckRecord {
            id: id.to_string(),
            point: point.map(<[f64]>::to_vec),
            residual,
            tolerance,
            bound,
            pass,
        });
    }

    /// Records `residual < tolerance`; NaN fails.
    pub fn check(&mut self, id: &str, point: Option<&[f64]>, residual: f64, tolerance: f64) {
        self.record(id, point, residual, tolerance, Bound::Below);
    }

    /// Records `value > threshold`.
    pub fn check_above(&mut self, id: &str, point: Option<&[f64]>, value: f64, threshold: f64) {
        self.record(id, point, value, threshold, Bound::Above);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.records.extend(other.records);
    }

    /// Copies `other`'s records, attaching `point` to those without one.
    pub fn extend_at(&mut self, other: VerificationReport, point: &[f64]) {
        for mut r in other.records {
            if r.point.is_none() {
                r.point = Some(point.to_vec());
            }
            self.records.push(r);
        }
    }

    pub fn summary(&self) -> Summary {
        let passed = self.records.iter().filter(|r| r.pass).count();
        Summary {
            total: self.records.len(),
            passed,
            failed: self.records.len() - passed,
        }
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// Largest residual among `Below` records whose id starts with `prefix`.
    pub fn max_residual(&self, prefix: &str) -> f64 {
        self.records
            .iter()
            .filter(|r| r.bound == Bound::Below && r.id.starts_with(prefix))
            .map(|r| r.residual)
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }

    pub fn get(&self, id: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tallies_match_records() {
        let mut r = VerificationReport::new("t");
        r.check("a", None, 1e-12, 1e-9);
        r.check("b", Some(&[0.0, 1.0]), 1e-3, 1e-9);
        r.check("c", None, f64::NAN, 1e-9);
        r.check_above("d", None, 0.5, 1e-6);
        let s = r.summary();
        assert_eq!((s.total, s.passed, s.failed), (4, 2, 2));
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 2);
        assert!(r.max_residual("a").eq(&1e-12));
        assert!(r.max_residual("").is_nan());
    }

    #[test]
    fn extend_at_fills_missing_points() {
        let mut inner = VerificationReport::new("i");
        inner.check("x", None, 0.0, 1.0);
        inner.check("y", Some(&[2.0]), 0.0, 1.0);
        let mut outer = VerificationReport::new("o");
        outer.extend_at(inner, &[1.0]);
        assert_eq!(outer.records[0].point, Some(vec![1.0]));
        assert_eq!(outer.records[1].point, Some(vec![2.0]));
    }
}

//! Per-axiom validation reports with witnesses.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Maximum number of witnesses kept per axiom.
pub const MAX_WITNESSES: usize = 5;

/// An index tuple at which an axiom was evaluated, with its normalized residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub indices: Vec<usize>,
    pub residual: f64,
}

/// Outcome of one axiom check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomStatus {
    pub label: String,
    pub passed: bool,
    pub evaluations: usize,
    pub max_residual: f64,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl AxiomStatus {
    fn new(label: &str) -> Self {
        AxiomStatus {
            label: label.to_string(),
            passed: true,
            evaluations: 0,
            max_residual: 0.0,
            witnesses: Vec::new(),
            note: None,
        }
    }
}

/// Collected results of a validator run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub tolerance: f64,
    pub checks: Vec<AxiomStatus>,
    pub structural: Vec<String>,
}

impl ValidationReport {
    pub fn new(subject: impl Into<String>, tolerance: f64) -> Self {
        ValidationReport {
            subject: subject.into(),
            tolerance,
            checks: Vec::new(),
            structural: Vec::new(),
        }
    }

    fn entry(&mut self, label: &str) -> &mut AxiomStatus {
        if let Some(pos) = self.checks.iter().position(|c| c.label == label) {
            &mut self.checks[pos]
        } else {
            self.checks.push(AxiomStatus::new(label));
            self.checks.last_mut().expect("just pushed")
        }
    }

    /// Registers an axiom so that it appears in the report even with no evaluations.
    pub fn declare(&mut self, label: &str) {
        self.entry(label);
    }

    /// Records a normalized residual; the evaluation fails when it exceeds the tolerance.
    pub fn residual(&mut self, label: &str, indices: &[usize], residual: f64) {
        let tol = self.tolerance;
        let ok = residual.is_finite() && residual <= tol;
        self.outcome(label, indices, residual, ok);
    }

    /// Records a boolean outcome with an explicit residual.
    pub fn outcome(&mut self, label: &str, indices: &[usize], residual: f64, ok: bool) {
        let e = self.entry(label);
        e.evaluations += 1;
        let r = if residual.is_nan() {
            f64::INFINITY
        } else {
            residual
        };
        if r > e.max_residual {
            e.max_residual = r;
        }
        if !ok {
            e.passed = false;
            if e.witnesses.len() < MAX_WITNESSES {
                e.witnesses.push(Witness {
                    indices: indices.to_vec(),
                    residual: r,
                });
            }
        }
    }

    /// Records a yes/no condition with residual 1 on failure.
    pub fn require(&mut self, label: &str, indices: &[usize], ok: bool) {
        self.outcome(label, indices, if ok { 0.0 } else { 1.0 }, ok);
    }

    pub fn note(&mut self, label: &str, note: &str) {
        self.entry(label).note = Some(note.to_string());
    }

    pub fn structural_error(&mut self, msg: impl Into<String>) {
        self.structural.push(msg.into());
    }

    /// Appends all checks of another report, prefixing nothing.
    pub fn merge(&mut self, other: ValidationReport) {
        for c in other.checks {
            let e = self.entry(&c.label);
            e.evaluations += c.evaluations;
            e.max_residual = e.max_residual.max(c.max_residual);
            e.passed &= c.passed;
            for w in c.witnesses {
                if e.witnesses.len() < MAX_WITNESSES {
                    e.witnesses.push(w);
                }
            }
            if c.note.is_some() {
                e.note = c.note;
            }
        }
        self.structural.extend(other.structural);
    }

    pub fn passed(&self) -> bool {
        self.structural.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn has_structural_errors(&self) -> bool {
        !self.structural.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn status(&self, label: &str) -> Option<&AxiomStatus> {
        self.checks.iter().find(|c| c.label == label)
    }

    pub fn failed_labels(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.label.clone())
            .collect()
    }

    /// Machine-readable JSON rendering.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} (max residual {:.3e}, tol {:.1e})",
            self.subject,
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_residual(),
            self.tolerance
        )?;
        for s in &self.structural {
            writeln!(f, "  structural: {s}")?;
        }
        for c in &self.checks {
            write!(
                f,
                "  {:<10} {} evals={} max_residual={:.3e}",
                c.label,
                if c.passed { "pass" } else { "FAIL" },
                c.evaluations,
                c.max_residual
            )?;
            if let Some(n) = &c.note {
                write!(f, " ({n})")?;
            }
            writeln!(f)?;
            for w in &c.witnesses {
                writeln!(f, "    witness {:?} residual {:.3e}", w.indices, w.residual)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_residual_records_witness() {
        let mut r = ValidationReport::new("t", 1e-9);
        r.residual("F3", &[0, 1, 2], 1e-12);
        r.residual("F3", &[1, 1, 1], 0.5);
        let s = r.status("F3").unwrap();
        assert!(!s.passed);
        assert_eq!(s.evaluations, 2);
        assert_eq!(
            s.witnesses,
            vec![Witness {
                indices: vec![1, 1, 1],
                residual: 0.5
            }]
        );
        assert!(!r.passed());
    }

    #[test]
    fn nan_residual_fails() {
        let mut r = ValidationReport::new("t", 1e-9);
        r.residual("X", &[], f64::NAN);
        assert!(!r.passed());
    }
}

//! Machine-readable verification reports.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Direction of a check: residuals must stay at or below the tolerance
/// (`Upper`), or exceed it (`Lower`, used for negative controls and for
/// measured orders).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub max_abs_residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
    pub samples: usize,
    /// Samples left out because the immersion degenerates there.
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn upper(name: &str, residual: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            max_abs_residual: residual,
            tolerance,
            bound: Bound::Upper,
            pass: residual <= tolerance,
            samples: 1,
            skipped: 0,
            note: None,
        }
    }

    pub fn lower(name: &str, value: f64, threshold: f64) -> Self {
        Check { bound: Bound::Lower, pass: value > threshold, ..Check::upper(name, value, threshold) }
    }

    pub fn counts(mut self, samples: usize, skipped: usize) -> Self {
        self.samples = samples;
        self.skipped = skipped;
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub tool: String,
    pub tool_version: String,
    pub input: serde_json::Value,
    pub checks: Vec<Check>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl VerificationReport {
    pub fn new(input: serde_json::Value, checks: Vec<Check>) -> Self {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        VerificationReport {
            schema: REPORT_SCHEMA,
            tool: "s3flat".into(),
            tool_version: TOOL_VERSION.into(),
            input,
            checks,
            pass,
            timestamp: None,
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Stamps the report with the current Unix time in seconds.
    pub fn with_timestamp(mut self) -> Self {
        self.timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

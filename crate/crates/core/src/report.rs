//! Verification reports, the append-only campaign ledger and CSV export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Pass iff |difference| ≤ max(sigmas·stderr, bias allowance).
    pub fn judge(difference: f64, stderr: f64, sigmas: f64, bias_allowance: f64) -> Self {
        if !difference.is_finite() || stderr.is_nan() {
            return Verdict::Inconclusive;
        }
        let band = if stderr.is_finite() { (sigmas * stderr).max(bias_allowance) } else { f64::INFINITY };
        if band.is_infinite() {
            Verdict::Inconclusive
        } else if difference.abs() <= band {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// A reference value with a label describing where it comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub identity: String,
    pub group: String,
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
    pub references: Vec<Reference>,
    pub difference: f64,
    pub bias_allowance: f64,
    pub verdict: Verdict,
    pub seed: u64,
    pub config_digest: String,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub details: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl VerificationReport {
    /// Statistical check of `estimate` against `reference`.
    #[allow(clippy::too_many_arguments)]
    pub fn statistical(
        identity: &str,
        group: &str,
        estimate: f64,
        stderr: f64,
        samples: u64,
        reference: Reference,
        bias_allowance: f64,
        seed: u64,
        config: serde_json::Value,
    ) -> Self {
        let difference = estimate - reference.value;
        let verdict = Verdict::judge(difference, stderr, 3.0, bias_allowance);
        Self {
            identity: identity.into(),
            group: group.into(),
            estimate,
            stderr,
            samples,
            references: vec![reference],
            difference,
            bias_allowance,
            verdict,
            seed,
            config_digest: config_digest(&config),
            config,
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Deterministic check: `error` must not exceed `tolerance`.
    pub fn exact(identity: &str, group: &str, error: f64, tolerance: f64, samples: u64, seed: u64, config: serde_json::Value) -> Self {
        Self {
            identity: identity.into(),
            group: group.into(),
            estimate: error,
            stderr: 0.0,
            samples,
            references: vec![Reference {
                label: "exact".into(),
                value: 0.0,
            }],
            difference: error,
            bias_allowance: tolerance,
            verdict: Verdict::from_bool(error.is_finite() && error.abs() <= tolerance),
            seed,
            config_digest: config_digest(&config),
            config,
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, v: f64) -> Self {
        self.details.insert(key.into(), v);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_reference(mut self, label: &str, value: f64) -> Self {
        self.references.push(Reference {
            label: label.into(),
            value,
        });
        self
    }

    /// Overrides the verdict; used when a check combines several conditions.
    pub fn with_verdict(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{:<12} {:<44} {:<8} est={:<+12.6e} se={:<10.3e} ref={:<+12.6e} diff={:+.3e}",
            self.verdict.as_str().to_uppercase(),
            self.identity,
            self.group,
            self.estimate,
            self.stderr,
            self.references.first().map_or(f64::NAN, |r| r.value),
            self.difference
        )
    }
}

/// First 16 hex digits of SHA-256 over the canonical JSON text.
pub fn config_digest(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).unwrap_or_default();
    hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
}

/// Appends reports to a JSON-lines ledger.
pub fn append_ledger(path: &Path, reports: &[VerificationReport]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    for r in reports {
        writeln!(f, "{}", r.to_json()?)?;
    }
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<VerificationReport>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("ledger line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub const CSV_HEADER: &str = "identity,group,estimate,stderr,reference,verdict";

/// CSV with a fixed column order; floats use shortest round-trip formatting.
pub fn to_csv(reports: &[VerificationReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            csv_field(&r.identity),
            csv_field(&r.group),
            r.estimate,
            r.stderr,
            r.references.first().map_or(f64::NAN, |x| x.value),
            r.verdict.as_str()
        );
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub identity: String,
    pub group: String,
    pub estimate: f64,
    pub stderr: f64,
    pub reference: f64,
    pub verdict: String,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("unexpected csv header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f = split_csv(l);
            if f.len() != 6 {
                return Err(Error::Format(format!("expected 6 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(e.to_string()));
            Ok(CsvRow {
                identity: f[0].clone(),
                group: f[1].clone(),
                estimate: num(&f[2])?,
                stderr: num(&f[3])?,
                reference: num(&f[4])?,
                verdict: f[5].clone(),
            })
        })
        .collect()
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

/// Human-readable table, one line per report.
pub fn render_table(reports: &[VerificationReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&r.summary_line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> VerificationReport {
        VerificationReport::statistical(
            "girsanov.normalization, right",
            "so3",
            1.0021,
            0.0015,
            100_000,
            Reference { label: "closed form".into(), value: 1.0 },
            0.0,
            7,
            json!({"N": 200}),
        )
    }

    #[test]
    fn verdict_rules() {
        assert_eq!(Verdict::judge(0.003, 0.001, 3.0, 0.0), Verdict::Pass);
        assert_eq!(Verdict::judge(0.0031, 0.001, 3.0, 0.0), Verdict::Fail);
        assert_eq!(Verdict::judge(0.0031, 0.001, 3.0, 0.004), Verdict::Pass);
        assert_eq!(Verdict::judge(0.1, f64::INFINITY, 3.0, 0.0), Verdict::Inconclusive);
        assert_eq!(Verdict::judge(f64::NAN, 0.1, 3.0, 0.0), Verdict::Inconclusive);
        assert!(sample().passed());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(config_digest(&json!({"a": 1})), config_digest(&json!({"a": 1})));
        assert_ne!(config_digest(&json!({"a": 1})), config_digest(&json!({"a": 2})));
    }

    #[test]
    fn csv_round_trips_numerically() {
        let mut r2 = sample();
        r2.estimate = 1.0 / 3.0;
        r2.identity = "name, with \"quotes\"".into();
        let text = to_csv(&[sample(), r2.clone()]);
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].estimate, 1.0 / 3.0);
        assert_eq!(rows[1].identity, r2.identity);
        assert_eq!(rows[0].verdict, "pass");
        assert!(to_csv(&[]).lines().count() == 1);
    }

    #[test]
    fn ledger_appends() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ledger.jsonl");
        append_ledger(&p, &[sample()]).unwrap();
        append_ledger(&p, &[sample(), sample()]).unwrap();
        let back = read_ledger(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0], sample());
    }
}

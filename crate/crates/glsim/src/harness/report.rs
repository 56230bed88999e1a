//! Acceptance-report records and their JSON/CSV serializations.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One verification line: an estimate with its interval, the pass flag, and
/// the citation key of the statement it checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatReport {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pass: bool,
    pub paper_ref: String,
}

impl StatReport {
    /// An exact (tolerance-free) check.
    pub fn exact(name: &str, pass: bool, paper_ref: &str) -> Self {
        StatReport {
            name: name.into(),
            estimate: if pass { 1.0 } else { 0.0 },
            stderr: 0.0,
            ci_low: if pass { 1.0 } else { 0.0 },
            ci_high: if pass { 1.0 } else { 0.0 },
            pass,
            paper_ref: paper_ref.into(),
        }
    }

    /// A measured statistic with a symmetric interval.
    pub fn measured(
        name: &str,
        estimate: f64,
        stderr: f64,
        halfwidth: f64,
        pass: bool,
        paper_ref: &str,
    ) -> Self {
        StatReport {
            name: name.into(),
            estimate,
            stderr,
            ci_low: estimate - halfwidth,
            ci_high: estimate + halfwidth,
            pass,
            paper_ref: paper_ref.into(),
        }
    }

    /// A check that panicked; recorded as a failure so the suite continues.
    pub fn crashed(name: &str, what: &str) -> Self {
        StatReport {
            name: format!("{name} [crashed: {what}]"),
            estimate: f64::NAN,
            stderr: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            pass: false,
            paper_ref: "crash".into(),
        }
    }
}

pub fn write_reports_json(path: &Path, reports: &[StatReport]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(reports).expect("report serialization");
    f.write_all(text.as_bytes())
}

pub fn write_reports_csv(path: &Path, reports: &[StatReport]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "name,estimate,stderr,ci_low,ci_high,pass,paper_ref")?;
    for r in reports {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.name.replace(',', ";"),
            r.estimate,
            r.stderr,
            r.ci_low,
            r.ci_high,
            r.pass,
            r.paper_ref.replace(',', ";")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_brackets_estimate() {
        let r = StatReport::measured("x", 1.5, 0.1, 0.3, true, "ref");
        assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
    }

    #[test]
    fn json_round_trip() {
        let r = StatReport::measured("a", 0.5, 0.01, 0.05, true, "gl::eqn::ee");
        let text = serde_json::to_string(&r).unwrap();
        let back: StatReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, r.name);
        assert_eq!(back.pass, r.pass);
        assert_eq!(back.paper_ref, r.paper_ref);
    }
}

//! `report.json` and the exit-code contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fde_core::asymptotics::{Outcome, TheoremVerdict};
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub files: BTreeMap<String, PathBuf>,
    pub verdicts: Vec<TheoremVerdict>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    pub timings: BTreeMap<String, f64>,
    pub exit_code: i32,
}

/// One line of the aggregated sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub run: usize,
    pub alpha: Option<f64>,
    pub measure: Option<usize>,
    pub directory: PathBuf,
    pub regime: String,
    pub predicted: f64,
    pub estimated: f64,
    pub outcome: String,
    pub exit_code: i32,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            tool: "fdegrowth",
            version: env!("CARGO_PKG_VERSION"),
            config,
            files: BTreeMap::new(),
            verdicts: Vec::new(),
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
            error: None,
            sweep: Vec::new(),
            timings: BTreeMap::new(),
            exit_code: EXIT_PASS,
        }
    }

    pub fn diagnostic(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.diagnostics.insert(key.to_owned(), v);
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(REPORT_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// 0 when every verdict passes, 2 when any fails, otherwise 3 when any is
/// inconclusive.
pub fn exit_code_for(verdicts: &[TheoremVerdict]) -> i32 {
    if verdicts.iter().any(|v| v.outcome == Outcome::Fail) {
        EXIT_FAIL
    } else if verdicts.iter().any(|v| v.outcome == Outcome::Inconclusive) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_PASS
    }
}

/// Combined exit code of several runs: runtime errors dominate, then
/// failures, then inconclusive results.
pub fn combine_exit_codes(codes: impl IntoIterator<Item = i32>) -> i32 {
    let rank = |c: i32| match c {
        EXIT_RUNTIME => 4,
        EXIT_CONFIG => 3,
        EXIT_FAIL => 2,
        EXIT_INCONCLUSIVE => 1,
        _ => 0,
    };
    codes.into_iter().max_by_key(|&c| rank(c)).unwrap_or(EXIT_PASS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(outcome: Outcome) -> TheoremVerdict {
        let mut v = TheoremVerdict::relative("c", "r", 1.0, 1.0, 0.0, 0.1);
        v.outcome = outcome;
        v
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code_for(&[verdict(Outcome::Pass), verdict(Outcome::Trivial)]), EXIT_PASS);
        assert_eq!(exit_code_for(&[verdict(Outcome::Pass), verdict(Outcome::Inconclusive)]), EXIT_INCONCLUSIVE);
        assert_eq!(exit_code_for(&[verdict(Outcome::Inconclusive), verdict(Outcome::Fail)]), EXIT_FAIL);
        assert_eq!(combine_exit_codes([0, 3, 2, 0]), 2);
        assert_eq!(combine_exit_codes([0, 4, 2]), 4);
        assert_eq!(combine_exit_codes([]), 0);
    }
}

//! The JSON run report.

use ballcrit::hypotheses::CheckVerdict;
use ballcrit::pde::RefinementReport;
use ballcrit::{CertificateReport, LambdaStarResult, SolveReport, StructureConstants};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub constants: Option<StructureConstants>,
    pub lambda_star: Option<LambdaStarResult>,
    pub eigenvalues: Option<Vec<f64>>,
    pub hypotheses: Vec<CheckVerdict>,
    pub certificate: Option<CertificateReport>,
    pub results: Vec<LambdaResult>,
    pub refinement: Option<RefinementReport>,
    pub exit_code: i32,
    /// Wall-clock figures; the only part of the report that varies between
    /// identical runs.
    pub timing: Timing,
}

/// One λ of a pipeline or sweep run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaResult {
    pub index: usize,
    pub lambda: f64,
    pub seed: u64,
    pub solve: SolveReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub per_lambda_seconds: Vec<f64>,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.solver.seed,
            config: config.clone(),
            constants: None,
            lambda_star: None,
            eigenvalues: None,
            hypotheses: Vec::new(),
            certificate: None,
            results: Vec::new(),
            refinement: None,
            exit_code: 0,
            timing: Timing::default(),
        }
    }

    /// Pretty JSON. Fails if some number is not finite, since JSON cannot
    /// carry it back.
    pub fn to_json(&self) -> Result<String, CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
        match Self::from_json(&text) {
            Ok(back) if back == *self => Ok(text),
            _ => Err(CliError::NotConverged(
                "report contains non-finite numbers and cannot be written faithfully".into(),
            )),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Malformed(format!("report: {e}")))
    }

    /// JSON with the `timing` section removed, for run-to-run comparison.
    pub fn without_timing(text: &str) -> Result<String, CliError> {
        let mut v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Malformed(format!("report: {e}")))?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        Ok(v.to_string())
    }
}

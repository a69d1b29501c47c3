//! Report documents: one JSON record per line, with a versioned schema.
//!
//! A document always starts with a header record carrying the schema
//! version and the scenario it was produced from, followed by per-trial
//! digests, exactly one aggregate record and any number of efficiency
//! figures. Serialization is deterministic: the same document renders to
//! the same bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    qubit_efficiency, EfficiencyFigure, MonteCarloRun, ProtocolLabel, TrialAggregate,
};
use crate::bits::BitString;
use crate::config::ScenarioConfig;
use crate::protocol::RunReport;

pub const SCHEMA_VERSION: u32 = 1;

/// Compact, serializable summary of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDigest {
    pub trial: u64,
    pub aborted: bool,
    pub failed_detection: Option<usize>,
    pub desired_key: Option<BitString>,
    pub final_keys: Option<Vec<BitString>>,
    pub attack_flags: BTreeMap<String, bool>,
    pub detections: usize,
    pub decoys_checked: usize,
    pub decoy_errors: usize,
    pub mean_error_rate: f64,
}

impl TrialDigest {
    pub fn from_report(trial: u64, report: &RunReport) -> Self {
        let decoys_checked = report
            .detections
            .iter()
            .map(|record| record.decoys_checked)
            .sum();
        let decoy_errors = report.detections.iter().map(|record| record.errors).sum();
        let mean_error_rate = if report.detections.is_empty() {
            0.0
        } else {
            report
                .detections
                .iter()
                .map(|record| record.error_rate)
                .sum::<f64>()
                / report.detections.len() as f64
        };
        TrialDigest {
            trial,
            aborted: report.aborted,
            failed_detection: report.failed_detection,
            desired_key: report.desired_key.clone(),
            final_keys: report.final_keys.clone(),
            attack_flags: report.attack_flags.clone(),
            detections: report.detections.len(),
            decoys_checked,
            decoy_errors,
            mean_error_rate,
        }
    }
}

/// A full report: scenario, per-trial digests, aggregate and efficiency
/// figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub trials: Vec<TrialDigest>,
    pub aggregate: TrialAggregate,
    pub efficiency: Vec<EfficiencyFigure>,
}

impl ReportDocument {
    /// Assembles the standard document for one Monte Carlo run: all trial
    /// digests plus the efficiency figures of both protocol variants at the
    /// scenario's ring size and decoy rate.
    pub fn from_run(config: &ScenarioConfig, run: &MonteCarloRun) -> Self {
        let trials = run
            .reports
            .iter()
            .enumerate()
            .map(|(trial, report)| TrialDigest::from_report(trial as u64, report))
            .collect();
        let efficiency = [ProtocolLabel::Smqka, ProtocolLabel::LiuMqka]
            .into_iter()
            .map(|label| {
                qubit_efficiency(label, config.participants, config.k)
                    .expect("validated configs have at least three participants")
            })
            .collect();
        ReportDocument {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            trials,
            aggregate: run.aggregate.clone(),
            efficiency,
        }
    }

    /// Renders the document as line-delimited JSON records.
    pub fn to_records(&self) -> String {
        let mut lines = Vec::with_capacity(2 + self.trials.len() + self.efficiency.len());
        let push = |lines: &mut Vec<String>, record: &Record| {
            lines.push(serde_json::to_string(record).expect("records serialize"));
        };
        push(
            &mut lines,
            &Record::Header {
                schema_version: self.schema_version,
                config: self.config.clone(),
            },
        );
        for digest in &self.trials {
            push(
                &mut lines,
                &Record::Trial {
                    digest: digest.clone(),
                },
            );
        }
        push(
            &mut lines,
            &Record::Aggregate {
                aggregate: self.aggregate.clone(),
            },
        );
        for figure in &self.efficiency {
            push(
                &mut lines,
                &Record::Efficiency {
                    figure: figure.clone(),
                },
            );
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// Parses a document back from its record form; inverse of
    /// [`ReportDocument::to_records`].
    pub fn from_records(text: &str) -> Result<Self, ReportError> {
        let mut lines = text.lines().filter(|line| !line.trim().is_empty());
        let first = lines.next().ok_or(ReportError::MissingHeader)?;
        let Record::Header {
            schema_version,
            config,
        } = serde_json::from_str(first)?
        else {
            return Err(ReportError::MissingHeader);
        };
        if schema_version != SCHEMA_VERSION {
            return Err(ReportError::UnsupportedVersion {
                found: schema_version,
            });
        }
        let mut trials = Vec::new();
        let mut aggregate = None;
        let mut efficiency = Vec::new();
        for line in lines {
            match serde_json::from_str(line)? {
                Record::Header { .. } => return Err(ReportError::DuplicateHeader),
                Record::Trial { digest } => trials.push(digest),
                Record::Aggregate { aggregate: found } => {
                    if aggregate.replace(found).is_some() {
                        return Err(ReportError::DuplicateAggregate);
                    }
                }
                Record::Efficiency { figure } => efficiency.push(figure),
            }
        }
        Ok(ReportDocument {
            schema_version,
            config,
            trials,
            aggregate: aggregate.ok_or(ReportError::MissingAggregate)?,
            efficiency,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        schema_version: u32,
        config: ScenarioConfig,
    },
    Trial {
        #[serde(flatten)]
        digest: TrialDigest,
    },
    Aggregate {
        #[serde(flatten)]
        aggregate: TrialAggregate,
    },
    Efficiency {
        #[serde(flatten)]
        figure: EfficiencyFigure,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("a report must start with its header record")]
    MissingHeader,
    #[error("a report holds exactly one header record")]
    DuplicateHeader,
    #[error("a report holds exactly one aggregate record")]
    DuplicateAggregate,
    #[error("a report must hold an aggregate record")]
    MissingAggregate,
    #[error("unsupported schema version {found}")]
    UnsupportedVersion { found: u32 },
}

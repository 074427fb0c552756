//! One JSON line per reference computation or task.

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use striplab::lyapunov::LyapunovEstimate;
use striplab::model::SCHEMA_VERSION;

use crate::config::Experiment;
use crate::experiments::{References, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    Reference,
    Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: Experiment,
    pub kind: RecordKind,
    pub index: usize,
    pub seed: u64,
    pub energy: Option<f64>,
    pub size: Option<usize>,
    pub replica: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub result: serde_json::Value,
}

impl Record {
    pub fn task(experiment: Experiment, config_hash: &str, task: &Task, outcome: Result<serde_json::Value, String>) -> Self {
        let (ok, error, result) = match outcome {
            Ok(v) => (true, None, v),
            Err(e) => (false, Some(e), serde_json::Value::Null),
        };
        Record {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.into(),
            experiment,
            kind: RecordKind::Task,
            index: task.index,
            seed: task.seed,
            energy: task.energy,
            size: task.size,
            replica: task.replica,
            ok,
            error,
            result,
        }
    }

    pub fn references(experiment: Experiment, config_hash: &str, refs: &References) -> Vec<Self> {
        refs.estimates
            .iter()
            .enumerate()
            .map(|(index, r)| Record {
                schema_version: SCHEMA_VERSION,
                config_hash: config_hash.into(),
                experiment,
                kind: RecordKind::Reference,
                index,
                seed: refs.seed,
                energy: Some(r.energy),
                size: Some(r.steps),
                replica: None,
                ok: true,
                error: None,
                result: serde_json::to_value(r).expect("estimate serializes"),
            })
            .collect()
    }

    pub fn payload<T: DeserializeOwned>(&self) -> anyhow::Result<T> {
        serde_json::from_value(self.result.clone())
            .with_context(|| format!("malformed result in {:?} record {}", self.kind, self.index))
    }
}

/// Rebuild the reference set from its records.
pub fn references_from(records: &[Record]) -> anyhow::Result<References> {
    let refs: Vec<&Record> = records.iter().filter(|r| r.kind == RecordKind::Reference).collect();
    let seed = refs.first().map_or(0, |r| r.seed);
    let estimates = refs.iter().map(|r| r.payload::<LyapunovEstimate>()).collect::<anyhow::Result<Vec<_>>>()?;
    Ok(References { seed, estimates })
}

/// Successful task records decoded as `T`, in task order.
pub fn task_payloads<T: DeserializeOwned>(records: &[Record]) -> anyhow::Result<Vec<(&Record, T)>> {
    records
        .iter()
        .filter(|r| r.kind == RecordKind::Task && r.ok)
        .map(|r| Ok((r, r.payload::<T>()?)))
        .collect()
}

pub fn parse_line(line: &str) -> anyhow::Result<Record> {
    Ok(serde_json::from_str(line)?)
}

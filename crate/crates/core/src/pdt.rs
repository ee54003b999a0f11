//! Product digital twin instances.
//!
//! A [`PdtInstance`] binds one physical product (by serial number) to a model
//! version via its digest, records per-component health and keeps an
//! append-only, monotonically timestamped event log. Broken components drive
//! repair planning.
//!
//! Nothing here reads the clock: every mutation takes an explicit timestamp.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{load_pdt, model_digest, save_pdt, IoError};
use crate::model::{is_valid_id, BiPanModel, NodeId, ProductKind};
use crate::plan::{repair_plan, Plan, PlanError, SkillInversion};
use crate::validate::validate;

#[derive(Debug, Error)]
pub enum PdtError {
    #[error("instance id must not be empty")]
    EmptyId,
    #[error("instance id {0:?} must match [A-Za-z0-9_.-]+")]
    InvalidId(String),
    #[error("model has validation errors")]
    InvalidModel,
    #[error("`{0}` has no health record (only leaf components are tracked)")]
    UnknownComponent(String),
    #[error("timestamp {given} is earlier than the last event at {last}")]
    TimeRegression { given: Timestamp, last: Timestamp },
    #[error("invalid timestamp {0:?}: expected ISO-8601 UTC such as 2024-05-01T10:00:00Z")]
    InvalidTimestamp(String),
    #[error("instance is bound to model digest {expected}, model has {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("no component is marked broken")]
    NothingBroken,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PdtError {
    pub fn code(&self) -> &'static str {
        match self {
            PdtError::EmptyId => "empty-id",
            PdtError::InvalidId(_) => "invalid-id",
            PdtError::InvalidModel => "invalid-model",
            PdtError::UnknownComponent(_) => "unknown-component",
            PdtError::TimeRegression { .. } => "time-regression",
            PdtError::InvalidTimestamp(_) => "invalid-timestamp",
            PdtError::DigestMismatch { .. } => "digest-mismatch",
            PdtError::NothingBroken => "nothing-broken",
            PdtError::Plan(e) => e.code(),
            PdtError::Io(e) => e.code(),
            PdtError::File { .. } => "io",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Health {
    Ok,
    Degraded,
    Broken,
    Unknown,
}

impl Health {
    pub fn name(self) -> &'static str {
        match self {
            Health::Ok => "ok",
            Health::Degraded => "degraded",
            Health::Broken => "broken",
            Health::Unknown => "unknown",
        }
    }
}

impl std::str::FromStr for Health {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ok" => Ok(Health::Ok),
            "degraded" => Ok(Health::Degraded),
            "broken" => Ok(Health::Broken),
            "unknown" => Ok(Health::Unknown),
            _ => Err(format!(
                "unknown health {s:?} (ok, degraded, broken, unknown)"
            )),
        }
    }
}

impl fmt::Display for Health {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// ISO-8601 UTC timestamp, kept verbatim and ordered by instant.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp {
    text: String,
    instant: DateTime<FixedOffset>,
}

impl Timestamp {
    pub fn parse(text: &str) -> Result<Self, PdtError> {
        let invalid = || PdtError::InvalidTimestamp(text.to_string());
        if !text.ends_with('Z') {
            return Err(invalid());
        }
        let instant = DateTime::parse_from_rfc3339(text).map_err(|_| invalid())?;
        Ok(Timestamp {
            text: text.to_string(),
            instant,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl TryFrom<String> for Timestamp {
    type Error = PdtError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Timestamp::parse(&value)
    }
}

impl From<Timestamp> for String {
    fn from(t: Timestamp) -> Self {
        t.text
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.instant == other.instant
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.instant.cmp(&other.instant)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub timestamp: Timestamp,
    pub kind: String,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdtInstance {
    pub instance_id: String,
    pub model_id: String,
    pub model_digest: String,
    pub health: BTreeMap<NodeId, Health>,
    pub events: Vec<Event>,
}

impl PdtInstance {
    /// A fresh twin with every replaceable component in state `Unknown`.
    pub fn create(instance_id: &str, model: &BiPanModel) -> Result<Self, PdtError> {
        if instance_id.is_empty() {
            return Err(PdtError::EmptyId);
        }
        if !is_valid_id(instance_id) {
            return Err(PdtError::InvalidId(instance_id.to_string()));
        }
        if validate(model).has_errors() {
            return Err(PdtError::InvalidModel);
        }
        let health = model
            .products()
            .filter(|p| !matches!(p.kind, ProductKind::Stage | ProductKind::Final))
            .map(|p| (p.id.clone(), Health::Unknown))
            .collect();
        Ok(PdtInstance {
            instance_id: instance_id.to_string(),
            model_id: model.id().to_string(),
            model_digest: model_digest(model),
            health,
            events: Vec::new(),
        })
    }

    pub fn last_timestamp(&self) -> Option<&Timestamp> {
        self.events.last().map(|e| &e.timestamp)
    }

    fn append(
        &mut self,
        timestamp: Timestamp,
        kind: &str,
        payload: BTreeMap<String, String>,
    ) -> Result<(), PdtError> {
        if let Some(last) = self.last_timestamp() {
            if timestamp < *last {
                return Err(PdtError::TimeRegression {
                    given: timestamp,
                    last: last.clone(),
                });
            }
        }
        self.events.push(Event {
            timestamp,
            kind: kind.to_string(),
            payload,
        });
        Ok(())
    }

    /// Records a health observation. Repeating the same value still logs an
    /// event.
    pub fn set_health(
        &self,
        component: &str,
        health: Health,
        timestamp: Timestamp,
    ) -> Result<Self, PdtError> {
        let mut next = self.clone();
        let slot = next
            .health
            .get_mut(component)
            .ok_or_else(|| PdtError::UnknownComponent(component.to_string()))?;
        *slot = health;
        let payload = BTreeMap::from([
            ("component".to_string(), component.to_string()),
            ("health".to_string(), health.name().to_string()),
        ]);
        next.append(timestamp, "health-update", payload)?;
        Ok(next)
    }

    /// Appends a free-form event.
    pub fn record(
        &self,
        kind: &str,
        payload: BTreeMap<String, String>,
        timestamp: Timestamp,
    ) -> Result<Self, PdtError> {
        let mut next = self.clone();
        next.append(timestamp, kind, payload)?;
        Ok(next)
    }

    pub fn broken(&self) -> BTreeSet<NodeId> {
        self.health
            .iter()
            .filter(|(_, h)| **h == Health::Broken)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Fails unless `model` is the exact model version this twin was made for.
    pub fn check_model(&self, model: &BiPanModel) -> Result<(), PdtError> {
        let actual = model_digest(model);
        if actual != self.model_digest {
            return Err(PdtError::DigestMismatch {
                expected: self.model_digest.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Plans the replacement of every broken component and logs a
    /// `plan-created` event.
    pub fn plan_repair(
        &self,
        model: &BiPanModel,
        replacements: &BTreeMap<NodeId, NodeId>,
        inv: &SkillInversion,
        timestamp: Timestamp,
    ) -> Result<(Self, Plan), PdtError> {
        self.check_model(model)?;
        let broken = self.broken();
        if broken.is_empty() {
            return Err(PdtError::NothingBroken);
        }
        let plan = repair_plan(model, &broken, replacements, inv)?;
        let list = |ids: Vec<String>| ids.join(",");
        let payload = BTreeMap::from([
            (
                "broken".to_string(),
                list(broken.iter().map(|b| b.to_string()).collect()),
            ),
            (
                "replacements".to_string(),
                list(
                    broken
                        .iter()
                        .map(|b| format!("{b}={}", replacements[b]))
                        .collect(),
                ),
            ),
            ("steps".to_string(), plan.steps.len().to_string()),
        ]);
        let mut next = self.clone();
        next.append(timestamp, "plan-created", payload)?;
        Ok((next, plan))
    }
}

/// File name of an instance inside a twin directory.
pub fn instance_path(dir: &Path, instance_id: &str) -> PathBuf {
    dir.join(format!("{instance_id}.pdt.json"))
}

/// Reads `<dir>/<instance_id>.pdt.json`.
pub fn load_instance(dir: &Path, instance_id: &str) -> Result<PdtInstance, PdtError> {
    let path = instance_path(dir, instance_id);
    let bytes = fs::read(&path).map_err(|source| PdtError::File {
        path: path.clone(),
        source,
    })?;
    Ok(load_pdt(&bytes)?)
}

/// Writes the instance atomically: temp file in the same directory, then
/// rename over the target.
pub fn save_instance(dir: &Path, pdt: &PdtInstance) -> Result<PathBuf, PdtError> {
    let path = instance_path(dir, &pdt.instance_id);
    let tmp = dir.join(format!(".{}.pdt.json.tmp", pdt.instance_id));
    let file_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PdtError::File { path, source }
    };
    fs::write(&tmp, save_pdt(pdt)).map_err(file_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(file_err(&path))?;
    Ok(path)
}

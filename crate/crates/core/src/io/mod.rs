//! Serialization: the native JSON documents, CAEX import and DOT export.
//!
//! Native documents are written in canonical form: object keys sorted,
//! two-space indentation, LF line endings, UTF-8, one trailing newline.
//! Model, plan and twin files all share it, so equal values always produce
//! equal bytes.

mod aml;
mod dot;

pub use aml::{import_aml, merge, AmlError, AmlFragment, FragmentProduct, MergeError};
pub use dot::export_dot;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{BiPanModel, ModelError, ModelParts};
use crate::pdt::PdtInstance;
use crate::plan::{Plan, ResourceRegistry};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IoError {
    pub fn code(&self) -> &'static str {
        match self {
            IoError::Parse { .. } => "parse-error",
            IoError::Model(e) => e.code(),
        }
    }
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        // serde_json appends " at line X column Y"; the fields carry it already
        let message = e.to_string();
        let message = match message.rfind(" at line ") {
            Some(pos) => message[..pos].to_string(),
            None => message,
        };
        IoError::Parse {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

/// Canonical JSON bytes of any serializable value.
pub fn to_canonical<T: Serialize>(value: &T) -> Vec<u8> {
    // serde_json's Map is a BTreeMap, so going through Value sorts every key
    let value = serde_json::to_value(value).expect("document types serialize to JSON");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON values always print");
    text.push('\n');
    text.into_bytes()
}

fn from_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, IoError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Parses and reference-checks a model document. Does not validate.
pub fn load_model(bytes: &[u8]) -> Result<BiPanModel, IoError> {
    let parts: ModelParts = from_json(bytes)?;
    Ok(parts.build()?)
}

pub fn save_model(model: &BiPanModel) -> Vec<u8> {
    to_canonical(&model.to_parts())
}

/// Hex SHA-256 over the canonical model bytes.
pub fn model_digest(model: &BiPanModel) -> String {
    hex::encode(Sha256::digest(save_model(model)))
}

pub fn load_plan(bytes: &[u8]) -> Result<Plan, IoError> {
    from_json(bytes)
}

pub fn save_plan(plan: &Plan) -> Vec<u8> {
    to_canonical(plan)
}

pub fn load_registry(bytes: &[u8]) -> Result<ResourceRegistry, IoError> {
    from_json(bytes)
}

pub fn load_pdt(bytes: &[u8]) -> Result<PdtInstance, IoError> {
    from_json(bytes)
}

pub fn save_pdt(pdt: &PdtInstance) -> Vec<u8> {
    to_canonical(pdt)
}

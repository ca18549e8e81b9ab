//! Versioned JSON envelope shared by every fitted model.
//!
//! ```json
//! {"format_version": 1, "kind": "pca", "model": { ... }}
//! ```
//! Matrices inside `model` are row-major with explicit `rows`/`cols`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// A model that can be stored in the envelope under a fixed `kind` tag.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

#[derive(Serialize)]
struct EnvelopeRef<'a, M> {
    format_version: u32,
    kind: &'a str,
    model: &'a M,
}

#[derive(Deserialize)]
struct Envelope {
    format_version: u32,
    kind: String,
    model: serde_json::Value,
}

pub fn to_json<M: Artifact>(model: &M) -> Result<String> {
    serde_json::to_string_pretty(&EnvelopeRef {
        format_version: FORMAT_VERSION,
        kind: M::KIND,
        model,
    })
    .map_err(|e| Error::Artifact(e.to_string()))
}

pub fn from_json<M: Artifact>(text: &str) -> Result<M> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Artifact(e.to_string()))?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            env.format_version
        )));
    }
    if env.kind != M::KIND {
        return Err(Error::Artifact(format!(
            "artifact kind '{}' where '{}' was expected",
            env.kind,
            M::KIND
        )));
    }
    serde_json::from_value(env.model).map_err(|e| Error::Artifact(e.to_string()))
}

/// Reads only the `kind` tag.
pub fn peek_kind(text: &str) -> Result<String> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Artifact(e.to_string()))?;
    Ok(env.kind)
}

pub fn save<M: Artifact>(model: &M, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load<M: Artifact>(path: &Path) -> Result<M> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

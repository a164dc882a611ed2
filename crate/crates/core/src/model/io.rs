//! JSON instance files.
//!
//! ```json
//! {"schema": 1,
//!  "servers": [{"capacity": 2, "weight": 1.0}],
//!  "requests": [[{"server": 0, "p": 0.5}]],
//!  "metadata": {"generator": "gnb", "params": {"n": 1}}}
//! ```
//!
//! Probabilities are written with shortest round-trip formatting, so a
//! save/load cycle reproduces every `f64` bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, Instance, Metadata, Server};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    server: usize,
    p: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema: u32,
    servers: Vec<Server>,
    requests: Vec<Vec<EdgeRecord>>,
    #[serde(default)]
    metadata: Metadata,
}

pub fn to_json(inst: &Instance) -> String {
    let file = InstanceFile {
        schema: SCHEMA_VERSION,
        servers: inst.servers().to_vec(),
        requests: inst
            .requests()
            .iter()
            .map(|r| {
                r.edges
                    .iter()
                    .map(|e| EdgeRecord {
                        server: e.server,
                        p: e.probability,
                    })
                    .collect()
            })
            .collect(),
        metadata: inst.metadata().clone(),
    };
    serde_json::to_string(&file).expect("instance serialization is infallible")
}

pub fn from_json(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Format {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.schema != SCHEMA_VERSION {
        return Err(Error::Format {
            location: "schema".into(),
            message: format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                file.schema
            ),
        });
    }
    let requests = file
        .requests
        .into_iter()
        .map(|edges| {
            edges
                .into_iter()
                .map(|e| Edge::new(e.server, e.p))
                .collect()
        })
        .collect();
    Instance::new(file.servers, requests, file.metadata).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::Format {
            location: "instance".into(),
            message: msg,
        },
        other => other,
    })
}

pub fn save(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(inst))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    from_json(&text).map_err(|e| match e {
        Error::Format { location, message } => Error::Format {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

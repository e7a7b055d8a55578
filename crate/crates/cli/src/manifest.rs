//! Provenance record written into every output directory.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::fsutil::write_file;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

impl InputDigest {
    /// Digest of `parts` fed in order.
    pub fn of_parts<'a>(name: impl Into<String>, parts: impl IntoIterator<Item = &'a [u8]>) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        InputDigest {
            name: name.into(),
            sha256: hex::encode(h.finalize()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub config: toml::Table,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: &impl Serialize, inputs: Vec<InputDigest>) -> Result<Self> {
        let config = toml::Table::try_from(config).map_err(|e| CliError::Input(format!("config snapshot: {e}")))?;
        Ok(RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            inputs,
            config,
        })
    }

    pub fn file_name(&self) -> String {
        format!("{}.manifest.toml", self.command)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifests always serialize")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(self.file_name()), self.to_toml().as_bytes())
    }
}

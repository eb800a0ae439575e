//! Run manifest: what was run and a checksum of every artifact written.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scenario::NoiseMode;

pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub thzqi_core: String,
    pub thzqi_cli: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self { thzqi_core: thzqi_core::VERSION.into(), thzqi_cli: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub scenario: String,
    /// Hash of the scenario file as read.
    pub scenario_sha256: String,
    /// Hash of the resolved scenario (after command-line overrides).
    pub config_sha256: String,
    pub seed: u64,
    pub qmc_samples: usize,
    pub noise: NoiseMode,
    pub versions: Versions,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

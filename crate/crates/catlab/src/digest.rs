//! Content digests and the run manifest embedded in every artifact.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in hash.iter() {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// First 8 bytes of a SHA-256, for deriving seeds from names.
pub fn sha256_u64(bytes: &[u8]) -> u64 {
    let hash = Sha256::digest(bytes);
    u64::from_le_bytes(hash[..8].try_into().expect("digest has 32 bytes"))
}

/// Reproducibility envelope for one command invocation.
///
/// Wall-clock timestamps are deliberately not part of it: they would make
/// reruns differ byte-for-byte. They go to a separate `timing.toml`.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub bank_digest: String,
    /// Digest of the canonical configuration text below.
    pub config_digest: String,
    pub config: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, bank_digest: String, config: String) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            bank_digest,
            config_digest: sha256_hex(config.as_bytes()),
            config,
        }
    }

    /// Digest over every manifest field; stamped into each artifact.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// `# manifest: sha256:<hex>` comment line opening each CSV artifact.
    pub fn header_line(&self) -> String {
        format!("# manifest: sha256:{}\n", self.digest())
    }
}

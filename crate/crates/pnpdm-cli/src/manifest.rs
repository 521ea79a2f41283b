//! Run manifest: everything needed to bit-reproduce a run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// SHA-256 of the canonicalized config (after overrides).
    pub config_digest: String,
    pub seed: u64,
    pub chain_seeds: Vec<u64>,
    pub schedule: ScheduleInfo,
    /// iteration-indexed coupling strengths actually used.
    pub rho_trace: Vec<f64>,
    /// Input / generated artifact references (path, SHA-256 of bytes).
    pub files: Vec<FileRef>,
    pub software_version: String,
    pub wall_clock_seconds: f64,
    /// PSNR peak used for metrics.
    pub peak: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleInfo {
    pub family: String,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub steps: usize,
    pub solver: String,
    pub rho0: f64,
    pub rho_min: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRef {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

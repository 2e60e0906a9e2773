use std::path::{Path, PathBuf};

use manin_core::locarch::ArchMetric;
use manin_core::picard::{anticanonical, SVector};
use manin_core::rootsys::build_pgl;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Predict,
    Count,
    Check,
}

/// Everything a run depends on. Every key is required in a config file
/// except `suite`, which only `check` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    pub n: usize,
    /// Comma-separated rationals, e.g. `"3,3/2"`.
    #[serde(rename = "L")]
    pub l: String,
    pub metric: String,
    pub b_min: u64,
    pub b_max: u64,
    pub checkpoints: usize,
    pub p_max: u64,
    pub primes: Vec<u64>,
    pub emax: u32,
    pub mc_samples: u64,
    pub mc_shards: usize,
    pub gauge_multiple: f64,
    pub seed: u64,
    pub shards: usize,
    pub output_dir: String,
    pub timings: bool,
}

impl RunConfig {
    pub fn defaults(command: Command, n: usize) -> RunConfig {
        let l = build_pgl(n).map(|d| anticanonical(&d).to_string()).unwrap_or_default();
        RunConfig {
            command,
            suite: None,
            n,
            l,
            metric: if n == 2 { "sup-norm" } else { "singular-value" }.into(),
            b_min: 10_000,
            b_max: 1_000_000,
            checkpoints: 64,
            p_max: 100_000,
            primes: vec![2, 3, 5],
            emax: 3,
            mc_samples: 4_000_000,
            mc_shards: 16,
            gauge_multiple: 1.0,
            seed: 1,
            shards: 16,
            output_dir: "out".into(),
            timings: false,
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn class(&self) -> Result<SVector, Failure> {
        let l: SVector = self
            .l
            .parse()
            .map_err(|e| Failure::Usage(format!("bad L = {:?}: {e}", self.l)))?;
        if l.len() + 1 != self.n {
            return Err(Failure::Usage(format!("L has {} coordinates, PGL_{} needs {}", l.len(), self.n, self.n - 1)));
        }
        Ok(l)
    }

    pub fn arch_metric(&self) -> Result<ArchMetric, Failure> {
        self.metric
            .parse()
            .map_err(|e| Failure::Usage(format!("bad metric {:?}: {e}", self.metric)))
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        Path::new(&self.output_dir).join(name)
    }
}

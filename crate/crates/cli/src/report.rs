use std::path::Path;
use std::process::Command;

use anyhow::Context;
use serde::Serialize;

use crate::config::RunConfig;

/// Stamped into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub git_revision: String,
    pub seed: u64,
    pub tool_version: &'static str,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Provenance {
        Provenance {
            config_sha256: config.hash(),
            git_revision: git_revision(),
            seed: config.seed,
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn comment_lines(&self, prefix: &str) -> String {
        format!(
            "{prefix}config_sha256={}\n{prefix}git_revision={}\n{prefix}seed={}\n{prefix}tool_version={}\n",
            self.config_sha256, self.git_revision, self.seed, self.tool_version
        )
    }
}

fn git_revision() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

//! Run manifests: configurations, seeds, file hashes and stage outcomes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gpcbf::confidence::TRIAL_SEMANTICS;
use gpcbf::synthesis::VERIFIER_MODE;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
            bytes: fs::metadata(path)?.len(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub outcome: String,
    pub seconds: f64,
}

/// How ambiguous parts of the method were resolved for this run.
#[derive(Clone, Debug, Serialize)]
pub struct Interpretation {
    pub monte_carlo_trial: String,
    pub verifier_mode: String,
    pub candidate_solver: String,
    pub input_tie_break: String,
    pub simulation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robustness_mode: Option<String>,
}

impl Default for Interpretation {
    fn default() -> Self {
        Interpretation {
            monte_carlo_trial: TRIAL_SEMANTICS.to_string(),
            verifier_mode: VERIFIER_MODE.to_string(),
            candidate_solver: "linear branch-and-bound over extreme inputs".to_string(),
            input_tie_break: "first admissible input in declared order".to_string(),
            simulation: "rk4 with sample-and-hold input".to_string(),
            robustness_mode: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub created_unix_seconds: u64,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<StageRecord>,
    pub interpretation: Interpretation,
}

impl RunManifest {
    pub fn new() -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect(),
            created_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            seeds: BTreeMap::new(),
            stages: Vec::new(),
            interpretation: Interpretation::default(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    /// Re-hashes every recorded output and writes the manifest to `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        for stage in &self.stages {
            for out in &stage.outputs {
                let now = sha256_file(Path::new(&out.path))?;
                if now != out.sha256 {
                    bail!("{} changed after stage {} recorded it", out.path, stage.name);
                }
            }
        }
        gpcbf::io::write_json(path, self)?;
        Ok(())
    }
}

/// Times a stage and collects the files it touches.
pub struct Stage {
    name: String,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Stage {
    pub fn start(name: &str, config: impl Serialize) -> Result<Self> {
        Ok(Stage {
            name: name.to_string(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(self, manifest: &mut RunManifest, outcome: &str) -> Result<()> {
        let hash_all = |paths: &[PathBuf]| -> Result<Vec<FileRecord>> {
            paths.iter().map(|p| FileRecord::of(p)).collect()
        };
        manifest.stages.push(StageRecord {
            name: self.name,
            config: self.config,
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
            outcome: outcome.to_string(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// `out.json` → `out.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

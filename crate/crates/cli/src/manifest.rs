use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use reuse_inr::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// File name of the append-only manifest inside a run directory.
pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path)?;
        Ok(Artifact {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: format!("{:x}", Sha256::digest(&data)),
        })
    }
}

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub wall_clock_seconds: f64,
    pub metrics: BTreeMap<String, f64>,
}

/// Collects a manifest while a command runs.
pub struct Recorder {
    started: Instant,
    manifest: RunManifest,
}

impl Recorder {
    pub fn start(command: &str, argv: &[String]) -> Self {
        Recorder {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.into(),
                argv: argv.to_vec(),
                config: None,
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                wall_clock_seconds: 0.0,
                metrics: BTreeMap::new(),
            },
        }
    }

    pub fn config(&mut self, path: Option<String>, seed: Option<u64>) {
        self.manifest.config = path;
        self.manifest.seed = seed;
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.manifest.metrics.insert(name.into(), value);
    }

    /// Appends the manifest line to `dir/manifest.jsonl`.
    pub fn finish(mut self, dir: &Path) -> Result<RunManifest> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let line = serde_json::to_string(&self.manifest).expect("manifests always serialize");
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(MANIFEST))?;
        writeln!(f, "{line}")?;
        Ok(self.manifest)
    }
}

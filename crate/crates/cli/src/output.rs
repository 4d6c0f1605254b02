use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use foliation_core::io;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub kind: String,
    pub description: String,
}

/// Index of everything a command wrote, saved as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub surface: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub master_seed: u64,
    pub exit_code: u8,
    pub artifacts: Vec<Artifact>,
}

pub struct Output {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Output {
    pub fn new(dir: PathBuf, command: &str, master_seed: u64) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir,
            manifest: Manifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                surface: None,
                params: BTreeMap::new(),
                master_seed,
                exit_code: 0,
                artifacts: Vec::new(),
            },
        })
    }

    fn record(&mut self, name: &str, description: &str) {
        let kind = Path::new(name).extension().and_then(|e| e.to_str()).unwrap_or("").to_string();
        self.manifest.artifacts.push(Artifact { path: name.into(), kind, description: description.into() });
    }

    pub fn json<T: Serialize>(&mut self, name: &str, description: &str, value: &T) -> Result<()> {
        io::write_json(&self.dir.join(name), value)?;
        self.record(name, description);
        Ok(())
    }

    /// Writes an artifact through `f`, which receives the final path and must
    /// write it atomically.
    pub fn file(
        &mut self,
        name: &str,
        description: &str,
        f: impl FnOnce(&Path) -> foliation_core::Result<()>,
    ) -> Result<()> {
        f(&self.dir.join(name))?;
        self.record(name, description);
        Ok(())
    }

    pub fn finish(mut self, exit_code: u8) -> Result<u8> {
        self.manifest.exit_code = exit_code;
        io::write_json(&self.dir.join("manifest.json"), &self.manifest)?;
        Ok(exit_code)
    }
}

//! Output directory bookkeeping. Every JSON artifact carries the provenance
//! block; every output file is listed with its hash in `run_manifest.json`.
//! Nothing time-dependent is recorded, so identical inputs give identical
//! bytes.

use crate::config::PipelineConfig;
use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

pub const TOOL_VERSION: &str = concat!("moments ", env!("CARGO_PKG_VERSION"));
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub inputs: Vec<FileHash>,
}

/// An artifact as written to disk. Readers also accept the bare payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub result: T,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MaybeWrapped<T> {
    Wrapped { result: T },
    Bare(T),
}

pub fn read_payload<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: MaybeWrapped<T> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match v {
        MaybeWrapped::Wrapped { result } => result,
        MaybeWrapped::Bare(t) => t,
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes through a temporary sibling so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    provenance: &'a Provenance,
    config: &'a PipelineConfig,
    outputs: &'a [FileHash],
}

pub struct Run {
    out_dir: PathBuf,
    pub provenance: Provenance,
    config: PipelineConfig,
    outputs: Vec<FileHash>,
}

impl Run {
    pub fn start(subcommand: &str, config: &PipelineConfig, inputs: &[&Path], out_dir: &Path) -> Result<Run> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let inputs = inputs
            .iter()
            .map(|p| Ok(FileHash { path: p.display().to_string(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Run {
            out_dir: out_dir.to_path_buf(),
            provenance: Provenance {
                tool_version: TOOL_VERSION.into(),
                subcommand: subcommand.into(),
                config_hash: config.hash(),
                inputs,
            },
            config: config.clone(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<()> {
        let a = Artifact { provenance: self.provenance.clone(), result };
        let mut bytes = serde_json::to_vec_pretty(&a)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes)?;
        self.record(name)
    }

    /// Registers a file written by other code.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let sha256 = sha256_file(&self.path(name))?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(FileHash { path: name.into(), sha256 });
        Ok(())
    }

    pub fn finish(mut self) -> Result<Vec<FileHash>> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let m = RunManifest { provenance: &self.provenance, config: &self.config, outputs: &self.outputs };
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        write_atomic(&self.out_dir.join(RUN_MANIFEST), &bytes)?;
        Ok(self.outputs)
    }
}

/// Serializes rows with a header line.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?)
}

//! Line-delimited corpus manifests: one JSON header record followed by one
//! JSON entry record per mixture.

use crate::config::MixtureType;
use crate::error::{Result, TseError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub mixture_path: String,
    pub target_path: String,
    pub reference_path: String,
    pub speaker_id: String,
    pub snr_db: f64,
    pub mixture_type: MixtureType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{}", serde_json::to_string(&self.header).unwrap())?;
        for e in &self.entries {
            writeln!(f, "{}", serde_json::to_string(e).unwrap())?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let head = lines
            .next()
            .ok_or_else(|| TseError::Manifest(format!("{}: empty", path.display())))??;
        let header: ManifestHeader = serde_json::from_str(&head)
            .map_err(|e| TseError::Manifest(format!("bad header: {e}")))?;
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line)
                    .map_err(|e| TseError::Manifest(format!("bad entry: {e}")))?,
            );
        }
        Ok(Self { header, entries })
    }

    pub fn speaker_ids(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.speaker_id.clone()).collect()
    }

    /// Resolve entry paths relative to the manifest's directory.
    pub fn resolve(base: &Path, rel: &str) -> std::path::PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

/// Error unless the two manifests have disjoint speaker sets.
pub fn check_speaker_disjoint(train: &Manifest, test: &Manifest) -> Result<()> {
    let overlap: Vec<String> = train
        .speaker_ids()
        .intersection(&test.speaker_ids())
        .cloned()
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(TseError::Corpus(format!(
            "train/test speaker overlap: {}",
            overlap.join(", ")
        )))
    }
}

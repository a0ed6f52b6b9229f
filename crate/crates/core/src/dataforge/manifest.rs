use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    /// 0 = real, 1 = generated.
    pub label: u8,
}

/// Labelled sample list backed by a `path,label` CSV file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl SampleManifest {
    pub fn count_real(&self) -> usize {
        self.entries.iter().filter(|e| e.label == 0).count()
    }

    pub fn count_fake(&self) -> usize {
        self.entries.iter().filter(|e| e.label == 1).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Reads a manifest file, or `manifest.csv` inside a directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path = path.join(MANIFEST_FILE);
        }
        if !path.exists() {
            return Err(Error::io(&path, std::io::ErrorKind::NotFound.into()));
        }
        let mut r = csv::Reader::from_path(&path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
            return Err(Error::Format(format!(
                "{}: manifest header must be `path,label`",
                path.display()
            )));
        }
        let mut entries = Vec::new();
        for rec in r.deserialize() {
            let e: ManifestEntry = rec?;
            if e.label > 1 {
                return Err(Error::InvalidLabel(e.label as f64));
            }
            entries.push(e);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    pub fn load_images(&self) -> Result<Vec<Image>> {
        self.entries.iter().map(|e| Image::load(&self.resolve(e))).collect()
    }
}

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{read_array, EmbeddingTensor};
use crate::error::{OodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub file_path: PathBuf,
    pub split: Split,
    /// Optional dataset/source tag, used for coloring plots.
    pub tag: Option<String>,
    pub tensor: EmbeddingTensor,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub shape: [usize; 4],
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn tensors(&self, split: Split) -> Vec<EmbeddingTensor> {
        self.split(split).map(|e| e.tensor.clone()).collect()
    }

    pub fn ids(&self, split: Split) -> Vec<String> {
        self.split(split).map(|e| e.sample_id.clone()).collect()
    }
}

#[derive(Deserialize)]
struct Row {
    sample_id: String,
    file_path: String,
    split: String,
    #[serde(default)]
    tag: Option<String>,
}

/// Load and fully validate a manifest CSV (`sample_id,file_path,split[,tag]`).
///
/// Relative file paths resolve against the manifest's directory. Every file
/// is read here so a sweep never discovers a bad input halfway through.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let csv_err = |message: String| OodError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    for required in ["sample_id", "file_path", "split"] {
        if !headers.iter().any(|h| h == required) {
            return Err(csv_err(format!("missing column {required:?}")));
        }
    }

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    let mut shape: Option<[usize; 4]> = None;
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        if !seen.insert(row.sample_id.clone()) {
            return Err(OodError::DuplicateId(row.sample_id));
        }
        let split: Split = row.split.parse().map_err(OodError::Config)?;
        let file_path = {
            let p = PathBuf::from(&row.file_path);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let tensor = read_array(&file_path)?;
        match shape {
            None => shape = Some(tensor.shape()),
            Some(s) if s != tensor.shape() => {
                return Err(OodError::ShapeMismatch {
                    expected: s.to_vec(),
                    found: tensor.shape().to_vec(),
                })
            }
            Some(_) => {}
        }
        entries.push(ManifestEntry {
            sample_id: row.sample_id,
            file_path,
            split,
            tag: row.tag.filter(|t| !t.is_empty()),
            tensor,
        });
    }
    let shape = shape.ok_or_else(|| csv_err("manifest has no rows".into()))?;
    Ok(Manifest { entries, shape })
}

/// Write a manifest CSV. `rows` are `(sample_id, file_path, split)`; paths are
/// written as given.
pub fn write_manifest(path: &Path, rows: &[(String, String, Split)]) -> Result<()> {
    let to_err = |e: csv::Error| OodError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(["sample_id", "file_path", "split"]).map_err(to_err)?;
    for (id, file, split) in rows {
        w.write_record([id.as_str(), file.as_str(), &split.to_string()])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| OodError::io(path, e))
}

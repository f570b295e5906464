use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};

/// Segmentation quality below which a test image counts as OOD.
pub const DEFAULT_DSC_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

impl Label {
    pub fn is_ood(self) -> bool {
        self == Label::Ood
    }

    fn parse(token: &str) -> Option<Self> {
        match token {
            "ID" => Some(Label::Id),
            "OOD" => Some(Label::Ood),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Id => "ID",
            Label::Ood => "OOD",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub sample_id: String,
    pub dsc: Option<f64>,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable {
    pub rows: Vec<LabelRow>,
}

impl LabelTable {
    pub fn new(rows: Vec<LabelRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for row in &rows {
            if !seen.insert(row.sample_id.as_str()) {
                return Err(OodError::DuplicateId(row.sample_id.clone()));
            }
            if row.dsc.is_none() && row.label.is_none() {
                return Err(OodError::MissingLabel(row.sample_id.clone()));
            }
            if let Some(d) = row.dsc {
                if !(0.0..=1.0).contains(&d) {
                    return Err(OodError::Config(format!(
                        "DSC {d} for {:?} outside [0, 1]",
                        row.sample_id
                    )));
                }
            }
        }
        Ok(Self { rows })
    }

    /// Map from sample_id to its explicit label (rows without one are skipped).
    pub fn label_map(&self) -> HashMap<&str, Label> {
        self.rows
            .iter()
            .filter_map(|r| r.label.map(|l| (r.sample_id.as_str(), l)))
            .collect()
    }
}

/// Label every row ID when `dsc >= threshold`, OOD otherwise.
pub fn label_from_dsc(table: &LabelTable, threshold: f64) -> Result<LabelTable> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(OodError::Config(format!(
            "DSC threshold {threshold} outside [0, 1]"
        )));
    }
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let dsc = r.dsc.ok_or_else(|| OodError::MissingDsc(r.sample_id.clone()))?;
            let label = if dsc >= threshold { Label::Id } else { Label::Ood };
            Ok(LabelRow {
                sample_id: r.sample_id.clone(),
                dsc: Some(dsc),
                label: Some(label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelTable { rows })
}

/// Read a label CSV with header `sample_id,dsc,label`; empty cells are absent.
pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let csv_err = |message: String| OodError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("sample_id").ok_or_else(|| csv_err("missing column \"sample_id\"".into()))?;
    let dsc_col = col("dsc");
    let label_col = col("label");
    if dsc_col.is_none() && label_col.is_none() {
        return Err(csv_err("need a dsc or label column".into()));
    }

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let cell = |c: Option<usize>| c.and_then(|i| record.get(i)).map(str::trim).filter(|s| !s.is_empty());
        let sample_id = record.get(id_col).unwrap_or_default().to_string();
        let dsc = cell(dsc_col)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| csv_err(format!("row {}: bad dsc {s:?}", line + 2)))
            })
            .transpose()?;
        let label = cell(label_col)
            .map(|s| {
                Label::parse(s).ok_or_else(|| csv_err(format!("row {}: bad label {s:?}", line + 2)))
            })
            .transpose()?;
        rows.push(LabelRow {
            sample_id,
            dsc,
            label,
        });
    }
    LabelTable::new(rows)
}

pub fn write_labels(path: &Path, table: &LabelTable) -> Result<()> {
    let to_err = |e: csv::Error| OodError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(["sample_id", "dsc", "label"]).map_err(to_err)?;
    for row in &table.rows {
        let dsc = row.dsc.map(|d| d.to_string()).unwrap_or_default();
        let label = row.label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([row.sample_id.as_str(), &dsc, &label])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| OodError::io(path, e))
}

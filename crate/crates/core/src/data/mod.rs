//! Feature records, datasets and vector normalization.

mod io;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_manifest, load_manifest_with, read_binary_features, save_binary, save_csv, LoadOptions,
};
pub use synth::{generate_synthetic, SynthConfig, TemplateLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train or test)")),
        }
    }
}

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub record_id: String,
    pub subject: String,
    pub media_id: String,
    pub template_id: Option<String>,
    pub split: Option<Split>,
    pub values: Vec<f64>,
}

/// An ordered collection of records sharing one dimension.
///
/// The subject index maps each subject label to the (ascending) positions
/// of its records and is rebuilt whenever the record list changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<FeatureRecord>,
    dim: usize,
    subject_index: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, checking dimensions, finiteness and record-id uniqueness.
    pub fn new(records: Vec<FeatureRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::EmptyInput("dataset has no records".into()))?;
        let dim = first.values.len();
        if dim == 0 {
            return Err(Error::EmptyInput("records have zero dimension".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        let mut subject_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.values.len(),
                });
            }
            if let Some(bad) = r.values.iter().position(|x| !x.is_finite()) {
                return Err(Error::Normalization(format!(
                    "record `{}` has a non-finite value at coordinate {bad}",
                    r.record_id
                )));
            }
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::DuplicateRecord(r.record_id.clone()));
            }
            subject_index.entry(r.subject.clone()).or_default().push(i);
        }
        Ok(Dataset {
            records,
            dim,
            subject_index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<FeatureRecord> {
        self.records
    }

    pub fn record(&self, i: usize) -> &FeatureRecord {
        &self.records[i]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.records[i].values
    }

    pub fn subject(&self, i: usize) -> &str {
        &self.records[i].subject
    }

    pub fn subject_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.subject_index
    }

    /// Record positions of `subject`, ascending.
    pub fn subject_records(&self, subject: &str) -> &[usize] {
        self.subject_index
            .get(subject)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn num_subjects(&self) -> usize {
        self.subject_index.len()
    }

    /// Subject labels as dense integer class ids, numbered in sorted label order.
    pub fn class_labels(&self) -> Vec<usize> {
        let ids: BTreeMap<&str, usize> = self
            .subject_index
            .keys()
            .enumerate()
            .map(|(k, s)| (s.as_str(), k))
            .collect();
        self.records
            .iter()
            .map(|r| ids[r.subject.as_str()])
            .collect()
    }

    /// Groups record positions by template id, then by media id.
    ///
    /// Records without a template id are skipped.
    pub fn template_index(&self) -> BTreeMap<&str, BTreeMap<&str, Vec<usize>>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if let Some(t) = r.template_id.as_deref() {
                out.entry(t)
                    .or_default()
                    .entry(r.media_id.as_str())
                    .or_default()
                    .push(i);
            }
        }
        out
    }

    /// A new dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }

    /// Records whose split tag equals `split`.
    pub fn split(&self, split: Split) -> Result<Dataset> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.records[i].split == Some(split))
            .collect();
        self.subset(&idx)
    }

    /// Re-normalizes every record to unit length.
    pub fn normalized(mut self) -> Result<Dataset> {
        for r in &mut self.records {
            r.values = normalize(&r.values)?;
        }
        Ok(self)
    }

    /// Replaces every feature vector by `f(values)`; the result must share one dimension.
    pub fn map_features<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(FeatureRecord {
                    values: f(&r.values)?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records)
    }
}

/// Euclidean norm with scaling so large or tiny entries do not overflow.
pub fn l2_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let sum: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * sum.sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Normalization(format!(
            "non-finite entry at coordinate {i}"
        )));
    }
    let norm = l2_norm(v);
    if norm == 0.0 {
        return Err(Error::Normalization("zero vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

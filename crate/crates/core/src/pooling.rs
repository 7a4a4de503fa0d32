//! Collapsing multi-item templates into one unit-length vector.
//!
//! Pooling operates on raw input features; projection, when used, is
//! applied to the pooled vector afterwards.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{normalize, Dataset, FeatureRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateItem {
    pub record_id: String,
    pub media_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub template_id: String,
    pub subject: Option<String>,
    pub items: Vec<TemplateItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Average,
    Media,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Average => "average",
            PoolMode::Media => "media",
        })
    }
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "average" => Ok(PoolMode::Average),
            "media" => Ok(PoolMode::Media),
            other => Err(format!("unknown pooling mode `{other}`")),
        }
    }
}

impl Template {
    fn check(&self) -> Result<usize> {
        let first = self.items.first().ok_or_else(|| {
            Error::EmptyInput(format!("template `{}` has no items", self.template_id))
        })?;
        let dim = first.values.len();
        if let Some(bad) = self.items.iter().find(|it| it.values.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.values.len(),
            });
        }
        Ok(dim)
    }
}

fn mean<'a>(dim: usize, vectors: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

/// Componentwise mean of all items, re-normalized.
pub fn pool_average(template: &Template) -> Result<Vec<f64>> {
    let dim = template.check()?;
    normalize(&mean(
        dim,
        template.items.iter().map(|it| it.values.as_slice()),
    ))
}

/// Mean within each media item, then mean over media, re-normalized.
pub fn pool_media(template: &Template) -> Result<Vec<f64>> {
    let dim = template.check()?;
    let mut by_media: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for it in &template.items {
        if it.media_id.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "item `{}` of template `{}` has no media id",
                it.record_id, template.template_id
            )));
        }
        by_media
            .entry(it.media_id.as_str())
            .or_default()
            .push(it.values.as_slice());
    }
    let media_means: Vec<Vec<f64>> = by_media
        .values()
        .map(|vs| mean(dim, vs.iter().copied()))
        .collect();
    normalize(&mean(dim, media_means.iter().map(Vec::as_slice)))
}

pub fn pool(template: &Template, mode: PoolMode) -> Result<Vec<f64>> {
    match mode {
        PoolMode::Average => pool_average(template),
        PoolMode::Media => pool_media(template),
    }
}

/// Groups records by template id, in sorted template order.
///
/// Every record must carry a template id. A template's subject is set when
/// all of its records agree on one.
pub fn templates_from_dataset(dataset: &Dataset) -> Result<Vec<Template>> {
    let mut groups: BTreeMap<&str, Vec<&FeatureRecord>> = BTreeMap::new();
    for r in dataset.records() {
        let t = r.template_id.as_deref().ok_or_else(|| {
            Error::InvalidConfig(format!("record `{}` has no template id", r.record_id))
        })?;
        groups.entry(t).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(id, recs)| {
            let subject = recs
                .iter()
                .all(|r| r.subject == recs[0].subject)
                .then(|| recs[0].subject.clone());
            Template {
                template_id: id.to_string(),
                subject,
                items: recs
                    .iter()
                    .map(|r| TemplateItem {
                        record_id: r.record_id.clone(),
                        media_id: r.media_id.clone(),
                        values: r.values.clone(),
                    })
                    .collect(),
            }
        })
        .collect())
}

/// Pools every template of `dataset` into one record keyed by template id.
///
/// Pooled records inherit the template's subject (empty when mixed) and the
/// split of their first item.
pub fn pool_dataset(dataset: &Dataset, mode: PoolMode) -> Result<Dataset> {
    let split_of: BTreeMap<&str, _> = dataset
        .records()
        .iter()
        .rev()
        .filter_map(|r| r.template_id.as_deref().map(|t| (t, r.split)))
        .collect();
    let records = templates_from_dataset(dataset)?
        .into_iter()
        .map(|t| {
            Ok(FeatureRecord {
                values: pool(&t, mode)?,
                split: split_of[t.template_id.as_str()],
                subject: t.subject.clone().unwrap_or_default(),
                media_id: String::new(),
                record_id: t.template_id.clone(),
                template_id: Some(t.template_id),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records)
}

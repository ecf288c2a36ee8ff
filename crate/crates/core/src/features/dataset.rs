use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{binary_mask, feature_names, FeatureRow};
use crate::survival::SurvivalLabel;
use crate::{Error, Result};

/// Feature matrix with per-subject labels. Missing numeric values are NaN
/// until the quantile transform imputes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub binary: Vec<bool>,
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<SurvivalLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSubject {
    pub id: String,
    pub time: f64,
    pub event: Option<bool>,
}

impl SurvivalDataset {
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        binary: Vec<bool>,
        x: Vec<Vec<f64>>,
        labels: Vec<SurvivalLabel>,
    ) -> Result<Self> {
        let n = ids.len();
        if x.len() != n || labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} ids, {} rows, {} labels",
                n,
                x.len(),
                labels.len()
            )));
        }
        if feature_names.len() != binary.len() {
            return Err(Error::InvalidInput("feature names and binary flags differ".into()));
        }
        if let Some(r) = x.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::InvalidInput(format!(
                "row has {} values, expected {}",
                r.len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        for (id, l) in ids.iter().zip(&labels) {
            if !(l.time > 0.0) || !l.time.is_finite() {
                return Err(Error::InvalidLabel { id: id.clone(), reason: format!("time {}", l.time) });
            }
        }
        Ok(Self { ids, feature_names, binary, x, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            binary: self.binary.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn event_count(&self) -> usize {
        self.labels.iter().filter(|l| l.event).count()
    }

    /// (subject id, feature name) for every missing value.
    pub fn missing_values(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (id, row) in self.ids.iter().zip(&self.x) {
            for (v, name) in row.iter().zip(&self.feature_names) {
                if v.is_nan() {
                    out.push((id.clone(), name.clone()));
                }
            }
        }
        out
    }
}

/// Join labels with feature rows by id, keeping the label order.
pub fn assemble_dataset(labels: &[LabeledSubject], rows: &[(String, FeatureRow)]) -> Result<SurvivalDataset> {
    let mut seen = HashSet::new();
    for (id, _) in rows {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut out_labels = Vec::new();
    let mut label_ids = HashSet::new();
    for subject in labels {
        if !label_ids.insert(subject.id.as_str()) {
            return Err(Error::DuplicateId(subject.id.clone()));
        }
        let Some((_, row)) = rows.iter().find(|(id, _)| *id == subject.id) else {
            continue;
        };
        let event = subject.event.ok_or_else(|| Error::InvalidLabel {
            id: subject.id.clone(),
            reason: "missing event flag".into(),
        })?;
        let label = SurvivalLabel::new(subject.time, event).map_err(|_| Error::InvalidLabel {
            id: subject.id.clone(),
            reason: format!("time {} must be positive", subject.time),
        })?;
        ids.push(subject.id.clone());
        x.push(row.to_vec());
        out_labels.push(label);
    }
    if let Some((id, _)) = rows.iter().find(|(id, _)| !label_ids.contains(id.as_str())) {
        return Err(Error::InvalidLabel { id: id.clone(), reason: "missing label".into() });
    }
    SurvivalDataset::new(ids, feature_names(), binary_mask(), x, out_labels)
}

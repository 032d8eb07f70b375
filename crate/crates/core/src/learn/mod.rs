//! Three-class affect labels, sparse logistic models and cross-validation.

mod cv;
mod lasso;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cv::{assign_folds, cross_validate, lambda_grid, select_lambda, CvReport};
pub use lasso::{fit_lasso, fit_lasso_path, predict, ClassModel, Prediction, SparseLinearModel};

use crate::error::{Error, Result};
use crate::ingest::LabelRecord;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreClass {
    Low,
    Medium,
    High,
}

impl ScoreClass {
    pub const ALL: [ScoreClass; 3] = [ScoreClass::Low, ScoreClass::Medium, ScoreClass::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreClass::Low => "low",
            ScoreClass::Medium => "medium",
            ScoreClass::High => "high",
        }
    }
}

impl fmt::Display for ScoreClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bins a 1-9 self-report score: `[1, 4)` low, `[4, 6)` medium, `[6, 9]` high.
pub fn discretize_score(score: f64) -> Result<ScoreClass> {
    if !(1.0..=9.0).contains(&score) {
        return Err(Error::InvalidParameter(format!(
            "score {score} is outside [1, 9]"
        )));
    }
    Ok(if score < 4.0 {
        ScoreClass::Low
    } else if score < 6.0 {
        ScoreClass::Medium
    } else {
        ScoreClass::High
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Valence,
    Arousal,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Valence, Target::Arousal];

    pub fn name(self) -> &'static str {
        match self {
            Target::Valence => "valence",
            Target::Arousal => "arousal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "valence" => Some(Target::Valence),
            "arousal" => Some(Target::Arousal),
            _ => None,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trial feature rows with their discretised labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub trial_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub valence: Vec<ScoreClass>,
    pub arousal: Vec<ScoreClass>,
}

impl FeatureTable {
    pub fn new(
        columns: Vec<String>,
        trial_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        valence: Vec<ScoreClass>,
        arousal: Vec<ScoreClass>,
    ) -> Result<Self> {
        let n = rows.len();
        if trial_ids.len() != n || valence.len() != n || arousal.len() != n {
            return Err(Error::InvalidParameter(
                "feature table rows, ids and labels differ in length".into(),
            ));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::InvalidParameter(format!(
                "row {} has {} values for {} columns",
                trial_ids[r],
                rows[r].len(),
                columns.len()
            )));
        }
        Ok(FeatureTable {
            columns,
            trial_ids,
            rows,
            valence,
            arousal,
        })
    }

    /// Same labels for both targets; handy for single-target data.
    pub fn with_labels(
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<ScoreClass>,
    ) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        Self::new(columns, ids, rows, labels.clone(), labels)
    }

    /// Joins feature rows with label records by trial id.
    pub fn from_labels(
        columns: Vec<String>,
        trial_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: &[LabelRecord],
    ) -> Result<Self> {
        let mut valence = Vec::with_capacity(rows.len());
        let mut arousal = Vec::with_capacity(rows.len());
        for id in &trial_ids {
            let l = labels.iter().find(|l| &l.trial_id == id).ok_or_else(|| {
                Error::Schema(format!("trial {id:?} has no label record"))
            })?;
            valence.push(discretize_score(l.valence)?);
            arousal.push(discretize_score(l.arousal)?);
        }
        Self::new(columns, trial_ids, rows, valence, arousal)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self, target: Target) -> &[ScoreClass] {
        match target {
            Target::Valence => &self.valence,
            Target::Arousal => &self.arousal,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            columns: self.columns.clone(),
            trial_ids: idx.iter().map(|&i| self.trial_ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            valence: idx.iter().map(|&i| self.valence[i]).collect(),
            arousal: idx.iter().map(|&i| self.arousal[i]).collect(),
        }
    }

    /// Member count per class for a target, indexed by [`ScoreClass::index`].
    pub fn class_counts(&self, target: Target) -> [usize; 3] {
        let mut c = [0; 3];
        for l in self.labels(target) {
            c[l.index()] += 1;
        }
        c
    }
}

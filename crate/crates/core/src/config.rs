//! Pipeline configuration: a JSON document whose every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::StackingSettings;
use crate::featurize::EntropySettings;
use crate::ingest::Expression;
use crate::model::HistParams;
use crate::registry::{builtin_scalers, builtin_selectors};
use crate::select::SelectionSettings;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSettings {
    pub enabled: bool,
    pub k_neighbors: usize,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            k_neighbors: 5,
        }
    }
}

/// Cartesian grid of booster candidates over a shared base parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoosterGrid {
    pub base: HistParams,
    pub learning_rate: Vec<f64>,
    pub max_leaves: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for BoosterGrid {
    fn default() -> Self {
        Self {
            base: HistParams {
                n_trees: 100,
                ..HistParams::default()
            },
            learning_rate: vec![0.05, 0.1],
            max_leaves: vec![7, 15, 31],
            min_samples_leaf: vec![10, 20, 40],
        }
    }
}

impl BoosterGrid {
    /// Grid points, learning rate varying slowest.
    pub fn expand(&self) -> Vec<HistParams> {
        let mut out = Vec::new();
        for &lr in &self.learning_rate {
            for &leaves in &self.max_leaves {
                for &min_leaf in &self.min_samples_leaf {
                    out.push(HistParams {
                        learning_rate: lr,
                        max_leaves: leaves,
                        min_samples_leaf: min_leaf,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSettings {
    pub m: usize,
    pub inner_folds: usize,
    pub meta_l2: f64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            m: 18,
            inner_folds: 3,
            meta_l2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub expressions: Vec<Expression>,
    /// Registered scaler name.
    pub scaler: String,
    pub selection: SelectionSettings,
    pub smote: SmoteSettings,
    pub booster_grid: BoosterGrid,
    pub ensemble: EnsembleSettings,
    pub cv_folds: usize,
    pub seed: u64,
    /// Number of seeds for bootstrap intervals.
    pub n_seeds: usize,
    pub ci_level: f64,
    /// Probability at or above which a row is called positive.
    pub threshold: f64,
    pub entropy: EntropySettings,
    pub landmark_index_map: Option<PathBuf>,
    /// Drop frames below this tracking confidence before featurising.
    pub min_confidence: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            expressions: Expression::ALL.to_vec(),
            scaler: "minmax".into(),
            selection: SelectionSettings::default(),
            smote: SmoteSettings::default(),
            booster_grid: BoosterGrid::default(),
            ensemble: EnsembleSettings::default(),
            cv_folds: 10,
            seed: 0,
            n_seeds: 40,
            ci_level: 0.95,
            threshold: 0.5,
            entropy: EntropySettings::default(),
            landmark_index_map: None,
            min_confidence: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: PipelineConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json(&text)?)
    }

    /// Pretty JSON with fields in declaration order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    pub fn grid(&self) -> Vec<HistParams> {
        self.booster_grid.expand()
    }

    pub fn stacking(&self) -> StackingSettings {
        StackingSettings {
            m: self.ensemble.m,
            inner_folds: self.ensemble.inner_folds,
            meta_l2: self.ensemble.meta_l2,
            smote_k: self.smote.enabled.then_some(self.smote.k_neighbors),
        }
    }

    /// Seeds used for bootstrap intervals.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed + i).collect()
    }

    /// Keeps a feature unless it is prefixed by an expression outside
    /// `expressions`.
    pub fn keeps_feature(&self, name: &str) -> bool {
        Expression::ALL
            .iter()
            .filter(|e| !self.expressions.contains(e))
            .all(|e| !name.starts_with(&format!("{}_", e.as_str())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.expressions.is_empty() {
            return bad("expressions is empty".into());
        }
        if let Err(e) = builtin_scalers().resolve("scaler", &self.scaler) {
            return bad(e.to_string());
        }
        if let Err(e) = builtin_selectors().resolve("selector", &self.selection.method) {
            return bad(e.to_string());
        }
        if self.selection.n_features == 0 {
            return bad("selection.n_features must be at least 1".into());
        }
        if self.selection.inner_folds < 2 || self.ensemble.inner_folds < 2 {
            return bad("inner folds must be at least 2".into());
        }
        if self.cv_folds < 2 {
            return bad(format!("cv_folds {} < 2", self.cv_folds));
        }
        let grid = self.grid().len();
        if grid == 0 {
            return bad("booster grid is empty".into());
        }
        if self.ensemble.m == 0 || self.ensemble.m > grid {
            return bad(format!("ensemble.m {} outside [1, {grid}]", self.ensemble.m));
        }
        if self.smote.enabled && self.smote.k_neighbors == 0 {
            return bad("smote.k_neighbors must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {}", self.threshold));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!("ci_level {}", self.ci_level));
        }
        if self.entropy.bins < 2 {
            return bad("entropy.bins must be at least 2".into());
        }
        Ok(())
    }
}

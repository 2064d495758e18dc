//! Top-m stacking ensemble: candidate boosters scored by out-of-fold AUROC,
//! the best m kept, and a logistic meta-model fitted on their out-of-fold
//! probabilities.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluate::auroc;
use crate::model::{fit_histgbm, fit_logistic, sigmoid, BoostedModel, Classifier, HistParams, LogisticModel, LogisticOptions, ModelError};
use crate::pipeline::{AuditEvent, AuditLog};
use crate::preprocess::{smote_oversample, stratified_kfold, FittedScaler, PreprocessError};
use crate::rng::{derive_seed, streams};
use crate::Matrix;

pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnsembleError {
    #[error("m = {m} exceeds the {candidates} candidates")]
    MTooLarge { m: usize, candidates: usize },
    #[error("m must be at least 1")]
    ZeroM,
    #[error("empty candidate grid")]
    EmptyGrid,
    #[error("missing selected feature {0:?}")]
    MissingFeature(String),
    #[error("ensemble schema version {found}, expected {expected}")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("ensemble is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

pub type Result<T> = std::result::Result<T, EnsembleError>;

/// Indices of the `m` highest-AUROC candidates, best first; equal AUROCs
/// keep their original order.
pub fn select_top_models(aurocs: &[f64], m: usize) -> Result<Vec<usize>> {
    if m > aurocs.len() {
        return Err(EnsembleError::MTooLarge {
            m,
            candidates: aurocs.len(),
        });
    }
    let mut idx: Vec<usize> = (0..aurocs.len()).collect();
    idx.sort_by(|&a, &b| aurocs[b].total_cmp(&aurocs[a]).then(a.cmp(&b)));
    idx.truncate(m);
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingSettings {
    pub m: usize,
    pub inner_folds: usize,
    pub meta_l2: f64,
    /// SMOTE neighbour count; `None` disables oversampling.
    pub smote_k: Option<usize>,
}

impl Default for StackingSettings {
    fn default() -> Self {
        Self {
            m: 18,
            inner_folds: 3,
            meta_l2: 1.0,
            smote_k: Some(5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModelEntry {
    /// Position of the candidate in the parameter grid.
    pub grid_index: usize,
    pub seed: u64,
    /// Out-of-fold AUROC on the training rows.
    pub auroc: f64,
    pub model: BoostedModel,
}

/// Fitted base models and meta-layer, before any scaler or feature subset
/// is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedModels {
    pub base_models: Vec<BaseModelEntry>,
    pub meta: LogisticModel,
    pub candidate_aurocs: Vec<f64>,
    /// Out-of-fold meta-feature matrix the meta-model was trained on.
    pub meta_features: Matrix,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub selection_method: String,
    pub n_features: usize,
    pub scaler: String,
    pub expressions: Vec<String>,
    pub smote_k: Option<usize>,
    pub inner_folds: usize,
    pub seed: u64,
    pub config_hash: String,
    pub training_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub schema_version: u32,
    pub scaler: FittedScaler,
    pub selected_features: Vec<String>,
    pub base_models: Vec<BaseModelEntry>,
    pub meta: LogisticModel,
    pub m: usize,
    pub provenance: Provenance,
}

/// Appends SMOTE rows for whichever class is smaller. Returns the augmented
/// matrix, labels and row ids.
pub(crate) fn oversample(
    x: &Matrix,
    y: &[bool],
    ids: &[String],
    k: usize,
    seed: u64,
    tag: &str,
) -> Result<(Matrix, Vec<bool>, Vec<String>)> {
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    let (minority, majority, label) = if pos.len() < neg.len() {
        (pos, neg, true)
    } else if neg.len() < pos.len() {
        (neg, pos, false)
    } else {
        return Ok((x.clone(), y.to_vec(), ids.to_vec()));
    };
    let out = smote_oversample(&x.select_rows(&minority), majority.len(), k, seed)?;
    let n_syn = out.rows.nrows();
    let mut ys = y.to_vec();
    ys.extend(std::iter::repeat_n(label, n_syn));
    let mut all_ids = ids.to_vec();
    all_ids.extend((0..n_syn).map(|k| format!("syn:{tag}:{k}")));
    Ok((x.vstack(&out.rows), ys, all_ids))
}

fn candidate_seed(seed: u64, grid_index: usize) -> u64 {
    derive_seed(derive_seed(seed, streams::ENSEMBLE), grid_index as u64)
}

/// Trains every grid candidate on inner folds, keeps the top `m` by
/// out-of-fold AUROC, fits the meta-model on their out-of-fold
/// probabilities and refits the kept candidates on all rows.
///
/// `ids` name the rows of `x` in the audit log; training and prediction
/// events are recorded under `context`.
#[allow(clippy::too_many_arguments)]
pub fn fit_stacking_ensemble(
    x: &Matrix,
    y: &[bool],
    ids: &[String],
    grid: &[HistParams],
    settings: &StackingSettings,
    seed: u64,
    audit: &mut AuditLog,
    context: &str,
) -> Result<StackedModels> {
    if grid.is_empty() {
        return Err(EnsembleError::EmptyGrid);
    }
    if settings.m == 0 {
        return Err(EnsembleError::ZeroM);
    }
    if settings.m > grid.len() {
        return Err(EnsembleError::MTooLarge {
            m: settings.m,
            candidates: grid.len(),
        });
    }
    let n = x.nrows();
    let plan = stratified_kfold(y, settings.inner_folds, derive_seed(seed, streams::FOLDS))?;
    let smote_seed = derive_seed(seed, streams::SMOTE);

    let mut folds = Vec::with_capacity(plan.k);
    for f in 0..plan.k {
        let (train, test) = (plan.train_indices(f), plan.test_indices(f));
        let tx = x.select_rows(&train);
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let tid: Vec<String> = train.iter().map(|&i| ids[i].clone()).collect();
        let (tx, ty, tid) = match settings.smote_k {
            Some(k) => oversample(&tx, &ty, &tid, k, derive_seed(smote_seed, f as u64), &format!("{context}:inner{f}"))?,
            None => (tx, ty, tid),
        };
        audit.push(AuditEvent::new(context, &format!("inner_train:{f}"), tid));
        audit.push(AuditEvent::new(
            context,
            &format!("inner_oof:{f}"),
            test.iter().map(|&i| ids[i].clone()).collect(),
        ));
        folds.push((tx, ty, x.select_rows(&test), test));
    }

    let oof: Vec<Result<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|g| {
            let mut scores = vec![0.0; n];
            for (f, (tx, ty, vx, test)) in folds.iter().enumerate() {
                let model = fit_histgbm(tx, ty, &grid[g], derive_seed(candidate_seed(seed, g), f as u64 + 1))?;
                for (&i, p) in test.iter().zip(model.predict_proba(vx)?) {
                    scores[i] = p;
                }
            }
            Ok(scores)
        })
        .collect();
    let oof = oof.into_iter().collect::<Result<Vec<_>>>()?;
    let candidate_aurocs: Vec<f64> = oof.iter().map(|s| auroc(s, y).unwrap_or(0.5)).collect();
    let top = select_top_models(&candidate_aurocs, settings.m)?;

    let mut meta_x = Matrix::zeros(n, top.len());
    for (c, &g) in top.iter().enumerate() {
        for i in 0..n {
            meta_x.set(i, c, oof[g][i]);
        }
    }
    audit.push(AuditEvent::new(context, "meta_train", ids.to_vec()));
    let meta = fit_logistic(
        &meta_x,
        y,
        &LogisticOptions {
            l2_strength: settings.meta_l2,
            ..LogisticOptions::default()
        },
    )?;

    let (fx, fy, fid) = match settings.smote_k {
        Some(k) => oversample(x, y, ids, k, derive_seed(smote_seed, u64::MAX), &format!("{context}:refit"))?,
        None => (x.clone(), y.to_vec(), ids.to_vec()),
    };
    audit.push(AuditEvent::new(context, "refit", fid));
    let refits: Vec<Result<BaseModelEntry>> = top
        .par_iter()
        .map(|&g| {
            let s = candidate_seed(seed, g);
            Ok(BaseModelEntry {
                grid_index: g,
                seed: s,
                auroc: candidate_aurocs[g],
                model: fit_histgbm(&fx, &fy, &grid[g], s)?,
            })
        })
        .collect();
    Ok(StackedModels {
        base_models: refits.into_iter().collect::<Result<Vec<_>>>()?,
        meta,
        candidate_aurocs,
        meta_features: meta_x,
    })
}

impl TrainedEnsemble {
    /// Column indices of the selected features within `names`.
    pub fn feature_columns(&self, names: &[String]) -> Result<Vec<usize>> {
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        self.selected_features
            .iter()
            .map(|f| index.get(f.as_str()).copied().ok_or_else(|| EnsembleError::MissingFeature(f.clone())))
            .collect()
    }

    /// Scaled selected-feature matrix for raw rows whose columns are `names`.
    pub fn transform(&self, names: &[String], rows: &Matrix) -> Result<Matrix> {
        let cols = self.feature_columns(names)?;
        let mut out = Matrix::zeros(rows.nrows(), cols.len());
        for (c, (&j, name)) in cols.iter().zip(&self.selected_features).enumerate() {
            for i in 0..rows.nrows() {
                let v = self
                    .scaler
                    .scale_value(name, rows.get(i, j))
                    .ok_or_else(|| EnsembleError::MissingFeature(name.clone()))?;
                out.set(i, c, v);
            }
        }
        Ok(out)
    }

    /// Base-model probabilities, one column per base model.
    pub fn meta_features(&self, scaled: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(scaled.nrows(), self.base_models.len());
        for (c, b) in self.base_models.iter().enumerate() {
            for (i, p) in b.model.predict_proba(scaled)?.into_iter().enumerate() {
                out.set(i, c, p);
            }
        }
        Ok(out)
    }

    /// Probability of the positive class for each raw row.
    pub fn predict(&self, names: &[String], rows: &Matrix) -> Result<Vec<f64>> {
        let scaled = self.transform(names, rows)?;
        let meta_x = self.meta_features(&scaled)?;
        Ok(meta_x.rows_iter().map(|r| sigmoid(self.meta.decision_function(r))).collect())
    }

    /// The base model with the highest validation AUROC.
    pub fn best_base_model(&self) -> &BaseModelEntry {
        &self.base_models[0]
    }

    /// Sorts base models by AUROC descending then grid index, permuting the
    /// meta weights alongside.
    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.base_models.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (&self.base_models[a], &self.base_models[b]);
            y.auroc.total_cmp(&x.auroc).then(x.grid_index.cmp(&y.grid_index))
        });
        self.base_models = order.iter().map(|&i| self.base_models[i].clone()).collect();
        self.meta.weights = order.iter().map(|&i| self.meta.weights[i]).collect();
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != ENSEMBLE_SCHEMA_VERSION {
            return Err(EnsembleError::SchemaVersion {
                expected: ENSEMBLE_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if self.meta.weights.len() != self.base_models.len() || self.m != self.base_models.len() {
            return Err(EnsembleError::Inconsistent("meta weight count differs from m".into()));
        }
        if let Some(b) = self.base_models.iter().find(|b| b.model.n_features != self.selected_features.len()) {
            return Err(EnsembleError::Inconsistent(format!(
                "base model {} has width {}",
                b.grid_index, b.model.n_features
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serialises")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let mut e: TrainedEnsemble = serde_json::from_str(text)?;
        e.validate()?;
        e.canonicalize();
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

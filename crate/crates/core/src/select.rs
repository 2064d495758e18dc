//! Feature selection: logistic-coefficient ranking and SHAP-driven
//! recursive feature elimination / addition around the histogram booster.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluate::auroc;
use crate::explain::{mean_abs_shap, ExplainError};
use crate::model::{fit_histgbm, fit_logistic, Classifier, HistParams, LogisticOptions, ModelError};
use crate::preprocess::{stratified_kfold, PreprocessError};
use crate::registry::Named;
use crate::rng::derive_seed;
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("logistic fit did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("class {class} has {count} samples, fewer than {k} inner folds")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("n_target must be at least 1")]
    ZeroTarget,
    #[error("inner_folds must be at least 2, got {0}")]
    BadFolds(usize),
    #[error("{names} feature names for {cols} columns")]
    NameMismatch { names: usize, cols: usize },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Preprocess(PreprocessError),
}

impl From<ModelError> for SelectError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SingleClass => SelectError::SingleClass,
            other => SelectError::Model(other),
        }
    }
}

impl From<PreprocessError> for SelectError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::ClassTooSmall { class, count, k } => SelectError::ClassTooSmall { class, count, k },
            PreprocessError::BadK(k) => SelectError::BadFolds(k),
            other => SelectError::Preprocess(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, SelectError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    LrCoef,
    BoostRfe,
    BoostRfa,
}

/// Ordered features, best first, with the score each was ranked by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: SelectionMethod,
    pub features: Vec<String>,
    pub scores: Vec<f64>,
}

impl FeatureRanking {
    pub fn top(&self, n: usize) -> Vec<String> {
        self.features.iter().take(n).cloned().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ranking serialises")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSettings {
    /// Registered selector name.
    pub method: String,
    pub n_features: usize,
    pub l2_strength: f64,
    pub inner_folds: usize,
    pub improvement_eps: f64,
    /// Booster used inside RFE/RFA.
    pub booster: HistParams,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            method: "lr_coef".into(),
            n_features: 30,
            l2_strength: 1.0,
            inner_folds: 3,
            improvement_eps: 1e-4,
            booster: HistParams {
                n_trees: 50,
                max_leaves: 15,
                min_samples_leaf: 10,
                ..HistParams::default()
            },
        }
    }
}

/// A feature-selection strategy selectable by name.
pub trait FeatureSelector: Named + Send + Sync {
    fn rank(
        &self,
        x: &Matrix,
        y: &[bool],
        names: &[String],
        settings: &SelectionSettings,
        seed: u64,
    ) -> Result<FeatureRanking>;
}

pub struct LrCoefficientRanking;
pub struct BoostRfe;
pub struct BoostRfa;

impl Named for LrCoefficientRanking {
    fn name(&self) -> &'static str {
        "lr_coef"
    }
}

impl FeatureSelector for LrCoefficientRanking {
    fn rank(&self, x: &Matrix, y: &[bool], names: &[String], s: &SelectionSettings, _seed: u64) -> Result<FeatureRanking> {
        rank_features_lr(x, y, names, s.l2_strength)
    }
}

impl Named for BoostRfe {
    fn name(&self) -> &'static str {
        "boost_rfe"
    }
}

impl FeatureSelector for BoostRfe {
    fn rank(&self, x: &Matrix, y: &[bool], names: &[String], s: &SelectionSettings, seed: u64) -> Result<FeatureRanking> {
        boost_rfe(x, y, names, s.n_features, s.inner_folds, s.improvement_eps, &s.booster, seed)
    }
}

impl Named for BoostRfa {
    fn name(&self) -> &'static str {
        "boost_rfa"
    }
}

impl FeatureSelector for BoostRfa {
    fn rank(&self, x: &Matrix, y: &[bool], names: &[String], s: &SelectionSettings, seed: u64) -> Result<FeatureRanking> {
        boost_rfa(x, y, names, s.n_features, s.inner_folds, s.improvement_eps, &s.booster, seed)
    }
}

fn check_names(x: &Matrix, names: &[String]) -> Result<()> {
    if names.len() != x.ncols() {
        return Err(SelectError::NameMismatch { names: names.len(), cols: x.ncols() });
    }
    Ok(())
}

/// Orders column indices by score descending, ties by feature name.
fn order_by_score(idx: &[usize], scores: &[f64], names: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| names[idx[a]].cmp(&names[idx[b]]))
    });
    order
}

/// Ranks every feature by the absolute coefficient of an L2 logistic fit.
pub fn rank_features_lr(x: &Matrix, y: &[bool], names: &[String], l2_strength: f64) -> Result<FeatureRanking> {
    check_names(x, names)?;
    let model = fit_logistic(
        x,
        y,
        &LogisticOptions {
            l2_strength,
            ..LogisticOptions::default()
        },
    )?;
    if !model.converged {
        return Err(SelectError::NonConvergence(model.iterations));
    }
    let scores: Vec<f64> = model.weights.iter().map(|w| w.abs()).collect();
    let all: Vec<usize> = (0..names.len()).collect();
    let order = order_by_score(&all, &scores, names);
    Ok(FeatureRanking {
        method: SelectionMethod::LrCoef,
        features: order.iter().map(|&i| names[i].clone()).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
    })
}

/// Mean held-out AUROC of the booster over stratified inner folds using
/// only the columns in `features`.
pub fn inner_cv_auroc(
    x: &Matrix,
    y: &[bool],
    features: &[usize],
    params: &HistParams,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let plan = stratified_kfold(y, folds, seed)?;
    let sub = x.select_columns(features);
    let aucs: Vec<Result<f64>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, test) = (plan.train_indices(f), plan.test_indices(f));
            let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let model = fit_histgbm(&sub.select_rows(&train), &ty, params, derive_seed(seed, f as u64))?;
            let p = model.predict_proba(&sub.select_rows(&test))?;
            let vy: Vec<bool> = test.iter().map(|&i| y[i]).collect();
            Ok(auroc(&p, &vy).unwrap_or(0.5))
        })
        .collect();
    let mut total = 0.0;
    for a in aucs {
        total += a?;
    }
    Ok(total / folds as f64)
}

fn importance(x: &Matrix, y: &[bool], features: &[usize], params: &HistParams, seed: u64) -> Result<Vec<f64>> {
    let sub = x.select_columns(features);
    let model = fit_histgbm(&sub, y, params, seed)?;
    Ok(mean_abs_shap(&model, &sub)?)
}

fn check_selection_args(x: &Matrix, y: &[bool], names: &[String], n_target: usize, folds: usize) -> Result<()> {
    check_names(x, names)?;
    if n_target == 0 {
        return Err(SelectError::ZeroTarget);
    }
    if folds < 2 {
        return Err(SelectError::BadFolds(folds));
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(SelectError::SingleClass);
    }
    Ok(())
}

fn ranking_from(method: SelectionMethod, idx: &[usize], scores: &[f64], names: &[String]) -> FeatureRanking {
    let order = order_by_score(idx, scores, names);
    FeatureRanking {
        method,
        features: order.iter().map(|&i| names[idx[i]].clone()).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
    }
}

/// Recursive feature elimination: repeatedly drops the feature with the
/// lowest mean |SHAP| while inner-CV AUROC falls by no more than
/// `improvement_eps`, down to `n_target` features.
#[allow(clippy::too_many_arguments)]
pub fn boost_rfe(
    x: &Matrix,
    y: &[bool],
    names: &[String],
    n_target: usize,
    inner_folds: usize,
    improvement_eps: f64,
    params: &HistParams,
    seed: u64,
) -> Result<FeatureRanking> {
    check_selection_args(x, y, names, n_target, inner_folds)?;
    let mut current: Vec<usize> = (0..x.ncols()).collect();
    let cv_seed = derive_seed(seed, 0);
    if current.len() > n_target {
        let mut prev = inner_cv_auroc(x, y, &current, params, inner_folds, cv_seed)?;
        let mut round = 1u64;
        while current.len() > n_target {
            let imp = importance(x, y, &current, params, derive_seed(seed, round))?;
            let mut weakest = 0;
            for k in 1..current.len() {
                if imp[k] < imp[weakest] || (imp[k] == imp[weakest] && names[current[k]] > names[current[weakest]]) {
                    weakest = k;
                }
            }
            let mut candidate = current.clone();
            candidate.remove(weakest);
            let auc = inner_cv_auroc(x, y, &candidate, params, inner_folds, cv_seed)?;
            if auc >= prev - improvement_eps {
                current = candidate;
                prev = auc;
            } else {
                break;
            }
            round += 1;
        }
    }
    let imp = importance(x, y, &current, params, derive_seed(seed, u64::MAX))?;
    Ok(ranking_from(SelectionMethod::BoostRfe, &current, &imp, names))
}

/// Recursive feature addition: ranks all features once by mean |SHAP| and
/// adds them best-first, keeping an addition only when inner-CV AUROC rises
/// by more than `improvement_eps`, until `n_target` features are held.
#[allow(clippy::too_many_arguments)]
pub fn boost_rfa(
    x: &Matrix,
    y: &[bool],
    names: &[String],
    n_target: usize,
    inner_folds: usize,
    improvement_eps: f64,
    params: &HistParams,
    seed: u64,
) -> Result<FeatureRanking> {
    check_selection_args(x, y, names, n_target, inner_folds)?;
    let all: Vec<usize> = (0..x.ncols()).collect();
    let imp = importance(x, y, &all, params, derive_seed(seed, 1))?;
    let order = order_by_score(&all, &imp, names);
    let cv_seed = derive_seed(seed, 0);
    let mut selected = vec![order[0]];
    if n_target > 1 {
        let mut best = inner_cv_auroc(x, y, &selected, params, inner_folds, cv_seed)?;
        for &f in &order[1..] {
            if selected.len() >= n_target {
                break;
            }
            let mut candidate = selected.clone();
            candidate.push(f);
            let auc = inner_cv_auroc(x, y, &candidate, params, inner_folds, cv_seed)?;
            if auc > best + improvement_eps {
                selected = candidate;
                best = auc;
            }
        }
    }
    Ok(FeatureRanking {
        method: SelectionMethod::BoostRfa,
        features: selected.iter().map(|&i| names[i].clone()).collect(),
        scores: selected.iter().map(|&i| imp[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("f{j:02}")).collect()
    }

    fn informative(n: usize, seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = crate::rng::from_seed(seed);
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let mut data = Vec::new();
        for &l in &y {
            for j in 0..10 {
                let z: f64 = rng.sample(StandardNormal);
                data.push(z + if j < 2 && l { 2.0 } else { 0.0 });
            }
        }
        (Matrix::from_vec(n, 10, data), y)
    }

    #[test]
    fn lr_label_feature_first() {
        let mut rng = crate::rng::from_seed(3);
        let y: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
        let mut data = Vec::new();
        for &l in &y {
            data.push(if l { 1.0 } else { 0.0 });
            for _ in 0..9 {
                data.push(rng.random::<f64>());
            }
        }
        let x = Matrix::from_vec(60, 10, data);
        let r = rank_features_lr(&x, &y, &names(10), 1.0).unwrap();
        assert_eq!(r.features[0], "f00");
        assert_eq!(r.features.len(), 10);
    }

    #[test]
    fn lr_ties_and_constants() {
        let y = vec![false, true, false, true, true, false];
        let col = [0.1, 0.9, 0.3, 0.7, 0.8, 0.2];
        let x = Matrix::from_vec(6, 2, col.iter().flat_map(|&v| [v, v]).collect());
        let r = rank_features_lr(&x, &y, &["b".to_string(), "a".to_string()], 1.0).unwrap();
        assert_eq!(r.features, vec!["a", "b"]);
        let c = Matrix::from_vec(6, 3, vec![1.0; 18]);
        let r = rank_features_lr(&c, &y, &["z".into(), "x".into(), "y".into()], 1.0).unwrap();
        assert_eq!(r.features, vec!["x", "y", "z"]);
        assert!(r.scores.iter().all(|&s| s < 1e-12));
    }

    fn small_params() -> HistParams {
        HistParams {
            n_trees: 30,
            max_leaves: 7,
            min_samples_leaf: 5,
            ..HistParams::default()
        }
    }

    #[test]
    fn rfe_identity_when_target_is_everything() {
        let (x, y) = informative(60, 1);
        let r = boost_rfe(&x, &y, &names(10), 10, 3, 1e-4, &small_params(), 5).unwrap();
        assert_eq!(r.features.len(), 10);
    }

    #[test]
    fn rfe_infinite_eps_shrinks_to_target() {
        let (x, y) = informative(80, 2);
        let r = boost_rfe(&x, &y, &names(10), 2, 3, f64::INFINITY, &small_params(), 5).unwrap();
        let mut f = r.features.clone();
        f.sort();
        assert_eq!(f, vec!["f00", "f01"]);
    }

    #[test]
    fn rfa_policy_cases() {
        let (x, y) = informative(80, 4);
        let one = boost_rfa(&x, &y, &names(10), 1, 3, 1e-4, &small_params(), 9).unwrap();
        assert_eq!(one.features.len(), 1);
        let all = boost_rfa(&x, &y, &names(10), 4, 3, f64::NEG_INFINITY, &small_params(), 9).unwrap();
        assert_eq!(all.features.len(), 4);
        assert_eq!(all.features[0], one.features[0]);
        assert!(all.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn errors() {
        let (x, _) = informative(20, 1);
        let y = vec![true; 20];
        assert_eq!(rank_features_lr(&x, &y, &names(10), 1.0), Err(SelectError::SingleClass));
        let y: Vec<bool> = (0..20).map(|i| i == 0).collect();
        assert!(matches!(
            boost_rfe(&x, &y, &names(10), 2, 3, 1e-4, &small_params(), 1),
            Err(SelectError::ClassTooSmall { .. })
        ));
    }
}

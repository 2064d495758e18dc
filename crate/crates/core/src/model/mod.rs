//! From-scratch learners: L2 logistic regression fitted by damped Newton
//! steps, and a histogram gradient-boosted tree classifier.

mod binning;
mod boost;
mod linalg;
mod logistic;

pub use binning::{quantile_bin, BinMapper};
pub use boost::{
    fit_histgbm, BoostedModel, EarlyStopping, Histogram, HistParams, Node, Tree, BOOSTED_SCHEMA_VERSION,
};
pub use linalg::cholesky_solve;
pub use logistic::{fit_logistic, logistic_objective, LogisticModel, LogisticOptions};

use crate::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("label count {labels} does not match row count {rows}")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("row width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("non-finite value in training matrix")]
    NonFinite,
    #[error("degenerate parameters: {0}")]
    DegenerateParams(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Numerically safe logistic function, clamped strictly inside (0, 1).
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

const PROB_EPS: f64 = 1e-15;

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// A fitted binary classifier producing probabilities for the positive class.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;

    /// Raw (log-odds) score of one row; the width is not checked.
    fn decision_function(&self, row: &[f64]) -> f64;

    fn predict_proba(&self, rows: &Matrix) -> Result<Vec<f64>> {
        if rows.ncols() != self.n_features() {
            return Err(ModelError::WidthMismatch {
                expected: self.n_features(),
                found: rows.ncols(),
            });
        }
        Ok(rows.rows_iter().map(|r| sigmoid(self.decision_function(r))).collect())
    }
}

pub(crate) fn check_training(x: &Matrix, y: &[bool]) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(ModelError::EmptyMatrix);
    }
    if x.nrows() != y.len() {
        return Err(ModelError::LabelMismatch {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    if !x.all_finite() {
        return Err(ModelError::NonFinite);
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

/// Mean binary log-loss of probabilities.
pub fn log_loss(y: &[bool], p: &[f64]) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .zip(p)
        .map(|(&t, &q)| if t { -q.ln() } else { -(1.0 - q).ln() })
        .sum::<f64>()
        / n
}

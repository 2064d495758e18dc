//! Train-only preprocessing: feature scaling, SMOTE oversampling and
//! stratified fold plans.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::registry::Named;
use crate::rng;
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("column mismatch: scaler fitted on {expected:?}, got {found:?}")]
    ColumnMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("SMOTE needs at least 2 minority rows, got {0}")]
    TooFewMinority(usize),
    #[error("class {class} has {count} samples, fewer than k = {k}")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    Minmax,
    Standard,
    None,
}

/// Per-feature scaling parameters learned from training rows. `params[j]`
/// holds `(min, max)` for min-max scaling and `(mean, sd)` for
/// standardisation; it is unused for the identity scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScaler {
    pub kind: ScalerKind,
    pub feature_names: Vec<String>,
    pub params: Vec<[f64; 2]>,
}

impl FittedScaler {
    #[inline]
    fn scale(&self, j: usize, x: f64) -> f64 {
        let [a, b] = self.params[j];
        match self.kind {
            ScalerKind::Minmax => {
                if b > a {
                    (x - a) / (b - a)
                } else {
                    0.0
                }
            }
            ScalerKind::Standard => {
                if b > 0.0 {
                    (x - a) / b
                } else {
                    0.0
                }
            }
            ScalerKind::None => x,
        }
    }

    /// Scales one value of the named feature.
    pub fn scale_value(&self, name: &str, x: f64) -> Option<f64> {
        let j = self.feature_names.iter().position(|n| n == name)?;
        Some(self.scale(j, x))
    }

    /// Test values outside the training range are not clamped.
    pub fn apply(&self, names: &[String], matrix: &Matrix) -> Result<Matrix> {
        if names != self.feature_names.as_slice() || matrix.ncols() != names.len() {
            return Err(PreprocessError::ColumnMismatch {
                expected: self.feature_names.clone(),
                found: names.to_vec(),
            });
        }
        let mut out = matrix.clone();
        for r in 0..out.nrows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.scale(j, *v);
            }
        }
        Ok(out)
    }

    /// Restriction to a subset of features, in the given order.
    pub fn subset(&self, names: &[String]) -> Option<FittedScaler> {
        let params = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|m| m == n)
                    .map(|j| self.params[j])
            })
            .collect::<Option<Vec<_>>>()?;
        Some(FittedScaler {
            kind: self.kind,
            feature_names: names.to_vec(),
            params,
        })
    }
}

/// A scaling strategy selectable by name.
pub trait ScalingStrategy: Named + Send + Sync {
    fn kind(&self) -> ScalerKind;

    fn fit(&self, names: &[String], train: &Matrix) -> Result<FittedScaler> {
        fit_scaler(self.kind(), names, train)
    }
}

pub struct MinMaxScaling;
pub struct StandardScaling;
pub struct NoScaling;

impl Named for MinMaxScaling {
    fn name(&self) -> &'static str {
        "minmax"
    }
}
impl ScalingStrategy for MinMaxScaling {
    fn kind(&self) -> ScalerKind {
        ScalerKind::Minmax
    }
}
impl Named for StandardScaling {
    fn name(&self) -> &'static str {
        "standard"
    }
}
impl ScalingStrategy for StandardScaling {
    fn kind(&self) -> ScalerKind {
        ScalerKind::Standard
    }
}
impl Named for NoScaling {
    fn name(&self) -> &'static str {
        "none"
    }
}
impl ScalingStrategy for NoScaling {
    fn kind(&self) -> ScalerKind {
        ScalerKind::None
    }
}

/// Fits scaler parameters on training rows only. Standardisation uses the
/// population standard deviation.
pub fn fit_scaler(kind: ScalerKind, names: &[String], train: &Matrix) -> Result<FittedScaler> {
    if train.nrows() == 0 || train.ncols() == 0 {
        return Err(PreprocessError::EmptyMatrix);
    }
    assert_eq!(names.len(), train.ncols(), "feature name count");
    let n = train.nrows() as f64;
    let params = (0..train.ncols())
        .map(|j| {
            let col = train.column(j);
            match kind {
                ScalerKind::Minmax => [
                    col.iter().copied().fold(f64::INFINITY, f64::min),
                    col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ],
                ScalerKind::Standard => {
                    let mean = col.iter().sum::<f64>() / n;
                    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    [mean, var.sqrt()]
                }
                ScalerKind::None => [0.0, 1.0],
            }
        })
        .collect();
    Ok(FittedScaler {
        kind,
        feature_names: names.to_vec(),
        params,
    })
}

/// Synthetic minority rows plus where each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub rows: Matrix,
    /// `(seed row, neighbour row, interpolation weight)` per synthetic row,
    /// indices into the minority matrix.
    pub origins: Vec<(usize, usize, f64)>,
    pub k_effective: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other rows of `i` (Euclidean, ties by index).
pub fn nearest_neighbors(rows: &Matrix, i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..rows.nrows())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(rows.row(i), rows.row(j)), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Emits `majority_count - minority_count` synthetic rows, each on the
/// segment between a random minority row and one of its `k` nearest minority
/// neighbours. `k` shrinks to `minority_count - 1` when needed.
pub fn smote_oversample(
    minority: &Matrix,
    majority_count: usize,
    k_neighbors: usize,
    seed: u64,
) -> Result<SmoteOutput> {
    let m = minority.nrows();
    if m < 2 {
        return Err(PreprocessError::TooFewMinority(m));
    }
    let k = k_neighbors.clamp(1, m - 1);
    let needed = majority_count.saturating_sub(m);
    let mut rng = rng::from_seed(seed);
    let mut neighbours: Vec<Option<Vec<usize>>> = vec![None; m];
    let mut data = Vec::with_capacity(needed * minority.ncols());
    let mut origins = Vec::with_capacity(needed);
    for _ in 0..needed {
        let i = rng.random_range(0..m);
        let nn = neighbours[i].get_or_insert_with(|| nearest_neighbors(minority, i, k));
        let j = nn[rng.random_range(0..nn.len())];
        let u: f64 = rng.random();
        let (xi, xj) = (minority.row(i), minority.row(j));
        data.extend(xi.iter().zip(xj).map(|(a, b)| a + u * (b - a)));
        origins.push((i, j, u));
    }
    Ok(SmoteOutput {
        rows: Matrix::from_vec(needed, minority.ncols(), data),
        origins,
        k_effective: k,
    })
}

/// Fold assignment for stratified k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Shuffles each class with a seeded RNG and deals its members round-robin
/// over the folds. The dealing position carries over from the negative to the
/// positive class so fold sizes stay balanced.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(PreprocessError::BadK(k));
    }
    let mut rng = rng::from_seed(seed);
    let mut assignments = vec![usize::MAX; labels.len()];
    let mut next = 0usize;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(PreprocessError::ClassTooSmall {
                class: class as u8,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

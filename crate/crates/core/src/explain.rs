//! Explainability: path-dependent TreeSHAP with a brute-force coalition
//! oracle, PCA projection onto the top principal components, and silhouette
//! scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{BoostedModel, Node, Tree};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("row width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("exact Shapley enumeration supports at most 15 features, got {0}")]
    TooManyFeatures(usize),
    #[error("need at least {needed} rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("{found} non-constant columns, fewer than {needed} components")]
    TooFewColumns { needed: usize, found: usize },
    #[error("silhouette needs both clusters present")]
    SingleCluster,
    #[error("label count {labels} does not match point count {points}")]
    LengthMismatch { points: usize, labels: usize },
}

pub type Result<T> = std::result::Result<T, ExplainError>;

/// Additive attribution of one row's raw (log-odds) score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub row_id: String,
    pub base_value: f64,
    pub values: Vec<f64>,
    /// Model raw score of the row; equals `base_value + sum(values)`.
    pub raw_score: f64,
}

impl ShapAttribution {
    pub fn local_accuracy_error(&self) -> f64 {
        (self.base_value + self.values.iter().sum::<f64>() - self.raw_score).abs()
    }
}

fn check_width(model: &BoostedModel, row: &[f64]) -> Result<()> {
    if row.len() != model.n_features {
        return Err(ExplainError::WidthMismatch {
            expected: model.n_features,
            found: row.len(),
        });
    }
    Ok(())
}

fn go_left(bins: &[u8], feature: usize, bin: u8) -> bool {
    bins[feature] <= bin
}

/// Cover-weighted expectation of a tree conditioning on the features for
/// which `known(feature)` holds.
fn conditional_expectation(tree: &Tree, node: usize, bins: &[u8], known: &dyn Fn(usize) -> bool) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        Node::Split {
            feature,
            bin,
            left,
            right,
            cover,
            ..
        } => {
            if known(*feature) {
                let next = if go_left(bins, *feature, *bin) { *left } else { *right };
                conditional_expectation(tree, next, bins, known)
            } else {
                let (l, r) = (&tree.nodes[*left], &tree.nodes[*right]);
                (l.cover() * conditional_expectation(tree, *left, bins, known)
                    + r.cover() * conditional_expectation(tree, *right, bins, known))
                    / cover
            }
        }
    }
}

/// Expected raw score with no feature known.
pub fn expected_value(model: &BoostedModel) -> f64 {
    let bins = vec![0u8; model.n_features];
    model.base_score
        + model.learning_rate
            * model
                .trees
                .iter()
                .map(|t| conditional_expectation(t, 0, &bins, &|_| false))
                .sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    let denom = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / denom;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, idx: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[idx].one_fraction, path[idx].zero_fraction);
    let denom = (l + 1) as f64;
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * denom / ((j + 1) as f64 * one);
            next = tmp - path[j].weight * zero * (l - j) as f64 / denom;
        } else {
            path[j].weight = path[j].weight * denom / (zero * (l - j) as f64);
        }
    }
    for j in idx..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero_fraction = path[j + 1].zero_fraction;
        path[j].one_fraction = path[j + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], idx: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[idx].one_fraction, path[idx].zero_fraction);
    let denom = (l + 1) as f64;
    let mut next = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = next * denom / ((j + 1) as f64 * one);
            total += tmp;
            next = path[j].weight - tmp * zero * (l - j) as f64 / denom;
        } else {
            total += path[j].weight / zero * denom / (l - j) as f64;
        }
    }
    total
}

fn tree_shap_recurse(
    tree: &Tree,
    node: usize,
    bins: &[u8],
    phi: &mut [f64],
    mut path: Vec<PathElement>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    extend_path(&mut path, zero, one, feature);
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                if let Some(f) = e.feature {
                    phi[f] += w * (e.one_fraction - e.zero_fraction) * value;
                }
            }
        }
        Node::Split {
            feature: f,
            bin,
            left,
            right,
            cover,
            ..
        } => {
            let (hot, cold) = if go_left(bins, *f, *bin) { (*left, *right) } else { (*right, *left) };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*f)) {
                iz = path[k].zero_fraction;
                io = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            let hot_frac = tree.nodes[hot].cover() / cover;
            let cold_frac = tree.nodes[cold].cover() / cover;
            tree_shap_recurse(tree, hot, bins, phi, path.clone(), iz * hot_frac, io, Some(*f));
            tree_shap_recurse(tree, cold, bins, phi, path, iz * cold_frac, 0.0, Some(*f));
        }
    }
}

/// Path-dependent TreeSHAP attribution of one raw-valued row.
pub fn tree_shap(model: &BoostedModel, row: &[f64]) -> Result<ShapAttribution> {
    check_width(model, row)?;
    let bins = model.bin_mapper.bin_row(row);
    let mut phi = vec![0.0; model.n_features];
    for tree in &model.trees {
        let mut tree_phi = vec![0.0; model.n_features];
        tree_shap_recurse(tree, 0, &bins, &mut tree_phi, Vec::new(), 1.0, 1.0, None);
        for (p, t) in phi.iter_mut().zip(&tree_phi) {
            *p += model.learning_rate * t;
        }
    }
    Ok(ShapAttribution {
        row_id: String::new(),
        base_value: expected_value(model),
        values: phi,
        raw_score: model.raw_binned(&bins),
    })
}

/// TreeSHAP for every row, in row order.
pub fn tree_shap_rows(model: &BoostedModel, rows: &Matrix, ids: &[String]) -> Result<Vec<ShapAttribution>> {
    (0..rows.nrows())
        .into_par_iter()
        .map(|i| {
            let mut a = tree_shap(model, rows.row(i))?;
            a.row_id = ids.get(i).cloned().unwrap_or_else(|| i.to_string());
            Ok(a)
        })
        .collect()
}

/// Mean absolute SHAP value per feature over `rows`.
pub fn mean_abs_shap(model: &BoostedModel, rows: &Matrix) -> Result<Vec<f64>> {
    let attributions = tree_shap_rows(model, rows, &[])?;
    let mut out = vec![0.0; model.n_features];
    for a in &attributions {
        for (o, v) in out.iter_mut().zip(&a.values) {
            *o += v.abs();
        }
    }
    let n = rows.nrows().max(1) as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// Shapley values by enumerating all `2^d` coalitions of the same
/// cover-weighted value function that TreeSHAP uses.
pub fn exact_shapley_oracle(model: &BoostedModel, row: &[f64]) -> Result<ShapAttribution> {
    check_width(model, row)?;
    let d = model.n_features;
    if d > 15 {
        return Err(ExplainError::TooManyFeatures(d));
    }
    let bins = model.bin_mapper.bin_row(row);
    let value = |mask: usize| -> f64 {
        let known = move |f: usize| mask & (1 << f) != 0;
        model.base_score
            + model.learning_rate
                * model
                    .trees
                    .iter()
                    .map(|t| conditional_expectation(t, 0, &bins, &known))
                    .sum::<f64>()
    };
    let v: Vec<f64> = (0..1usize << d).map(value).collect();
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << d {
            if mask & (1 << i) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[d - s - 1] / fact[d];
            *p += w * (v[mask | (1 << i)] - v[mask]);
        }
    }
    Ok(ShapAttribution {
        row_id: String::new(),
        base_value: v[0],
        values: phi,
        raw_score: v[(1usize << d) - 1],
    })
}

/// Top principal components of the standardised data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// One loading vector per component over all input columns; dropped
    /// constant columns carry zero loadings.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_fraction: Vec<f64>,
    /// Sample coordinates, `n x n_components`.
    pub coordinates: Matrix,
    pub dropped_constant_columns: Vec<usize>,
}

const PCA_TOL: f64 = 1e-13;
const PCA_MAX_ITER: usize = 200_000;

fn sign_normalise(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalise(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn mat_vec(a: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i * d..(i + 1) * d].iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

/// Leading eigenpairs of a symmetric positive semi-definite matrix by power
/// iteration with deflation and re-orthogonalisation.
pub fn symmetric_power_eigen(a: &[f64], d: usize, k: usize) -> Vec<(f64, Vec<f64>)> {
    let mut deflated = a.to_vec();
    let mut found: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    for c in 0..k {
        let mut v: Vec<f64> = (0..d).map(|j| 1.0 + ((j * 7 + c * 13) % 11) as f64 / 11.0).collect();
        normalise(&mut v);
        let mut w = vec![0.0; d];
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITER {
            mat_vec(&deflated, &v, &mut w);
            for (_, u) in &found {
                let dot: f64 = w.iter().zip(u).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
            }
            let rayleigh: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
            let residual = w.iter().zip(&v).fold(0.0f64, |m, (x, y)| m.max((x - rayleigh * y).abs()));
            if normalise(&mut w) == 0.0 {
                w = v.clone();
                lambda = 0.0;
                break;
            }
            sign_normalise(&mut w);
            std::mem::swap(&mut v, &mut w);
            if residual < PCA_TOL * rayleigh.abs().max(1.0) {
                break;
            }
        }
        mat_vec(a, &v, &mut w);
        if lambda == 0.0 {
            lambda = v.iter().zip(&w).map(|(x, y)| x * y).sum();
        }
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        found.push((lambda, v));
    }
    found
}

/// Projects rows onto the top `n_components` principal components of the
/// column-standardised data (population standard deviation; constant
/// columns are dropped).
pub fn pca_project(x: &Matrix, n_components: usize) -> Result<Projection> {
    let (n, d) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(ExplainError::TooFewRows { needed: 2, found: n });
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut stats = Vec::new();
    for j in 0..d {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        if sd > 0.0 {
            kept.push(j);
            stats.push((mean, sd));
        } else {
            dropped.push(j);
        }
    }
    let dk = kept.len();
    if dk < n_components {
        return Err(ExplainError::TooFewColumns {
            needed: n_components,
            found: dk,
        });
    }
    let mut z = vec![0.0; n * dk];
    for i in 0..n {
        for (c, (&j, &(mean, sd))) in kept.iter().zip(&stats).enumerate() {
            z[i * dk + c] = (x.get(i, j) - mean) / sd;
        }
    }
    let mut corr = vec![0.0; dk * dk];
    for i in 0..n {
        let r = &z[i * dk..(i + 1) * dk];
        for a in 0..dk {
            for b in 0..=a {
                corr[a * dk + b] += r[a] * r[b];
            }
        }
    }
    for a in 0..dk {
        for b in 0..=a {
            corr[a * dk + b] /= n as f64;
            corr[b * dk + a] = corr[a * dk + b];
        }
    }
    let trace: f64 = (0..dk).map(|a| corr[a * dk + a]).sum();
    let pairs = symmetric_power_eigen(&corr, dk, n_components);
    let mut coordinates = Matrix::zeros(n, n_components);
    for i in 0..n {
        let r = &z[i * dk..(i + 1) * dk];
        for (c, (_, v)) in pairs.iter().enumerate() {
            coordinates.set(i, c, r.iter().zip(v).map(|(a, b)| a * b).sum());
        }
    }
    let components = pairs
        .iter()
        .map(|(_, v)| {
            let mut full = vec![0.0; d];
            for (&j, &l) in kept.iter().zip(v) {
                full[j] = l;
            }
            full
        })
        .collect();
    Ok(Projection {
        components,
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        explained_fraction: pairs.iter().map(|p| (p.0 / trace).clamp(0.0, 1.0)).collect(),
        coordinates,
        dropped_constant_columns: dropped,
    })
}

/// Mean silhouette over all points for a two-cluster labelling. Points in
/// a singleton cluster contribute 0.
pub fn silhouette_score(points: &Matrix, labels: &[bool]) -> Result<f64> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(ExplainError::LengthMismatch { points: n, labels: labels.len() });
    }
    if n < 3 {
        return Err(ExplainError::TooFewRows { needed: 3, found: n });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        return Err(ExplainError::SingleCluster);
    }
    let dist = |i: usize, j: usize| -> f64 {
        points
            .row(i)
            .iter()
            .zip(points.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut same, mut other) = (0.0, 0.0);
            let (mut n_same, mut n_other) = (0usize, 0usize);
            for j in 0..n {
                if j == i {
                    continue;
                }
                if labels[j] == labels[i] {
                    same += dist(i, j);
                    n_same += 1;
                } else {
                    other += dist(i, j);
                    n_other += 1;
                }
            }
            if n_same == 0 {
                return 0.0;
            }
            let a = same / n_same as f64;
            let b = other / n_other as f64;
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BinMapper, HistParams, BOOSTED_SCHEMA_VERSION};

    pub(crate) fn stump_model() -> BoostedModel {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    bin: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                    cover: 10.0,
                },
                Node::Leaf { value: -1.0, cover: 4.0 },
                Node::Leaf { value: 2.0, cover: 6.0 },
            ],
        };
        BoostedModel {
            schema_version: BOOSTED_SCHEMA_VERSION,
            n_features: 3,
            bin_mapper: BinMapper {
                thresholds: vec![vec![0.5], vec![0.5], vec![0.5]],
            },
            trees: vec![tree],
            base_score: 0.25,
            learning_rate: 0.5,
            params: HistParams::default(),
            seed: 0,
            train_loss: vec![],
        }
    }

    #[test]
    fn stump_attribution_on_split_feature_only() {
        let m = stump_model();
        let a = tree_shap(&m, &[0.0, 9.0, -9.0]).unwrap();
        // E = 0.25 + 0.5 * (0.4 * -1 + 0.6 * 2) = 0.65; f = 0.25 - 0.5 = -0.25
        assert!((a.base_value - 0.65).abs() < 1e-12);
        assert!((a.values[0] + 0.9).abs() < 1e-12);
        assert_eq!(a.values[1], 0.0);
        assert_eq!(a.values[2], 0.0);
        assert!(a.local_accuracy_error() < 1e-12);
    }

    #[test]
    fn zero_trees() {
        let mut m = stump_model();
        m.trees.clear();
        let a = tree_shap(&m, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(a.values, vec![0.0; 3]);
        assert_eq!(a.base_value, 0.25);
        assert!(matches!(tree_shap(&m, &[1.0]), Err(ExplainError::WidthMismatch { .. })));
    }

    #[test]
    fn oracle_matches_on_stump() {
        let m = stump_model();
        let a = tree_shap(&m, &[1.0, 0.0, 0.0]).unwrap();
        let b = exact_shapley_oracle(&m, &[1.0, 0.0, 0.0]).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.base_value - b.base_value).abs() < 1e-12);
    }

    #[test]
    fn repeated_feature_on_path() {
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 0, bin: 1, threshold: 1.5, left: 1, right: 2, gain: 1.0, cover: 10.0 },
                Node::Split { feature: 0, bin: 0, threshold: 0.5, left: 3, right: 4, gain: 1.0, cover: 6.0 },
                Node::Split { feature: 1, bin: 0, threshold: 0.5, left: 5, right: 6, gain: 1.0, cover: 4.0 },
                Node::Leaf { value: 1.0, cover: 3.0 },
                Node::Leaf { value: -2.0, cover: 3.0 },
                Node::Leaf { value: 0.5, cover: 1.0 },
                Node::Leaf { value: 3.0, cover: 3.0 },
            ],
        };
        let mut m = stump_model();
        m.n_features = 2;
        m.bin_mapper = BinMapper { thresholds: vec![vec![0.5, 1.5], vec![0.5]] };
        m.trees = vec![tree];
        for row in [[0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [2.0, 1.0]] {
            let a = tree_shap(&m, &row).unwrap();
            let b = exact_shapley_oracle(&m, &row).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12, "{row:?}: {x} vs {y}");
            }
            assert!(a.local_accuracy_error() < 1e-12);
        }
    }

    #[test]
    fn pca_collinear() {
        let x = Matrix::from_rows(&[[1.0, 3.0, 5.0], [2.0, 6.0, 5.0], [3.0, 9.0, 5.0], [4.0, 12.0, 5.0]]);
        let p = pca_project(&x, 1).unwrap();
        assert!((p.explained_fraction[0] - 1.0).abs() < 1e-10);
        assert_eq!(p.dropped_constant_columns, vec![2]);
        assert_eq!(p.components[0][2], 0.0);
        assert!(p.components[0][0] > 0.0);
        assert!(matches!(pca_project(&x, 3), Err(ExplainError::TooFewColumns { .. })));
    }

    #[test]
    fn silhouette_hand_computed() {
        // Triads on a line: A = {0, 1, 2}, B = {10, 11, 12}.
        let x = Matrix::column_vector(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let labels = [false, false, false, true, true, true];
        // Point 0: a = 1.5, b = 11, s = 9.5 / 11; point 1: a = 1, b = 10, s = 0.9;
        // point 2: a = 1.5, b = 9, s = 7.5 / 9. Symmetric for B.
        let expected = (9.5 / 11.0 + 0.9 + 7.5 / 9.0) / 3.0;
        let s = silhouette_score(&x, &labels).unwrap();
        assert!((s - expected).abs() < 1e-15);
        assert_eq!(
            silhouette_score(&x, &[true; 6]),
            Err(ExplainError::SingleCluster)
        );
    }

    #[test]
    fn silhouette_singleton_contributes_zero() {
        let x = Matrix::column_vector(&[0.0, 1.0, 5.0]);
        let s = silhouette_score(&x, &[false, false, true]).unwrap();
        // point 0: a = 1, b = 5 -> 0.8; point 1: a = 1, b = 4 -> 0.75; point 2 -> 0
        assert!((s - (0.8 + 0.75) / 3.0).abs() < 1e-15);
    }
}

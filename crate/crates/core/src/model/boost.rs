use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_training, log_loss, quantile_bin, sigmoid, BinMapper, Classifier, ModelError, Result};
use crate::rng;
use crate::Matrix;

pub const BOOSTED_SCHEMA_VERSION: u32 = 1;

/// Stop when the held-out log-loss has not improved by `tol` for
/// `patience` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub validation_fraction: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    /// `None` leaves depth unbounded.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub l2_leaf: f64,
    pub max_bins: usize,
    pub min_hessian_leaf: f64,
    /// Fraction of features offered to each tree.
    pub feature_fraction: f64,
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for HistParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            learning_rate: 0.1,
            max_leaves: 31,
            max_depth: None,
            min_samples_leaf: 20,
            l2_leaf: 1.0,
            max_bins: 255,
            min_hessian_leaf: 1e-3,
            feature_fraction: 1.0,
            early_stopping: None,
        }
    }
}

impl HistParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::DegenerateParams(m));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if self.max_leaves < 2 {
            return bad(format!("max_leaves {} < 2", self.max_leaves));
        }
        if self.max_depth == Some(0) {
            return bad("max_depth 0".into());
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf 0".into());
        }
        if !(self.l2_leaf >= 0.0) || !(self.min_hessian_leaf >= 0.0) {
            return bad("negative regularisation".into());
        }
        if !(2..=255).contains(&self.max_bins) {
            return bad(format!("max_bins {} outside [2, 255]", self.max_bins));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad(format!("feature_fraction {}", self.feature_fraction));
        }
        if let Some(es) = &self.early_stopping {
            if es.patience == 0 || !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) {
                return bad("early_stopping".into());
            }
        }
        Ok(())
    }
}

/// Tree node. Children are indices into the owning tree's node list;
/// `cover` is the number of training rows that reached the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with bin index `<= bin` go left.
        bin: u8,
        /// Raw-value equivalent: `value <= threshold` goes left.
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value reached by a binned row (not scaled by the learning rate).
    pub fn predict_binned(&self, bins: &[u8]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature, bin, left, right, ..
                } => i = if bins[*feature] <= *bin { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub schema_version: u32,
    pub n_features: usize,
    pub bin_mapper: BinMapper,
    pub trees: Vec<Tree>,
    /// Prior log-odds.
    pub base_score: f64,
    pub learning_rate: f64,
    pub params: HistParams,
    pub seed: u64,
    /// Mean training log-loss before the first tree and after each round.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    /// Raw score from an already binned row.
    pub fn raw_binned(&self, bins: &[u8]) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.predict_binned(bins)).sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

impl Classifier for BoostedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn decision_function(&self, row: &[f64]) -> f64 {
        self.raw_binned(&self.bin_mapper.bin_row(row))
    }
}

/// Per-bin gradient/hessian sums and counts for every feature of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub grad: Vec<Vec<f64>>,
    pub hess: Vec<Vec<f64>>,
    pub count: Vec<Vec<usize>>,
}

impl Histogram {
    pub fn build(binned: &[Vec<u8>], n_bins: &[usize], rows: &[usize], g: &[f64], h: &[f64]) -> Self {
        let mut grad: Vec<Vec<f64>> = n_bins.iter().map(|&b| vec![0.0; b]).collect();
        let mut hess = grad.clone();
        let mut count: Vec<Vec<usize>> = n_bins.iter().map(|&b| vec![0; b]).collect();
        for (f, col) in binned.iter().enumerate() {
            let (gf, hf, cf) = (&mut grad[f], &mut hess[f], &mut count[f]);
            for &i in rows {
                let b = col[i] as usize;
                gf[b] += g[i];
                hf[b] += h[i];
                cf[b] += 1;
            }
        }
        Self { grad, hess, count }
    }

    /// `self - other`, bin by bin.
    pub fn subtract(&self, other: &Histogram) -> Histogram {
        let sub = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                .collect()
        };
        Histogram {
            grad: sub(&self.grad, &other.grad),
            hess: sub(&self.hess, &other.hess),
            count: self
                .count
                .iter()
                .zip(&other.count)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    bin: u8,
    gain: f64,
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

/// Best split of a node under the (lower feature, lower bin) tie-break.
fn best_split(
    hist: &Histogram,
    features: &[usize],
    total_g: f64,
    total_h: f64,
    total_n: usize,
    p: &HistParams,
) -> Option<SplitCandidate> {
    let parent = score(total_g, total_h, p.l2_leaf);
    let mut best: Option<SplitCandidate> = None;
    for &f in features {
        let (gf, hf, cf) = (&hist.grad[f], &hist.hess[f], &hist.count[f]);
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for b in 0..gf.len().saturating_sub(1) {
            gl += gf[b];
            hl += hf[b];
            nl += cf[b];
            let nr = total_n - nl;
            if nl < p.min_samples_leaf || nr < p.min_samples_leaf {
                continue;
            }
            let (gr, hr) = (total_g - gl, total_h - hl);
            if hl < p.min_hessian_leaf || hr < p.min_hessian_leaf {
                continue;
            }
            let gain = 0.5 * (score(gl, hl, p.l2_leaf) + score(gr, hr, p.l2_leaf) - parent);
            if gain > 1e-12 && best.is_none_or(|c| gain > c.gain) {
                best = Some(SplitCandidate {
                    feature: f,
                    bin: b as u8,
                    gain,
                });
            }
        }
    }
    best
}

struct OpenLeaf {
    node: usize,
    rows: Vec<usize>,
    hist: Histogram,
    depth: usize,
    g: f64,
    h: f64,
    split: Option<SplitCandidate>,
}

struct TreeGrower<'a> {
    binned: &'a [Vec<u8>],
    n_bins: &'a [usize],
    mapper: &'a BinMapper,
    y: &'a [bool],
    g: &'a [f64],
    h: &'a [f64],
    features: Vec<usize>,
    params: &'a HistParams,
}

impl TreeGrower<'_> {
    fn open(&self, node: usize, rows: Vec<usize>, hist: Histogram, depth: usize) -> OpenLeaf {
        let g: f64 = rows.iter().map(|&i| self.g[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.h[i]).sum();
        let pure = rows.iter().all(|&i| self.y[i] == self.y[rows[0]]);
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let split = if pure || !depth_ok {
            None
        } else {
            best_split(&hist, &self.features, g, h, rows.len(), self.params)
        };
        OpenLeaf {
            node,
            rows,
            hist,
            depth,
            g,
            h,
            split,
        }
    }

    /// Grows one tree best-first; returns it with the leaf index of every
    /// training row it saw.
    fn grow(&self, rows: Vec<usize>) -> (Tree, Vec<(usize, f64)>) {
        let l2 = self.params.l2_leaf;
        let root_hist = Histogram::build(self.binned, self.n_bins, &rows, self.g, self.h);
        let mut nodes = vec![Node::Leaf {
            value: 0.0,
            cover: rows.len() as f64,
        }];
        let mut open = vec![self.open(0, rows, root_hist, 0)];
        let mut n_leaves = 1;

        while n_leaves < self.params.max_leaves {
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(k, l)| l.split.map(|s| (k, s.gain, l.node)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
            let Some((k, _, _)) = pick else { break };
            let leaf = open.swap_remove(k);
            let split = leaf.split.expect("picked leaf has a split");
            let col = &self.binned[split.feature];
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                leaf.rows.iter().partition(|&&i| col[i] <= split.bin);
            let (small, small_is_left) = if left_rows.len() <= right_rows.len() {
                (&left_rows, true)
            } else {
                (&right_rows, false)
            };
            let small_hist = Histogram::build(self.binned, self.n_bins, small, self.g, self.h);
            let large_hist = leaf.hist.subtract(&small_hist);
            let (left_hist, right_hist) = if small_is_left {
                (small_hist, large_hist)
            } else {
                (large_hist, small_hist)
            };

            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf {
                value: 0.0,
                cover: left_rows.len() as f64,
            });
            nodes.push(Node::Leaf {
                value: 0.0,
                cover: right_rows.len() as f64,
            });
            nodes[leaf.node] = Node::Split {
                feature: split.feature,
                bin: split.bin,
                threshold: self.mapper.thresholds[split.feature][split.bin as usize],
                left: li,
                right: ri,
                gain: split.gain,
                cover: leaf.rows.len() as f64,
            };
            open.push(self.open(li, left_rows, left_hist, leaf.depth + 1));
            open.push(self.open(ri, right_rows, right_hist, leaf.depth + 1));
            n_leaves += 1;
        }

        let mut assignment = Vec::new();
        for leaf in open {
            let value = -leaf.g / (leaf.h + l2);
            nodes[leaf.node] = Node::Leaf {
                value,
                cover: leaf.rows.len() as f64,
            };
            assignment.extend(leaf.rows.into_iter().map(|i| (i, value)));
        }
        (Tree { nodes }, assignment)
    }
}

/// Fits a histogram gradient-boosted classifier on the logistic loss.
pub fn fit_histgbm(x: &Matrix, y: &[bool], params: &HistParams, seed: u64) -> Result<BoostedModel> {
    check_training(x, y)?;
    params.validate()?;
    let n = x.nrows();
    let d = x.ncols();

    let (train_rows, valid_rows) = match &params.early_stopping {
        Some(es) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng::stream(seed, rng::streams::BOOSTER + 1000));
            let n_valid = ((n as f64) * es.validation_fraction).round() as usize;
            let n_valid = n_valid.clamp(1, n - 1);
            let mut valid = idx[..n_valid].to_vec();
            let mut train = idx[n_valid..].to_vec();
            valid.sort_unstable();
            train.sort_unstable();
            (train, valid)
        }
        None => ((0..n).collect::<Vec<_>>(), Vec::new()),
    };
    let y_train: Vec<bool> = train_rows.iter().map(|&i| y[i]).collect();
    let pos = y_train.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y_train.len() {
        return Err(ModelError::SingleClass);
    }

    let mapper = quantile_bin(&x.select_rows(&train_rows), params.max_bins)?;
    let binned = mapper.transform(x);
    let n_bins: Vec<usize> = (0..d).map(|f| mapper.n_bins(f)).collect();

    let prior = pos as f64 / y_train.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut raw = vec![base_score; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let loss_on = |rows: &[usize], raw: &[f64]| -> f64 {
        let yy: Vec<bool> = rows.iter().map(|&i| y[i]).collect();
        let pp: Vec<f64> = rows.iter().map(|&i| sigmoid(raw[i])).collect();
        log_loss(&yy, &pp)
    };
    let mut train_loss = vec![loss_on(&train_rows, &raw)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut feature_rng = rng::stream(seed, rng::streams::BOOSTER);
    let n_sub = ((d as f64) * params.feature_fraction).ceil().max(1.0) as usize;
    let mut best_valid = f64::INFINITY;
    let mut best_len = 0;
    let mut stale = 0;

    for _ in 0..params.n_trees {
        for &i in &train_rows {
            let p = sigmoid(raw[i]);
            let t = if y[i] { 1.0 } else { 0.0 };
            g[i] = p - t;
            h[i] = p * (1.0 - p);
        }
        let features = if n_sub < d {
            let mut f: Vec<usize> = (0..d).collect();
            f.shuffle(&mut feature_rng);
            let mut f = f[..n_sub].to_vec();
            f.sort_unstable();
            f
        } else {
            (0..d).collect()
        };
        let grower = TreeGrower {
            binned: &binned,
            n_bins: &n_bins,
            mapper: &mapper,
            y,
            g: &g,
            h: &h,
            features,
            params,
        };
        let (tree, assignment) = grower.grow(train_rows.clone());
        for (i, v) in assignment {
            raw[i] += params.learning_rate * v;
        }
        if !valid_rows.is_empty() {
            for &i in &valid_rows {
                let bins: Vec<u8> = (0..d).map(|f| binned[f][i]).collect();
                raw[i] += params.learning_rate * tree.predict_binned(&bins);
            }
        }
        trees.push(tree);
        train_loss.push(loss_on(&train_rows, &raw));

        if let Some(es) = &params.early_stopping {
            let vl = loss_on(&valid_rows, &raw);
            if vl < best_valid - es.tol {
                best_valid = vl;
                best_len = trees.len();
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience {
                    trees.truncate(best_len);
                    train_loss.truncate(best_len + 1);
                    break;
                }
            }
        }
    }

    Ok(BoostedModel {
        schema_version: BOOSTED_SCHEMA_VERSION,
        n_features: d,
        bin_mapper: mapper,
        trees,
        base_score,
        learning_rate: params.learning_rate,
        params: params.clone(),
        seed,
        train_loss,
    })
}

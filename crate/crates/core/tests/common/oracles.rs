//! Independent reference implementations and randomized comparison drivers.
//! Each driver returns the worst disagreement seen over its instances.

use hyposcreen_core::evaluate::auroc;
use hyposcreen_core::explain::{pca_project, tree_shap};
use hyposcreen_core::model::{fit_histgbm, logistic_objective, BoostedModel, Classifier, HistParams, Node, Tree};
use hyposcreen_core::preprocess::smote_oversample;
use hyposcreen_core::rng::from_seed;
use hyposcreen_core::stats::fisher_exact;
use hyposcreen_core::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub const INSTANCES: usize = 100;

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, d: usize) -> Matrix {
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(n, d, data)
}

/// Labels from a noisy linear score, guaranteed to contain both classes.
pub fn random_labels<R: Rng>(rng: &mut R, x: &Matrix) -> Vec<bool> {
    let mut y: Vec<bool> = (0..x.nrows())
        .map(|i| x.get(i, 0) + 0.5 * rng.sample::<f64, _>(StandardNormal) > 0.0)
        .collect();
    y[0] = true;
    y[1] = false;
    y
}

pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn auroc_vs_mann_whitney(seed: u64) -> f64 {
    let mut rng = from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let n = rng.random_range(2..80);
        // coarse scores force ties
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..1.0f64) * 10.0).floor() / 10.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let got = auroc(&scores, &labels).unwrap();
        worst = worst.max((got - mann_whitney_auc(&scores, &labels)).abs());
    }
    worst
}

/// Expected tree output when only features in `mask` are known, averaging
/// unknown splits by training cover.
fn tree_expectation(tree: &Tree, node: usize, bins: &[u8], mask: usize) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        Node::Split {
            feature, bin, left, right, cover, ..
        } => {
            if mask & (1 << feature) != 0 {
                let next = if bins[*feature] <= *bin { *left } else { *right };
                tree_expectation(tree, next, bins, mask)
            } else {
                let (l, r) = (tree.nodes[*left].cover(), tree.nodes[*right].cover());
                (l * tree_expectation(tree, *left, bins, mask) + r * tree_expectation(tree, *right, bins, mask)) / cover
            }
        }
    }
}

/// Shapley values from all `2^d` coalitions.
pub fn coalition_shapley(model: &BoostedModel, row: &[f64]) -> (f64, Vec<f64>) {
    let d = model.n_features;
    let bins = model.bin_mapper.bin_row(row);
    let v: Vec<f64> = (0..1usize << d)
        .map(|mask| {
            model.base_score
                + model.learning_rate * model.trees.iter().map(|t| tree_expectation(t, 0, &bins, mask)).sum::<f64>()
        })
        .collect();
    let fact: Vec<f64> = (0..=d).scan(1.0, |acc, i| {
        if i > 0 {
            *acc *= i as f64;
        }
        Some(*acc)
    })
    .collect();
    let phi = (0..d)
        .map(|i| {
            (0..1usize << d)
                .filter(|m| m & (1 << i) == 0)
                .map(|m| {
                    let s = m.count_ones() as usize;
                    fact[s] * fact[d - s - 1] / fact[d] * (v[m | (1 << i)] - v[m])
                })
                .sum()
        })
        .collect();
    (v[0], phi)
}

pub fn random_booster<R: Rng>(rng: &mut R, d: usize) -> (BoostedModel, Matrix) {
    let n = rng.random_range(40..90);
    let x = random_matrix(rng, n, d);
    let y = random_labels(rng, &x);
    let params = HistParams {
        n_trees: rng.random_range(1..6),
        learning_rate: rng.random_range(0.05..0.5),
        max_leaves: rng.random_range(2..10),
        min_samples_leaf: rng.random_range(2..8),
        max_bins: rng.random_range(4..64),
        ..HistParams::default()
    };
    (fit_histgbm(&x, &y, &params, rng.random()).unwrap(), x)
}

/// Max |phi_treeshap - phi_exact| and max local accuracy error over
/// models with at most ten features.
pub fn treeshap_vs_coalitions(seed: u64) -> (f64, f64) {
    let mut rng = from_seed(seed);
    let (mut worst, mut local): (f64, f64) = (0.0, 0.0);
    for _ in 0..INSTANCES {
        let d = rng.random_range(1..=10);
        let (model, _) = random_booster(&mut rng, d);
        let row: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let a = tree_shap(&model, &row).unwrap();
        let (base, phi) = coalition_shapley(&model, &row);
        worst = worst.max((a.base_value - base).abs());
        for (p, q) in a.values.iter().zip(&phi) {
            worst = worst.max((p - q).abs());
        }
        local = local.max(a.local_accuracy_error());
        local = local.max((a.raw_score - model.decision_function(&row)).abs());
    }
    (worst, local)
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Two-sided Fisher p by counting label permutations with exact integers.
pub fn fisher_by_enumeration(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let weight = |x: u64| binomial(r1, x) * binomial(r2, c1 - x);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let observed = weight(a);
    let (mut extreme, mut total) = (0u128, 0u128);
    for x in lo..=hi {
        let w = weight(x);
        total += w;
        if w <= observed {
            extreme += w;
        }
    }
    extreme as f64 / total as f64
}

pub fn fisher_vs_enumeration(seed: u64) -> (f64, usize) {
    let mut rng = from_seed(seed);
    let (mut worst, mut checked): (f64, usize) = (0.0, 0);
    while checked < INSTANCES {
        let n = rng.random_range(2..=30u64);
        let mut cells = [0u64; 4];
        for _ in 0..n {
            cells[rng.random_range(0..4)] += 1;
        }
        let [a, b, c, d] = cells;
        if a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0 {
            assert!(fisher_exact(a, b, c, d).is_err());
            continue;
        }
        let got = fisher_exact(a, b, c, d).unwrap().p_value;
        worst = worst.max((got - fisher_by_enumeration(a, b, c, d)).abs());
        checked += 1;
    }
    (worst, checked)
}

/// Checks every synthetic row lies on a segment to one of its seed's true
/// k nearest minority neighbours. Returns the number of rows checked.
pub fn smote_vs_exhaustive_nn(seed: u64) -> Result<usize, String> {
    let mut rng = from_seed(seed);
    let mut rows_checked = 0;
    for inst in 0..INSTANCES {
        let m = rng.random_range(2..20);
        let d = rng.random_range(1..5);
        let minority = random_matrix(&mut rng, m, d);
        let majority = m + rng.random_range(0..30);
        let k = rng.random_range(1..8);
        let out = smote_oversample(&minority, majority, k, rng.random()).map_err(|e| e.to_string())?;
        let k_eff = k.min(m - 1);
        if out.rows.nrows() != majority - m || out.k_effective != k_eff {
            return Err(format!("instance {inst}: wrong count or k"));
        }
        for (r, &(i, j, u)) in out.origins.iter().enumerate() {
            let dist = |a: usize, b: usize| -> f64 {
                (0..d).map(|f| (minority.get(a, f) - minority.get(b, f)).powi(2)).sum()
            };
            let mut others: Vec<f64> = (0..m).filter(|&o| o != i).map(|o| dist(i, o)).collect();
            others.sort_by(f64::total_cmp);
            if j == i || dist(i, j) > others[k_eff - 1] {
                return Err(format!("instance {inst}: row {r} uses {j}, not a {k_eff}-NN of {i}"));
            }
            if !(0.0..=1.0).contains(&u) {
                return Err(format!("instance {inst}: weight {u}"));
            }
            for f in 0..d {
                let expect = minority.get(i, f) + u * (minority.get(j, f) - minority.get(i, f));
                if (out.rows.get(r, f) - expect).abs() > 1e-12 {
                    return Err(format!("instance {inst}: row {r} is off the segment"));
                }
            }
            rows_checked += 1;
        }
    }
    Ok(rows_checked)
}

fn walk(tree: &Tree, row: &[f64]) -> f64 {
    let mut i = 0;
    loop {
        match &tree.nodes[i] {
            Node::Leaf { value, .. } => return *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => i = if row[*feature] <= *threshold { *left } else { *right },
        }
    }
}

pub fn boost_vs_tree_walk(seed: u64) -> f64 {
    let mut rng = from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let d = rng.random_range(1..6);
        let (model, x) = random_booster(&mut rng, d);
        let mut rows: Vec<Vec<f64>> = x.rows_iter().take(5).map(|r| r.to_vec()).collect();
        rows.push((0..d).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect());
        for row in rows {
            let naive = model.base_score + model.learning_rate * model.trees.iter().map(|t| walk(t, &row)).sum::<f64>();
            worst = worst.max((model.decision_function(&row) - naive).abs());
        }
    }
    worst
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix; returns
/// eigenvalues descending with matching unit eigenvectors.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}

/// Pearson correlation matrix with population moments.
pub fn correlation_matrix(x: &Matrix) -> Vec<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let c = x.column(j);
            let mean = c.iter().sum::<f64>() / n as f64;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            c.iter().map(|v| (v - mean) / sd).collect()
        })
        .collect();
    let mut r = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            r[i * d + j] = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        }
    }
    r
}

/// Largest disagreement between PCA components (sign-normalised so the
/// largest-magnitude loading is positive) and Jacobi eigenvectors.
pub fn pca_vs_jacobi(seed: u64) -> f64 {
    let mut rng = from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let d = rng.random_range(3..7);
        let n = rng.random_range(20..60);
        let mut x = random_matrix(&mut rng, n, d);
        // uneven column scales and some correlation for well separated eigenvalues
        for i in 0..n {
            let base = x.get(i, 0);
            for j in 1..d {
                let v = x.get(i, j) * (1.0 + j as f64) + 0.7 * j as f64 * base;
                x.set(i, j, v);
            }
        }
        let p = pca_project(&x, 2).unwrap();
        let (values, vectors) = jacobi_eigen(&correlation_matrix(&x), d);
        if (values[1] - values[2]).abs() < 1e-3 || (values[0] - values[1]).abs() < 1e-3 {
            continue;
        }
        for (c, comp) in p.components.iter().enumerate() {
            let mut v = vectors[c].clone();
            let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            for (a, b) in comp.iter().zip(&v) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((p.eigenvalues[c] - values[c]).abs());
        }
    }
    worst
}

/// Max relative error between the analytic gradient and central differences.
pub fn logistic_gradient_vs_fd(seed: u64) -> f64 {
    let mut rng = from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let d = rng.random_range(1..6);
        let n = rng.random_range(5..40);
        let x = random_matrix(&mut rng, n, d);
        let y = random_labels(&mut rng, &x);
        let l2 = rng.random_range(0.0..2.0);
        let params: Vec<f64> = (0..=d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (_, grad) = logistic_objective(&x, &y, l2, &params);
        for k in 0..=d {
            let h = 1e-6 * (1.0 + params[k].abs());
            let mut up = params.clone();
            let mut down = params.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (logistic_objective(&x, &y, l2, &up).0 - logistic_objective(&x, &y, l2, &down).0) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / grad[k].abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Largest per-round increase of the training log-loss.
pub fn boost_loss_max_increase(seed: u64) -> f64 {
    let mut rng = from_seed(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..INSTANCES {
        let d = rng.random_range(1..6);
        let n = rng.random_range(30..120);
        let x = random_matrix(&mut rng, n, d);
        let y = random_labels(&mut rng, &x);
        let params = HistParams {
            n_trees: rng.random_range(5..40),
            learning_rate: rng.random_range(0.01..1.0),
            max_leaves: rng.random_range(2..32),
            min_samples_leaf: rng.random_range(1..10),
            ..HistParams::default()
        };
        let model = fit_histgbm(&x, &y, &params, rng.random()).unwrap();
        for w in model.train_loss.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
    }
    worst
}

use serde::{Deserialize, Serialize};

use super::{check_training, cholesky_solve, softplus, Classifier, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2_strength: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn zero(n_features: usize) -> Self {
        Self {
            weights: vec![0.0; n_features],
            intercept: 0.0,
            l2_strength: 0.0,
            converged: true,
            iterations: 0,
        }
    }
}

impl Classifier for LogisticModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn decision_function(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub l2_strength: f64,
    /// Convergence threshold on the gradient infinity-norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            l2_strength: 1.0,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Penalised negative log-likelihood and its gradient at `params`
/// (`weights..., intercept`). The intercept is not penalised.
pub fn logistic_objective(x: &Matrix, y: &[bool], l2: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let d = x.ncols();
    let (w, b) = (&params[..d], params[d]);
    let mut f = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    let mut g = vec![0.0; d + 1];
    for (i, row) in x.rows_iter().enumerate() {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let t = if y[i] { 1.0 } else { 0.0 };
        f += softplus(z) - t * z;
        let r = unclamped_sigmoid(z) - t;
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    for (gj, wj) in g.iter_mut().zip(w) {
        *gj += l2 * wj;
    }
    (f, g)
}

fn unclamped_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn objective_only(x: &Matrix, y: &[bool], l2: f64, params: &[f64]) -> f64 {
    let d = x.ncols();
    let (w, b) = (&params[..d], params[d]);
    let mut f = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (i, row) in x.rows_iter().enumerate() {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        f += softplus(z) - if y[i] { z } else { 0.0 };
    }
    f
}

/// Minimises the L2-penalised logistic loss with backtracking Newton steps.
/// Non-convergence is reported through `converged = false` on the best
/// iterate rather than as an error.
pub fn fit_logistic(x: &Matrix, y: &[bool], opts: &LogisticOptions) -> Result<LogisticModel> {
    check_training(x, y)?;
    if !(opts.l2_strength >= 0.0) {
        return Err(super::ModelError::DegenerateParams(format!(
            "l2_strength {}",
            opts.l2_strength
        )));
    }
    let d = x.ncols();
    let n = d + 1;
    let l2 = opts.l2_strength;
    let mut params = vec![0.0; n];
    let (mut f, mut g) = logistic_objective(x, y, l2, &params);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut h = vec![0.0; n * n];
        for row in x.rows_iter() {
            let z = params[d] + row.iter().zip(&params[..d]).map(|(a, c)| a * c).sum::<f64>();
            let p = unclamped_sigmoid(z);
            let s = p * (1.0 - p);
            for a in 0..n {
                let xa = if a < d { row[a] } else { 1.0 };
                if xa == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    let xb = if b < d { row[b] } else { 1.0 };
                    h[a * n + b] += s * xa * xb;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                h[b * n + a] = h[a * n + b];
            }
        }
        for a in 0..d {
            h[a * n + a] += l2;
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let trace = (0..n).map(|a| h[a * n + a]).sum::<f64>().max(1.0);
        let mut step = None;
        let mut jitter = 1e-12 * trace;
        for _ in 0..12 {
            if let Some(s) = cholesky_solve(&h, &neg_g, n) {
                step = Some(s);
                break;
            }
            for a in 0..n {
                h[a * n + a] += jitter;
            }
            jitter *= 100.0;
        }
        let step = match step {
            Some(s) => s,
            None => neg_g.clone(),
        };

        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        // near the optimum the decrease drops below the rounding of f
        let slack = 1e-14 * f.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + t * s).collect();
            let ft = objective_only(x, y, l2, &trial);
            if ft <= f + 1e-4 * t * slope + slack {
                params = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let (nf, ng) = logistic_objective(x, y, l2, &params);
        f = nf;
        g = ng;
    }
    if !converged && g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.tol {
        converged = true;
    }
    Ok(LogisticModel {
        weights: params[..d].to_vec(),
        intercept: params[d],
        l2_strength: l2,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelError;

    #[test]
    fn symmetric_data_zero_intercept() {
        let x = Matrix::column_vector(&[-1.0, 1.0]);
        let m = fit_logistic(&x, &[false, true], &LogisticOptions { l2_strength: 1.0, ..Default::default() }).unwrap();
        assert!(m.converged);
        assert!(m.intercept.abs() < 1e-10);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogisticModel::zero(3);
        let p = m.predict_proba(&Matrix::from_rows(&[[1.0, -4.0, 9.0]])).unwrap();
        assert_eq!(p, vec![0.5]);
        assert!(matches!(
            m.predict_proba(&Matrix::from_rows(&[[1.0]])),
            Err(ModelError::WidthMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::column_vector(&[1.0, 2.0]);
        assert_eq!(
            fit_logistic(&x, &[true, true], &LogisticOptions::default()),
            Err(ModelError::SingleClass)
        );
    }

    #[test]
    fn unpenalised_separable_flags_nonconvergence() {
        let x = Matrix::column_vector(&[-2.0, -1.0, 1.0, 2.0]);
        let y = [false, false, true, true];
        let m = fit_logistic(&x, &y, &LogisticOptions { l2_strength: 0.0, tol: 1e-12, max_iter: 8 }).unwrap();
        assert!(!m.converged);
        assert!(m.weights[0] > 5.0);
        let p = m.predict_proba(&x).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

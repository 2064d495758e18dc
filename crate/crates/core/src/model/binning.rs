use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::Matrix;

/// Per-feature ascending split thresholds. A value `v` falls in bin `b` when
/// `thresholds[b - 1] < v <= thresholds[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub thresholds: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, feature: usize, value: f64) -> u8 {
        self.thresholds[feature].partition_point(|&t| t < value) as u8
    }

    pub fn bin_row(&self, row: &[f64]) -> Vec<u8> {
        row.iter().enumerate().map(|(f, &v)| self.bin(f, v)).collect()
    }

    /// Column-major binned copy of `x`.
    pub fn transform(&self, x: &Matrix) -> Vec<Vec<u8>> {
        (0..x.ncols())
            .map(|f| (0..x.nrows()).map(|i| self.bin(f, x.get(i, f))).collect())
            .collect()
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// Thresholds at empirical quantiles. Columns with at most `max_bins`
/// distinct values get one bin per distinct value.
pub fn quantile_bin(x: &Matrix, max_bins: usize) -> Result<BinMapper> {
    if !(2..=255).contains(&max_bins) {
        return Err(ModelError::DegenerateParams(format!("max_bins {max_bins}")));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(ModelError::EmptyMatrix);
    }
    let thresholds = (0..x.ncols())
        .map(|f| {
            let mut col = x.column(f);
            col.sort_by(f64::total_cmp);
            let mut distinct = col.clone();
            distinct.dedup();
            if distinct.len() <= max_bins {
                return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
            }
            let n = col.len();
            let mut t: Vec<f64> = Vec::with_capacity(max_bins - 1);
            for q in 1..max_bins {
                let idx = q * n / max_bins;
                if idx == 0 || idx >= n {
                    continue;
                }
                let cut = midpoint(col[idx - 1], col[idx]);
                if t.last().is_none_or(|&last| cut > last) && cut < col[n - 1] {
                    t.push(cut);
                }
            }
            t
        })
        .collect();
    Ok(BinMapper { thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values_get_own_bins() {
        let x = Matrix::column_vector(&[1.0, 2.0, 3.0, 4.0, 2.0]);
        let m = quantile_bin(&x, 255).unwrap();
        assert_eq!(m.n_bins(0), 4);
        assert_eq!(m.thresholds[0], vec![1.5, 2.5, 3.5]);
        assert_eq!(m.bin(0, 1.0), 0);
        assert_eq!(m.bin(0, 4.0), 3);
    }

    #[test]
    fn constant_column_single_bin() {
        let m = quantile_bin(&Matrix::column_vector(&[7.0; 5]), 255).unwrap();
        assert_eq!(m.n_bins(0), 1);
        assert!(m.thresholds[0].is_empty());
    }

    #[test]
    fn bad_params() {
        assert!(matches!(
            quantile_bin(&Matrix::column_vector(&[1.0]), 1),
            Err(ModelError::DegenerateParams(_))
        ));
        assert_eq!(quantile_bin(&Matrix::zeros(0, 1), 8), Err(ModelError::EmptyMatrix));
    }
}

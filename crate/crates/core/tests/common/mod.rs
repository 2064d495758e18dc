#![allow(dead_code)]

pub mod fixtures;
pub mod oracles;

use hyposcreen_core::config::PipelineConfig;

/// A small, fast pipeline configuration for end-to-end tests.
pub fn quick_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.booster_grid.base.n_trees = 15;
    c.booster_grid.learning_rate = vec![0.1, 0.3];
    c.booster_grid.max_leaves = vec![4];
    c.booster_grid.min_samples_leaf = vec![5];
    c.ensemble.m = 2;
    c.ensemble.inner_folds = 2;
    c.selection.n_features = 3;
    c.smote.k_neighbors = 3;
    c.cv_folds = 3;
    c
}

//! Synthetic labelled cohorts: class-conditional unit-variance Gaussians
//! with demographics and optional planted subgroup effects.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ingest::{Cohort, Label, Sex};
use crate::table::{Demographics, FeatureTable};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("bad shape: {0}")]
    BadShape(String),
}

/// Scales the class separation for positive members of one subgroup, which
/// makes them harder (scale < 1) or easier (scale > 1) to detect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    /// `sex`, `ethnicity` or `cohort`.
    pub column: String,
    pub group: String,
    pub delta_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_positive: usize,
    pub n_negative: usize,
    pub delta: f64,
    pub dims: usize,
    pub informative_dims: usize,
    pub seed: u64,
    pub planted: Option<PlantedEffect>,
}

impl SynthSpec {
    pub fn balanced(n_per_class: usize, delta: f64, dims: usize, informative_dims: usize, seed: u64) -> Self {
        Self {
            n_positive: n_per_class,
            n_negative: n_per_class,
            delta,
            dims,
            informative_dims,
            seed,
            planted: None,
        }
    }
}

pub fn feature_name(j: usize) -> String {
    format!("f{j:02}")
}

fn random_demographics<R: Rng>(rng: &mut R, positive: bool) -> Demographics {
    let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
    let age = (rng.random_range(40.0..85.0f64) * 10.0).round() / 10.0;
    let ethnicity = if rng.random_bool(0.8) { "white" } else { "non_white" };
    let cohort = Cohort::ALL[rng.random_range(0..Cohort::ALL.len())];
    let duration = (rng.random_range(0.0..20.0f64) * 10.0).round() / 10.0;
    Demographics {
        cohort: Some(cohort),
        sex: Some(sex),
        age: Some(age),
        ethnicity: Some(ethnicity.to_string()),
        disease_duration: positive.then_some(duration),
    }
}

/// Positives come first, then negatives. Positive means are shifted by
/// `delta` along the first `informative_dims` coordinates.
pub fn generate(spec: &SynthSpec) -> Result<FeatureTable, SynthError> {
    if spec.informative_dims == 0 || spec.dims < spec.informative_dims {
        return Err(SynthError::BadShape(format!(
            "need dims >= informative_dims >= 1, got {} and {}",
            spec.dims, spec.informative_dims
        )));
    }
    if spec.n_positive == 0 || spec.n_negative == 0 {
        return Err(SynthError::BadShape("both classes need at least one row".into()));
    }
    if !spec.delta.is_finite() {
        return Err(SynthError::BadShape(format!("delta {}", spec.delta)));
    }
    let n = spec.n_positive + spec.n_negative;
    let mut rng = crate::rng::from_seed(spec.seed);
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut demographics = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * spec.dims);
    for i in 0..n {
        let positive = i < spec.n_positive;
        let demo = random_demographics(&mut rng, positive);
        let mut shift = if positive { spec.delta } else { 0.0 };
        if let (true, Some(p)) = (positive, &spec.planted) {
            if demo.categorical(&p.column).flatten().as_deref() == Some(p.group.as_str()) {
                shift *= p.delta_scale;
            }
        }
        for j in 0..spec.dims {
            let z: f64 = rng.sample(StandardNormal);
            data.push(z + if j < spec.informative_dims { shift } else { 0.0 });
        }
        ids.push(format!("p{i:05}"));
        labels.push(Label::from_positive(positive));
        demographics.push(demo);
    }
    Ok(FeatureTable {
        participant_ids: ids,
        labels,
        demographics,
        feature_names: (0..spec.dims).map(feature_name).collect(),
        features: Matrix::from_vec(n, spec.dims, data),
    })
}

pub fn generate_synthetic_dataset(
    n_per_class: usize,
    delta: f64,
    dims: usize,
    informative_dims: usize,
    seed: u64,
) -> Result<FeatureTable, SynthError> {
    generate(&SynthSpec::balanced(n_per_class, delta, dims, informative_dims, seed))
}

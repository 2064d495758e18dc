//! Engineered features: activation-gated AU statistics and iris-normalised
//! geometric attributes, each summarised by mean, variance and entropy.
//!
//! Variances use the population divisor. Entropy is the natural-log Shannon
//! entropy of an equal-width histogram; AU intensities are binned on the
//! fixed OpenFace range `[0, 5]`, geometric attributes on their observed
//! per-recording range.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{au_name, Expression, RecordingSeries, AU_INTENSITY_MAX, LANDMARK_POINTS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("empty series")]
    EmptySeries,
    #[error("entropy needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("degenerate entropy domain [{lo}, {hi}]")]
    DegenerateDomain { lo: f64, hi: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("inter-iris distance {0:e} is degenerate")]
    DegenerateIrisDistance(f64),
    #[error("landmark index {index} out of range for {points} points")]
    IndexOutOfRange { index: usize, points: usize },
    #[error("expression {expression} is missing {quantity}")]
    IncompleteExpression { expression: Expression, quantity: String },
    #[error("recording has no landmark frames")]
    MissingLandmarks,
    #[error("invalid landmark index map: {0}")]
    BadIndexMap(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EntropyDomain {
    Fixed { lo: f64, hi: f64 },
    Observed,
}

/// Shannon entropy (nats) of the equal-width histogram of `values`.
pub fn shannon_entropy(values: &[f64], domain: EntropyDomain, bins: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    if bins < 2 {
        return Err(FeatureError::TooFewBins(bins));
    }
    let (lo, hi) = match domain {
        EntropyDomain::Fixed { lo, hi } => {
            if !(lo < hi) {
                return Err(FeatureError::DegenerateDomain { lo, hi });
            }
            (lo, hi)
        }
        EntropyDomain::Observed => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(lo < hi) {
                return Ok(0.0);
            }
            (lo, hi)
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v - lo) / width).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(bins - 1) };
        counts[b] += 1;
    }
    let n = values.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTriple {
    pub mean: f64,
    pub variance: f64,
    pub entropy: f64,
}

impl StatTriple {
    pub const ZERO: StatTriple = StatTriple {
        mean: 0.0,
        variance: 0.0,
        entropy: 0.0,
    };

    fn values(&self) -> [f64; 3] {
        [self.mean, self.variance, self.entropy]
    }
}

pub const STAT_NAMES: [&str; 3] = ["mean", "variance", "entropy"];

fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Binning used by the entropy statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySettings {
    pub bins: usize,
    pub au_domain: EntropyDomain,
    pub landmark_domain: EntropyDomain,
}

impl Default for EntropySettings {
    fn default() -> Self {
        Self {
            bins: 10,
            au_domain: EntropyDomain::Fixed {
                lo: 0.0,
                hi: AU_INTENSITY_MAX,
            },
            landmark_domain: EntropyDomain::Observed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuStatistics {
    pub stats: StatTriple,
    /// No frame had the AU active; `stats` holds the zero sentinel.
    pub missing: bool,
}

/// Mean, population variance and entropy of the intensity over frames where
/// the AU is active.
pub fn au_statistics(
    intensity: &[f64],
    activation: &[u8],
    settings: &EntropySettings,
) -> Result<AuStatistics> {
    if intensity.len() != activation.len() {
        return Err(FeatureError::LengthMismatch(intensity.len(), activation.len()));
    }
    if intensity.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let active: Vec<f64> = intensity
        .iter()
        .zip(activation)
        .filter(|(_, &a)| a == 1)
        .map(|(&v, _)| v)
        .collect();
    if active.is_empty() {
        return Ok(AuStatistics {
            stats: StatTriple::ZERO,
            missing: true,
        });
    }
    let (mean, variance) = mean_variance(&active);
    let entropy = shannon_entropy(&active, settings.au_domain, settings.bins)?;
    Ok(AuStatistics {
        stats: StatTriple {
            mean,
            variance,
            entropy,
        },
        missing: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    RightEyeOpen,
    LeftEyeOpen,
    RightBrowRaised,
    LeftBrowRaised,
    MouthOpen,
    MouthWidth,
    JawOpen,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::RightEyeOpen,
        Attribute::LeftEyeOpen,
        Attribute::RightBrowRaised,
        Attribute::LeftBrowRaised,
        Attribute::MouthOpen,
        Attribute::MouthWidth,
        Attribute::JawOpen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::RightEyeOpen => "right_eye_open",
            Attribute::LeftEyeOpen => "left_eye_open",
            Attribute::RightBrowRaised => "right_brow_raised",
            Attribute::LeftBrowRaised => "left_brow_raised",
            Attribute::MouthOpen => "mouth_open",
            Attribute::MouthWidth => "mouth_width",
            Attribute::JawOpen => "jaw_open",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Endpoints of a distance: either two single points or two point groups
/// whose centroids are used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoints {
    Pair([usize; 2]),
    Groups { from: Vec<usize>, to: Vec<usize> },
}

impl Endpoints {
    fn groups(&self) -> (Vec<usize>, Vec<usize>) {
        match self {
            Endpoints::Pair([a, b]) => (vec![*a], vec![*b]),
            Endpoints::Groups { from, to } => (from.clone(), to.clone()),
        }
    }
}

/// Which face-mesh points define each attribute and the two iris centres.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkIndexMap {
    pub right_iris: Vec<usize>,
    pub left_iris: Vec<usize>,
    pub right_eye_open: Endpoints,
    pub left_eye_open: Endpoints,
    pub right_brow_raised: Endpoints,
    pub left_brow_raised: Endpoints,
    pub mouth_open: Endpoints,
    pub mouth_width: Endpoints,
    pub jaw_open: Endpoints,
}

const DEFAULT_INDEX_MAP: &str = include_str!("../data/landmark_index_map.json");

impl Default for LandmarkIndexMap {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_INDEX_MAP).expect("bundled landmark index map parses")
    }
}

impl LandmarkIndexMap {
    pub fn from_json(text: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(text).map_err(|e| FeatureError::BadIndexMap(e.to_string()))?;
        map.check(LANDMARK_POINTS)?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatureError::BadIndexMap(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn endpoints(&self, a: Attribute) -> &Endpoints {
        match a {
            Attribute::RightEyeOpen => &self.right_eye_open,
            Attribute::LeftEyeOpen => &self.left_eye_open,
            Attribute::RightBrowRaised => &self.right_brow_raised,
            Attribute::LeftBrowRaised => &self.left_brow_raised,
            Attribute::MouthOpen => &self.mouth_open,
            Attribute::MouthWidth => &self.mouth_width,
            Attribute::JawOpen => &self.jaw_open,
        }
    }

    fn all_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.right_iris.iter().chain(&self.left_iris).copied().collect();
        for a in Attribute::ALL {
            let (f, t) = self.endpoints(a).groups();
            v.extend(f);
            v.extend(t);
        }
        v
    }

    /// Every index must address a point and every group must be nonempty.
    pub fn check(&self, points: usize) -> Result<()> {
        if self.right_iris.is_empty() || self.left_iris.is_empty() {
            return Err(FeatureError::BadIndexMap("empty iris group".into()));
        }
        for a in Attribute::ALL {
            let (f, t) = self.endpoints(a).groups();
            if f.is_empty() || t.is_empty() {
                return Err(FeatureError::BadIndexMap(format!("empty group for {a}")));
            }
        }
        if let Some(&index) = self.all_indices().iter().find(|&&i| i >= points) {
            return Err(FeatureError::IndexOutOfRange { index, points });
        }
        Ok(())
    }
}

fn centroid_xy(frame: &[[f64; 3]], idx: &[usize]) -> [f64; 2] {
    let n = idx.len() as f64;
    let (sx, sy) = idx
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &i| (sx + frame[i][0], sy + frame[i][1]));
    [sx / n, sy / n]
}

fn dist_xy(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The seven attributes of one frame, in [`Attribute::ALL`] order, each a
/// planar distance divided by the inter-iris distance.
pub fn geometric_attributes(frame: &[[f64; 3]], map: &LandmarkIndexMap) -> Result<[f64; 7]> {
    map.check(frame.len())?;
    let iris = dist_xy(centroid_xy(frame, &map.right_iris), centroid_xy(frame, &map.left_iris));
    if !(iris >= 1e-9) {
        return Err(FeatureError::DegenerateIrisDistance(iris));
    }
    let mut out = [0.0; 7];
    for (slot, a) in out.iter_mut().zip(Attribute::ALL) {
        let (from, to) = map.endpoints(a).groups();
        *slot = dist_xy(centroid_xy(frame, &from), centroid_xy(frame, &to)) / iris;
    }
    Ok(out)
}

/// Mean, population variance, and entropy over all frames of one attribute.
pub fn aggregate_attribute_series(values: &[f64], settings: &EntropySettings) -> Result<StatTriple> {
    if values.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let (mean, variance) = mean_variance(values);
    let entropy = shannon_entropy(values, settings.landmark_domain, settings.bins)?;
    Ok(StatTriple {
        mean,
        variance,
        entropy,
    })
}

/// Summary statistics for one expression recording.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpressionStats {
    pub action_units: BTreeMap<u8, AuStatistics>,
    pub attributes: BTreeMap<Attribute, StatTriple>,
}

pub fn featurize_recording(
    series: &RecordingSeries,
    map: &LandmarkIndexMap,
    settings: &EntropySettings,
) -> Result<ExpressionStats> {
    let mut out = ExpressionStats::default();
    for id in series.expression.action_units() {
        let name = au_name(id);
        let quantity = || FeatureError::IncompleteExpression {
            expression: series.expression,
            quantity: name.clone(),
        };
        let intensity = series.au_intensity.get(&name).ok_or_else(quantity)?;
        let activation = series.au_activation.get(&name).ok_or_else(quantity)?;
        out.action_units
            .insert(id, au_statistics(intensity, activation, settings)?);
    }
    let frames = series.landmarks.as_ref().ok_or(FeatureError::MissingLandmarks)?;
    if frames.is_empty() {
        return Err(FeatureError::MissingLandmarks);
    }
    let mut columns: [Vec<f64>; 7] = Default::default();
    for frame in frames {
        let attrs = geometric_attributes(frame, map)?;
        for (col, v) in columns.iter_mut().zip(attrs) {
            col.push(v);
        }
    }
    for (a, col) in Attribute::ALL.into_iter().zip(columns.iter()) {
        out.attributes.insert(a, aggregate_attribute_series(col, settings)?);
    }
    Ok(out)
}

/// Canonical ordered feature names for an expression subset.
pub fn feature_names(mask: &[Expression]) -> Vec<String> {
    let mut names = Vec::with_capacity(42 * mask.len());
    for e in canonical_mask(mask) {
        for id in e.action_units() {
            for s in STAT_NAMES {
                names.push(format!("{e}_au_{}_{s}", au_name(id)));
            }
        }
        for a in Attribute::ALL {
            for s in STAT_NAMES {
                names.push(format!("{e}_lm_{a}_{s}"));
            }
        }
    }
    names
}

/// Deduplicated mask in smile, disgust, surprise order.
pub fn canonical_mask(mask: &[Expression]) -> Vec<Expression> {
    Expression::ALL.into_iter().filter(|e| mask.contains(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub participant_id: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub expression_mask: Vec<Expression>,
    /// `{expression}_au_{AU}` quantities that used the zero sentinel.
    pub missing: Vec<String>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

pub fn assemble_feature_vector(
    participant_id: &str,
    stats: &BTreeMap<Expression, ExpressionStats>,
    mask: &[Expression],
) -> Result<FeatureVector> {
    let mask = canonical_mask(mask);
    let mut values = Vec::with_capacity(42 * mask.len());
    let mut missing = Vec::new();
    for &e in &mask {
        let incomplete = |quantity: String| FeatureError::IncompleteExpression {
            expression: e,
            quantity,
        };
        let s = stats.get(&e).ok_or_else(|| incomplete("all statistics".into()))?;
        for id in e.action_units() {
            let au = s
                .action_units
                .get(&id)
                .ok_or_else(|| incomplete(au_name(id)))?;
            if au.missing {
                missing.push(format!("{e}_au_{}", au_name(id)));
            }
            values.extend(au.stats.values());
        }
        for a in Attribute::ALL {
            let t = s
                .attributes
                .get(&a)
                .ok_or_else(|| incomplete(a.as_str().to_string()))?;
            values.extend(t.values());
        }
    }
    let names = feature_names(&mask);
    debug_assert_eq!(names.len(), values.len());
    Ok(FeatureVector {
        participant_id: participant_id.to_string(),
        names,
        values,
        expression_mask: mask,
        missing,
    })
}

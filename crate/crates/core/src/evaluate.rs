//! Classification metrics, ROC analysis, the cross-validation driver and
//! seed-bootstrap percentile intervals.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::pipeline::{fit_pipeline, AuditEvent, AuditLog};
use crate::preprocess::stratified_kfold;
use crate::rng::{derive_seed, streams};
use crate::table::FeatureTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("need at least 2 seeds, got {0}")]
    TooFewSeeds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&self, o: &ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }

    /// `None` marks a zero denominator.
    pub fn metrics(&self) -> ThresholdMetrics {
        let ratio = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
        ThresholdMetrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            sensitivity: ratio(self.tp, self.tp + self.fn_),
            specificity: ratio(self.tn, self.tn + self.fp),
            ppv: ratio(self.tp, self.tp + self.fp),
            npv: ratio(self.tn, self.tn + self.fn_),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Predicts positive iff `score >= threshold`.
pub fn confusion_metrics(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<(ConfusionCounts, ThresholdMetrics), EvalError> {
    check_lengths(scores, labels)?;
    let mut c = ConfusionCounts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok((c, c.metrics()))
}

/// One ROC operating point. `threshold` is `None` for the `(0, 0)` start,
/// which lies above every score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

/// Sweeps thresholds over the distinct scores (descending) and integrates
/// the curve with trapezoids; tied scores collapse to one operating point.
pub fn roc_auroc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area2 = 0u128; // twice the area in units of 1 / (pos * neg)
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += ((fp - fp0) * (tp + tp0)) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: Some(s),
        });
    }
    let auroc = area2 as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auroc })
}

pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    roc_auroc(scores, labels).map(|r| r.auroc)
}

/// Threshold metrics, AUROC and ROC curve for one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub threshold: f64,
    pub auroc: f64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub confusion: ConfusionCounts,
    pub roc_points: Vec<RocPoint>,
}

impl MetricReport {
    pub fn compute(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self, EvalError> {
        let (confusion, m) = confusion_metrics(scores, labels, threshold)?;
        let roc = roc_auroc(scores, labels)?;
        Ok(Self {
            n: scores.len(),
            threshold,
            auroc: roc.auroc,
            accuracy: m.accuracy,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
            ppv: m.ppv,
            npv: m.npv,
            confusion,
            roc_points: roc.points,
        })
    }

    /// Defined metrics by name.
    pub fn scalar_metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("auroc".to_string(), self.auroc);
        for (k, v) in [
            ("accuracy", self.accuracy),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("ppv", self.ppv),
            ("npv", self.npv),
        ] {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        }
        m
    }
}

/// Percentile by linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// Half the interval width, for `mean ± half_width` reporting.
    pub half_width: f64,
    pub values: Vec<f64>,
}

impl Interval {
    pub fn from_values(values: Vec<f64>, level: f64) -> Self {
        let alpha = (1.0 - level) / 2.0;
        let lo = percentile(&values, alpha);
        let hi = percentile(&values, 1.0 - alpha);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lo,
            hi,
            half_width: (hi - lo) / 2.0,
            values,
        }
    }
}

/// Runs `run` once per seed and reports percentile intervals per metric.
/// Seeds are processed in parallel; values are kept in seed order.
pub fn bootstrap_ci<F, E>(
    seeds: &[u64],
    level: f64,
    run: F,
) -> Result<BTreeMap<String, Interval>, BootstrapError<E>>
where
    F: Fn(u64) -> Result<BTreeMap<String, f64>, E> + Sync,
    E: Send,
{
    if seeds.len() < 2 {
        return Err(BootstrapError::Eval(EvalError::TooFewSeeds(seeds.len())));
    }
    let results: Vec<BTreeMap<String, f64>> = seeds
        .par_iter()
        .map(|&s| run(s))
        .collect::<Result<_, E>>()
        .map_err(BootstrapError::Run)?;
    Ok(intervals_from_runs(&results, level))
}

/// Percentile interval per metric over per-run metric maps.
pub fn intervals_from_runs(runs: &[BTreeMap<String, f64>], level: f64) -> BTreeMap<String, Interval> {
    let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (k, v) in r {
            per_metric.entry(k.clone()).or_default().push(*v);
        }
    }
    per_metric
        .into_iter()
        .map(|(k, v)| (k, Interval::from_values(v, level)))
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError<E> {
    #[error(transparent)]
    Eval(EvalError),
    #[error("bootstrap run failed")]
    Run(E),
}

/// Outcome of one k-fold cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<MetricReport>,
    pub pooled: MetricReport,
    /// Per-fold mean of each defined metric.
    pub fold_mean: BTreeMap<String, f64>,
    /// Out-of-fold probability for every row, in table order.
    pub oof_scores: Vec<f64>,
    pub fold_of_row: Vec<usize>,
    #[serde(skip)]
    pub audit: AuditLog,
}

/// k-fold CV of the whole pipeline. Each fold fits scaler, selector,
/// oversampling and ensemble on its training rows only and predicts the
/// untouched held-out rows; pooled metrics use the concatenated out-of-fold
/// predictions.
pub fn run_cross_validation(
    table: &FeatureTable,
    config: &PipelineConfig,
    k: usize,
    seed: u64,
) -> crate::Result<CvOutcome> {
    let labels = table.positives();
    let plan = stratified_kfold(&labels, k, derive_seed(seed, streams::FOLDS))?;
    let fold_results: Vec<crate::Result<(Vec<usize>, Vec<f64>, AuditLog)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train = plan.train_indices(f);
            let test = plan.test_indices(f);
            let context = format!("seed={seed}/fold={f}");
            let mut audit = AuditLog::default();
            let fitted = fit_pipeline(
                table,
                &train,
                config,
                derive_seed(seed, streams::OUTER_FOLD + f as u64),
                &mut audit,
                &context,
            )?;
            let scores = fitted.predict_table(&table.select_rows(&test))?;
            audit.push(AuditEvent::new(
                &context,
                "evaluate",
                test.iter().map(|&i| table.participant_ids[i].clone()).collect(),
            ));
            Ok((test, scores, audit))
        })
        .collect();

    let mut oof = vec![f64::NAN; table.len()];
    let mut folds = Vec::with_capacity(k);
    let mut audit = AuditLog::default();
    for r in fold_results {
        let (test, scores, log) = r?;
        let y: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        folds.push(MetricReport::compute(&scores, &y, config.threshold)?);
        for (&i, &s) in test.iter().zip(&scores) {
            oof[i] = s;
        }
        audit.extend(log);
    }
    let pooled = MetricReport::compute(&oof, &labels, config.threshold)?;
    let mut fold_mean: BTreeMap<String, f64> = BTreeMap::new();
    let mut fold_n: BTreeMap<String, usize> = BTreeMap::new();
    for f in &folds {
        for (name, v) in f.scalar_metrics() {
            *fold_mean.entry(name.clone()).or_default() += v;
            *fold_n.entry(name).or_default() += 1;
        }
    }
    for (name, v) in fold_mean.iter_mut() {
        *v /= fold_n[name] as f64;
    }
    Ok(CvOutcome {
        seed,
        k,
        folds,
        pooled,
        fold_mean,
        oof_scores: oof,
        fold_of_row: plan.assignments,
        audit,
    })
}

/// Cross-validation repeated over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedCv {
    pub runs: Vec<CvOutcome>,
    /// Percentile intervals of the pooled metrics across seeds; absent with
    /// fewer than two seeds.
    pub intervals: Option<BTreeMap<String, Interval>>,
}

pub fn run_repeated_cv(
    table: &FeatureTable,
    config: &PipelineConfig,
    k: usize,
    seeds: &[u64],
) -> crate::Result<RepeatedCv> {
    if seeds.is_empty() {
        return Err(EvalError::TooFewSeeds(0).into());
    }
    let runs = seeds
        .par_iter()
        .map(|&s| run_cross_validation(table, config, k, s))
        .collect::<crate::Result<Vec<_>>>()?;
    let intervals = (seeds.len() >= 2).then(|| {
        let metrics: Vec<BTreeMap<String, f64>> = runs.iter().map(|r| r.pooled.scalar_metrics()).collect();
        intervals_from_runs(&metrics, config.ci_level)
    });
    Ok(RepeatedCv { runs, intervals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_confusion() {
        // tp=3, fn=1, tn=5, fp=1
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.2, 0.3, 0.4, 0.6];
        let labels = [true, true, true, true, false, false, false, false, false, false];
        let (c, m) = confusion_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 3, fp: 1, tn: 5, fn_: 1 });
        assert_eq!(m.accuracy, Some(0.8));
        assert_eq!(m.sensitivity, Some(0.75));
        assert!((m.specificity.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.ppv, Some(0.75));
        assert!((m.npv.unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_ppv_and_perfect() {
        let (_, m) = confusion_metrics(&[0.1, 0.2], &[true, false], 0.5).unwrap();
        assert_eq!(m.ppv, None);
        assert_eq!(m.npv, Some(0.5));
        let (_, m) = confusion_metrics(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        for v in [m.accuracy, m.sensitivity, m.specificity, m.ppv, m.npv] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!(confusion_metrics(&[], &[], 0.5), Err(EvalError::Empty));
        assert_eq!(confusion_metrics(&[0.1], &[], 0.5), Err(EvalError::LengthMismatch(1, 0)));
    }

    #[test]
    fn auroc_examples() {
        let r = roc_auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(r.auroc, 0.75);
        assert_eq!(r.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(r.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        let r = roc_auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(r.auroc, 0.5);
        assert_eq!(r.points.len(), 2);
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass));
    }

    #[test]
    fn percentile_linear_interpolation() {
        let v: Vec<f64> = (1..=40).map(f64::from).collect();
        assert!((percentile(&v, 0.025) - 1.975).abs() < 1e-12);
        assert!((percentile(&v, 0.975) - 39.025).abs() < 1e-12);
        let iv = Interval::from_values(vec![0.7; 40], 0.95);
        assert_eq!((iv.lo, iv.hi, iv.half_width), (0.7, 0.7, 0.0));
    }

    #[test]
    fn bootstrap_over_injected_values() {
        let seeds: Vec<u64> = (1..=40).collect();
        let ci = bootstrap_ci(&seeds, 0.95, |s| {
            Ok::<_, ()>(BTreeMap::from([("m".to_string(), s as f64)]))
        })
        .unwrap();
        let m = &ci["m"];
        assert!((m.lo - 1.975).abs() < 1e-12);
        assert!((m.hi - 39.025).abs() < 1e-12);
        assert!(m.lo <= m.mean && m.mean <= m.hi);
        assert!(matches!(
            bootstrap_ci(&[1], 0.95, |_| Ok::<_, ()>(BTreeMap::new())),
            Err(BootstrapError::Eval(EvalError::TooFewSeeds(1)))
        ));
    }
}

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Serialize;

use hyposcreen_core::config::PipelineConfig;
use hyposcreen_core::ensemble::TrainedEnsemble;
use hyposcreen_core::evaluate::{run_repeated_cv, ConfusionCounts, Interval};
use hyposcreen_core::explain::{pca_project, silhouette_score, tree_shap_rows};
use hyposcreen_core::featurize::LandmarkIndexMap;
use hyposcreen_core::ingest::{parse_manifest, Expression};
use hyposcreen_core::pipeline::{active_features, featurize_manifest, fit_pipeline, AuditLog};
use hyposcreen_core::report::{
    parse_predictions_csv, predictions_csv, projection_csv, shap_csv, write_json, write_roc, write_text,
    PredictionRow,
};
use hyposcreen_core::stats::{build_bias_report, GroupingSpec};
use hyposcreen_core::synth::{generate, PlantedEffect, SynthSpec};
use hyposcreen_core::table::{Demographics, FeatureTable};

use crate::error::CliError;
use crate::{
    BiasArgs, CvArgs, ExplainArgs, FeaturizeArgs, PredictArgs, ProjectArgs, SimulateArgs, TrainArgs,
};

/// Largest |base + sum(phi) - f(x)| tolerated on an emitted attribution.
const LOCAL_ACCURACY_TOL: f64 = 1e-9;

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn read_table(path: &Path) -> Result<FeatureTable, CliError> {
    Ok(FeatureTable::read_csv(path)?)
}

pub fn featurize(a: FeaturizeArgs) -> Result<(), CliError> {
    let mut config = load_config(a.config.as_deref())?;
    if a.min_confidence.is_some() {
        config.min_confidence = a.min_confidence;
    }
    let map = match a.index_map.as_ref().or(config.landmark_index_map.as_ref()) {
        Some(p) => LandmarkIndexMap::load(p)?,
        None => LandmarkIndexMap::default(),
    };
    let manifest = parse_manifest(&a.manifest)?;
    let table = featurize_manifest(&manifest, &config, &map)?;
    table.write_csv(&a.out)?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let config = load_config(a.config.as_deref())?;
    let table = read_table(&a.features)?;
    let seed = a.seed.unwrap_or(config.seed);
    let mut audit = AuditLog::default();
    let rows: Vec<usize> = (0..table.len()).collect();
    let model = fit_pipeline(&table, &rows, &config, seed, &mut audit, "train")?;
    model.save(&a.out)?;
    if let Some(p) = &a.audit {
        audit.write_jsonl(p)?;
    }
    Ok(())
}

/// Pooled metrics of one seeded CV run, without the ROC curve.
#[derive(Debug, Serialize)]
struct RunSummary {
    seed: u64,
    auroc: f64,
    accuracy: Option<f64>,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
    ppv: Option<f64>,
    npv: Option<f64>,
    confusion: ConfusionCounts,
    fold_mean: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct CvReport {
    config_hash: String,
    config: PipelineConfig,
    n_rows: usize,
    n_positive: usize,
    folds: usize,
    seeds: Vec<u64>,
    mean_pooled_auroc: f64,
    runs: Vec<RunSummary>,
    intervals: Option<BTreeMap<String, Interval>>,
    leakage_violations: Vec<String>,
    meta_training_violations: Vec<String>,
}

pub fn cv(a: CvArgs) -> Result<(), CliError> {
    let config = load_config(a.config.as_deref())?;
    let table = read_table(&a.features)?;
    let folds = a.folds.unwrap_or(config.cv_folds);
    if folds < 2 {
        return Err(CliError::Usage(format!("--folds must be at least 2, got {folds}")));
    }
    let n_seeds = a.seeds.unwrap_or(config.n_seeds);
    if n_seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let first = a.seed.unwrap_or(config.seed);
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| first + i).collect();
    let result = run_repeated_cv(&table, &config, folds, &seeds)?;

    let mut audit = AuditLog::default();
    for r in &result.runs {
        audit.extend(r.audit.clone());
    }
    let runs: Vec<RunSummary> = result
        .runs
        .iter()
        .map(|r| RunSummary {
            seed: r.seed,
            auroc: r.pooled.auroc,
            accuracy: r.pooled.accuracy,
            sensitivity: r.pooled.sensitivity,
            specificity: r.pooled.specificity,
            ppv: r.pooled.ppv,
            npv: r.pooled.npv,
            confusion: r.pooled.confusion,
            fold_mean: r.fold_mean.clone(),
        })
        .collect();
    let report = CvReport {
        config_hash: config.hash(),
        config: config.clone(),
        n_rows: table.len(),
        n_positive: table.positives().iter().filter(|&&p| p).count(),
        folds,
        seeds,
        mean_pooled_auroc: runs.iter().map(|r| r.auroc).sum::<f64>() / runs.len() as f64,
        runs,
        intervals: result.intervals.clone(),
        leakage_violations: audit.leakage_violations(),
        meta_training_violations: audit.meta_training_violations(),
    };
    write_json(&a.out, &report)?;
    if let Some(csv) = &a.roc_csv {
        let first_run = &result.runs[0].pooled;
        write_roc(csv, a.roc_svg.as_deref(), &first_run.roc_points, first_run.auroc)?;
    } else if a.roc_svg.is_some() {
        return Err(CliError::Usage("--roc-svg requires --roc-csv".into()));
    }
    if let Some(p) = &a.audit {
        audit.write_jsonl(p)?;
    }
    if let Some(p) = &a.refit {
        let rows: Vec<usize> = (0..table.len()).collect();
        let mut refit_audit = AuditLog::default();
        let model = fit_pipeline(&table, &rows, &config, first, &mut refit_audit, "train")?;
        model.save(p)?;
    }
    if !report.leakage_violations.is_empty() || !report.meta_training_violations.is_empty() {
        return Err(CliError::Internal(format!(
            "audit found {} leakage and {} meta-training violations",
            report.leakage_violations.len(),
            report.meta_training_violations.len()
        )));
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!("--threshold must lie in [0, 1], got {}", a.threshold)));
    }
    let model = TrainedEnsemble::load(&a.model)?;
    let table = read_table(&a.features)?;
    let probs = model.predict_table(&table)?;
    let rows: Vec<PredictionRow> = table
        .participant_ids
        .iter()
        .zip(&table.labels)
        .zip(&probs)
        .map(|((id, label), &p)| PredictionRow {
            participant_id: id.clone(),
            label: label.as_str().to_string(),
            probability: p,
            predicted: u8::from(p >= a.threshold),
        })
        .collect();
    write_text(&a.out, &predictions_csv(&rows))?;
    Ok(())
}

pub fn bias(a: BiasArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.preds)?;
    let preds = parse_predictions_csv(&text).map_err(|e| CliError::data(format!("{}: {e}", a.preds.display())))?;
    let table = read_table(&a.features)?;
    let index: HashMap<&str, usize> = table
        .participant_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let labels = table.positives();
    let mut predicted = Vec::with_capacity(preds.len());
    let mut truth = Vec::with_capacity(preds.len());
    let mut demographics = Vec::with_capacity(preds.len());
    for p in &preds {
        let Some(&i) = index.get(p.participant_id.as_str()) else {
            return Err(CliError::data(format!(
                "participant {} is in the predictions but not the feature table",
                p.participant_id
            )));
        };
        predicted.push(p.predicted == 1);
        truth.push(labels[i]);
        demographics.push(table.demographics[i].clone());
    }
    let spec = GroupingSpec {
        column: a.group.clone(),
        bin_edges: a.bins.clone(),
    };
    let report = build_bias_report(&predicted, &truth, &demographics, &spec)?;
    write_json(&a.out, &report)?;
    if let Some(p) = &a.summary_csv {
        write_text(p, &report.summary_csv())?;
    }
    Ok(())
}

pub fn explain(a: ExplainArgs) -> Result<(), CliError> {
    let model = TrainedEnsemble::load(&a.model)?;
    let table = read_table(&a.features)?;
    let cols = model.feature_columns(&table.feature_names)?;
    let raw = table.features.select_columns(&cols);
    let scaled = model.transform(&table.feature_names, &table.features)?;
    let best = &model.best_base_model().model;
    let attributions = tree_shap_rows(best, &scaled, &table.participant_ids)?;
    for at in &attributions {
        let err = at.local_accuracy_error();
        if !(err < LOCAL_ACCURACY_TOL) {
            return Err(CliError::Internal(format!(
                "SHAP local accuracy violated for row {}: error {err:e}",
                at.row_id
            )));
        }
    }
    write_text(&a.out, &shap_csv(&attributions, &model.selected_features, &raw))?;
    Ok(())
}

pub fn project(a: ProjectArgs) -> Result<(), CliError> {
    let table = read_table(&a.features)?;
    let config = load_config(a.config.as_deref())?;
    let names = active_features(&table, &config);
    let sub = table.select_features(&names)?;
    let projection = pca_project(&sub.features, 2)?;
    let labels: Vec<String> = sub.labels.iter().map(|l| l.as_str().to_string()).collect();
    write_text(&a.out, &projection_csv(&sub.participant_ids, &projection.coordinates, &labels))?;

    let y = sub.positives();
    let mut subsets: Vec<(String, Vec<String>)> = Vec::new();
    for e in Expression::ALL {
        let prefix = format!("{}_", e.as_str());
        let cols: Vec<String> = names.iter().filter(|n| n.starts_with(&prefix)).cloned().collect();
        if !cols.is_empty() {
            subsets.push((e.as_str().to_string(), cols));
        }
    }
    if subsets.len() != 1 {
        subsets.push(("all".to_string(), names.clone()));
    }
    for (label, cols) in subsets {
        let x = sub.select_features(&cols)?;
        let p = pca_project(&x.features, 2)?;
        let s = silhouette_score(&p.coordinates, &y)?;
        println!("silhouette {label} {s:.4}");
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    if !(a.pos_fraction > 0.0 && a.pos_fraction < 1.0) {
        return Err(CliError::Usage(format!("--pos-fraction must lie in (0, 1), got {}", a.pos_fraction)));
    }
    let n_positive = (a.n as f64 * a.pos_fraction).round() as usize;
    let planted = match (a.plant_column, a.plant_group, a.plant_scale) {
        (Some(column), Some(group), Some(delta_scale)) => {
            if Demographics::default().categorical(&column).is_none() {
                return Err(CliError::Usage(format!(
                    "--plant-column must be sex, ethnicity or cohort, got {column}"
                )));
            }
            Some(PlantedEffect {
            column,
            group,
                delta_scale,
            })
        }
        _ => None,
    };
    let spec = SynthSpec {
        n_positive,
        n_negative: a.n.saturating_sub(n_positive),
        delta: a.delta,
        dims: a.dims,
        informative_dims: a.informative,
        seed: a.seed,
        planted,
    };
    let table = generate(&spec)?;
    table.write_csv(&a.out)?;
    Ok(())
}

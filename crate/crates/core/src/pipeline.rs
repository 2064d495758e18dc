//! End-to-end training on a subset of table rows, with an audit log of which
//! rows every fitting and evaluation step touched.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::ensemble::{fit_stacking_ensemble, Provenance, TrainedEnsemble, ENSEMBLE_SCHEMA_VERSION};
use crate::featurize::{assemble_feature_vector, canonical_mask, feature_names, featurize_recording, LandmarkIndexMap};
use crate::ingest::{load_entry, Expression, Manifest, ManifestEntry};
use crate::registry::{builtin_scalers, builtin_selectors};
use crate::rng::{derive_seed, streams};
use crate::table::{Demographics, FeatureTable};
use crate::{Error, Matrix};

/// Rows touched by one step. `hash` is the hex SHA-256 of the row ids
/// joined by newlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub context: String,
    pub event: String,
    pub rows: Vec<String>,
    pub hash: String,
}

impl AuditEvent {
    pub fn new(context: &str, event: &str, rows: Vec<String>) -> Self {
        let hash = hex::encode(Sha256::digest(rows.join("\n").as_bytes()));
        Self {
            context: context.to_string(),
            event: event.to_string(),
            rows,
            hash,
        }
    }
}

/// Events whose rows must never reach an evaluation split.
pub const TRAINING_EVENTS: [&str; 5] = ["scaler_fit", "select", "meta_train", "refit", "inner_train"];

fn is_training_event(event: &str) -> bool {
    let base = event.split(':').next().unwrap_or(event);
    TRAINING_EVENTS.contains(&base)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    pub events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn push(&mut self, e: AuditEvent) {
        self.events.push(e);
    }

    pub fn extend(&mut self, other: AuditLog) {
        self.events.extend(other.events);
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("audit event serialises"));
            s.push('\n');
        }
        s
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())
    }

    /// Descriptions of evaluation rows that are synthetic or were used by a
    /// training step of the same context.
    pub fn leakage_violations(&self) -> Vec<String> {
        let mut by_context: BTreeMap<&str, Vec<&AuditEvent>> = BTreeMap::new();
        for e in &self.events {
            by_context.entry(&e.context).or_default().push(e);
        }
        let mut out = Vec::new();
        for (ctx, events) in by_context {
            let trained: BTreeSet<&str> = events
                .iter()
                .filter(|e| is_training_event(&e.event))
                .flat_map(|e| e.rows.iter().map(String::as_str))
                .collect();
            for e in events.iter().filter(|e| e.event == "evaluate") {
                for r in &e.rows {
                    if r.starts_with("syn:") {
                        out.push(format!("{ctx}: synthetic row {r} evaluated"));
                    } else if trained.contains(r.as_str()) {
                        out.push(format!("{ctx}: row {r} trained on and evaluated"));
                    }
                }
            }
        }
        out
    }

    /// Checks that each meta-training row was predicted out of fold by
    /// models that did not train on it.
    pub fn meta_training_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut by_context: BTreeMap<&str, Vec<&AuditEvent>> = BTreeMap::new();
        for e in &self.events {
            by_context.entry(&e.context).or_default().push(e);
        }
        for (ctx, events) in by_context {
            let mut oof_fold: BTreeMap<&str, &str> = BTreeMap::new();
            let mut trained: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for e in &events {
                if let Some(f) = e.event.strip_prefix("inner_oof:") {
                    for r in &e.rows {
                        oof_fold.insert(r, f);
                    }
                } else if let Some(f) = e.event.strip_prefix("inner_train:") {
                    trained.entry(f).or_default().extend(e.rows.iter().map(String::as_str));
                }
            }
            for e in events.iter().filter(|e| e.event == "meta_train") {
                for r in &e.rows {
                    match oof_fold.get(r.as_str()) {
                        None => out.push(format!("{ctx}: meta row {r} has no out-of-fold prediction")),
                        Some(f) if trained.get(f).is_some_and(|t| t.contains(r.as_str())) => {
                            out.push(format!("{ctx}: meta row {r} predicted by a model trained on it"))
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        out
    }
}

/// Loads and featurises every participant of a manifest into a table with
/// one row per participant, sorted by participant id.
pub fn featurize_manifest(
    manifest: &Manifest,
    config: &PipelineConfig,
    map: &LandmarkIndexMap,
) -> crate::Result<FeatureTable> {
    let mask = canonical_mask(&config.expressions);
    let mut by_participant: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.entries {
        if mask.contains(&e.expression) {
            by_participant.entry(&e.participant_id).or_default().push(e);
        }
    }
    if by_participant.is_empty() {
        return Err(Error::Data("manifest has no recordings for the configured expressions".into()));
    }
    let rows: Vec<crate::Result<(String, ManifestEntry, Vec<f64>)>> = by_participant
        .into_par_iter()
        .map(|(pid, entries)| {
            let mut stats = BTreeMap::<Expression, _>::new();
            for e in &entries {
                let series = load_entry(e, config.min_confidence)?;
                stats.insert(e.expression, featurize_recording(&series, map, &config.entropy)?);
            }
            let v = assemble_feature_vector(pid, &stats, &mask)?;
            Ok((pid.to_string(), entries[0].clone(), v.values))
        })
        .collect();
    let names = feature_names(&mask);
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut demographics = Vec::new();
    let mut data = Vec::new();
    for r in rows {
        let (pid, e, values) = r?;
        ids.push(pid);
        labels.push(e.label);
        demographics.push(Demographics {
            cohort: Some(e.cohort),
            sex: e.sex,
            age: e.age,
            ethnicity: e.ethnicity.clone(),
            disease_duration: e.disease_duration,
        });
        data.extend(values);
    }
    Ok(FeatureTable {
        features: Matrix::from_vec(ids.len(), names.len(), data),
        participant_ids: ids,
        labels,
        demographics,
        feature_names: names,
    })
}

/// Feature columns kept by the config's expression subset.
pub fn active_features(table: &FeatureTable, config: &PipelineConfig) -> Vec<String> {
    table
        .feature_names
        .iter()
        .filter(|n| config.keeps_feature(n))
        .cloned()
        .collect()
}

/// Fits scaler, selector, oversampling and the stacking ensemble on the
/// given rows of `table`, in that order, and nothing else.
pub fn fit_pipeline(
    table: &FeatureTable,
    rows: &[usize],
    config: &PipelineConfig,
    seed: u64,
    audit: &mut AuditLog,
    context: &str,
) -> crate::Result<TrainedEnsemble> {
    config.validate()?;
    let names = active_features(table, config);
    if names.is_empty() {
        return Err(Error::Data("no features left after the expression filter".into()));
    }
    let train = table.select_rows(rows).select_features(&names)?;
    let ids = train.participant_ids.clone();
    let y = train.positives();

    let scalers = builtin_scalers();
    let scaler = scalers.resolve("scaler", &config.scaler)?.fit(&names, &train.features)?;
    audit.push(AuditEvent::new(context, "scaler_fit", ids.clone()));
    let scaled = scaler.apply(&names, &train.features)?;

    let selectors = builtin_selectors();
    let selector = selectors.resolve("selector", &config.selection.method)?;
    let ranking = selector.rank(&scaled, &y, &names, &config.selection, derive_seed(seed, streams::SELECT))?;
    audit.push(AuditEvent::new(context, "select", ids.clone()));
    let selected = ranking.top(config.selection.n_features);
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let cols: Vec<usize> = selected.iter().map(|n| index[n.as_str()]).collect();
    let x = scaled.select_columns(&cols);

    let stacking = config.stacking();
    let stacked = fit_stacking_ensemble(
        &x,
        &y,
        &ids,
        &config.grid(),
        &stacking,
        derive_seed(seed, streams::ENSEMBLE),
        audit,
        context,
    )?;
    let scaler = scaler.subset(&selected).expect("selected features are scaled");
    let mut ensemble = TrainedEnsemble {
        schema_version: ENSEMBLE_SCHEMA_VERSION,
        scaler,
        selected_features: selected,
        m: stacked.base_models.len(),
        base_models: stacked.base_models,
        meta: stacked.meta,
        provenance: Provenance {
            selection_method: config.selection.method.clone(),
            n_features: config.selection.n_features,
            scaler: config.scaler.clone(),
            expressions: config.expressions.iter().map(|e| e.as_str().to_string()).collect(),
            smote_k: stacking.smote_k,
            inner_folds: stacking.inner_folds,
            seed,
            config_hash: config.hash(),
            training_rows: rows.len(),
        },
    };
    ensemble.canonicalize();
    Ok(ensemble)
}

impl TrainedEnsemble {
    pub fn predict_table(&self, table: &FeatureTable) -> crate::Result<Vec<f64>> {
        Ok(self.predict(&table.feature_names, &table.features)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_flags_leaks() {
        let mut log = AuditLog::default();
        log.push(AuditEvent::new("c", "scaler_fit", vec!["a".into(), "b".into()]));
        log.push(AuditEvent::new("c", "inner_train:0", vec!["a".into(), "syn:c:0".into()]));
        log.push(AuditEvent::new("c", "evaluate", vec!["d".into()]));
        assert!(log.leakage_violations().is_empty());
        log.push(AuditEvent::new("c", "evaluate", vec!["b".into(), "syn:x".into()]));
        assert_eq!(log.leakage_violations().len(), 2);
        log.push(AuditEvent::new("other", "evaluate", vec!["a".into()]));
        assert_eq!(log.leakage_violations().len(), 2);
    }

    #[test]
    fn event_hash_is_stable() {
        let a = AuditEvent::new("c", "e", vec!["x".into(), "y".into()]);
        let b = AuditEvent::new("c", "e", vec!["x".into(), "y".into()]);
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
    }
}

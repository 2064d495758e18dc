//! Labeled feature tables: one row per participant with demographics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{Cohort, Label, Sex};
use crate::Matrix;

pub const META_COLUMNS: [&str; 7] = [
    "participant_id",
    "label",
    "cohort",
    "sex",
    "age",
    "ethnicity",
    "disease_duration",
];

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("feature table is missing column {0:?}")]
    MissingColumn(String),
    #[error("bad value {value:?} in column {column:?} at row {row}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("feature table has no rows")]
    Empty,
    #[error("duplicate participant {0:?}")]
    DuplicateParticipant(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub cohort: Option<Cohort>,
    pub sex: Option<Sex>,
    pub age: Option<f64>,
    pub ethnicity: Option<String>,
    pub disease_duration: Option<f64>,
}

impl Demographics {
    /// Categorical value of `column`, if the column is categorical.
    pub fn categorical(&self, column: &str) -> Option<Option<String>> {
        match column {
            "cohort" => Some(self.cohort.map(|c| c.as_str().to_string())),
            "sex" => Some(self.sex.map(|s| s.as_str().to_string())),
            "ethnicity" => Some(self.ethnicity.clone()),
            _ => None,
        }
    }

    /// Numeric value of `column`, if the column is continuous.
    pub fn continuous(&self, column: &str) -> Option<Option<f64>> {
        match column {
            "age" => Some(self.age),
            "disease_duration" => Some(self.disease_duration),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub participant_ids: Vec<String>,
    pub labels: Vec<Label>,
    pub demographics: Vec<Demographics>,
    pub feature_names: Vec<String>,
    pub features: Matrix,
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.participant_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participant_ids.is_empty()
    }

    /// `true` for PD rows.
    pub fn positives(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_positive()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            participant_ids: idx.iter().map(|&i| self.participant_ids[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            demographics: idx.iter().map(|&i| self.demographics[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(idx),
        }
    }

    /// Keeps the named features, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<FeatureTable, TableError> {
        let idx = names
            .iter()
            .map(|n| self.feature_index(n).ok_or_else(|| TableError::UnknownFeature(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureTable {
            feature_names: names.to_vec(),
            features: self.features.select_columns(&idx),
            ..self.clone()
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = META_COLUMNS
            .iter()
            .copied()
            .chain(self.feature_names.iter().map(String::as_str))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.len() {
            let d = &self.demographics[i];
            let mut rec = vec![
                self.participant_ids[i].clone(),
                self.labels[i].as_str().to_string(),
                d.cohort.map(|c| c.as_str().to_string()).unwrap_or_default(),
                d.sex.map(|s| s.as_str().to_string()).unwrap_or_default(),
                fmt_opt_f64(d.age),
                d.ethnicity.clone().unwrap_or_default(),
                fmt_opt_f64(d.disease_duration),
            ];
            rec.extend(self.features.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TableError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTable, TableError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<FeatureTable, TableError> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        let pos: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let id_col = *pos
            .get("participant_id")
            .ok_or_else(|| TableError::MissingColumn("participant_id".into()))?;
        let label_col = *pos
            .get("label")
            .ok_or_else(|| TableError::MissingColumn("label".into()))?;
        let feature_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !META_COLUMNS.contains(h))
            .map(|(i, h)| (i, h.to_string()))
            .collect();

        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut demo = Vec::new();
        let mut data = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |column: &str, value: &str| TableError::BadValue {
                row,
                column: column.to_string(),
                value: value.to_string(),
            };
            let cell = |name: &str| pos.get(name).and_then(|&i| rec.get(i)).unwrap_or("");
            let id = rec.get(id_col).unwrap_or("").to_string();
            if !seen.insert(id.clone()) {
                return Err(TableError::DuplicateParticipant(id));
            }
            let label_raw = rec.get(label_col).unwrap_or("");
            let label = Label::parse(label_raw).ok_or_else(|| bad("label", label_raw))?;
            let opt_num = |name: &str| -> Result<Option<f64>, TableError> {
                let raw = cell(name);
                if raw.is_empty() {
                    Ok(None)
                } else {
                    raw.parse::<f64>().map(Some).map_err(|_| bad(name, raw))
                }
            };
            let cohort = match cell("cohort") {
                "" => None,
                raw => Some(Cohort::parse(raw).ok_or_else(|| bad("cohort", raw))?),
            };
            let sex = match cell("sex") {
                "" => None,
                raw => Some(Sex::parse(raw).ok_or_else(|| bad("sex", raw))?),
            };
            let ethnicity = match cell("ethnicity") {
                "" => None,
                raw => Some(raw.to_string()),
            };
            demo.push(Demographics {
                cohort,
                sex,
                age: opt_num("age")?,
                ethnicity,
                disease_duration: opt_num("disease_duration")?,
            });
            for (i, name) in &feature_cols {
                let raw = rec.get(*i).unwrap_or("");
                let v: f64 = raw.parse().map_err(|_| bad(name, raw))?;
                if !v.is_finite() {
                    return Err(bad(name, raw));
                }
                data.push(v);
            }
            ids.push(id);
            labels.push(label);
        }
        if ids.is_empty() {
            return Err(TableError::Empty);
        }
        let n = ids.len();
        Ok(FeatureTable {
            participant_ids: ids,
            labels,
            demographics: demo,
            feature_names: feature_cols.into_iter().map(|(_, n)| n).collect(),
            features: Matrix::from_vec(n, data.len() / n, data),
        })
    }
}

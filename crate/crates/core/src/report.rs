//! Report emission: JSON documents, CSV exports and an SVG ROC plot.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::evaluate::RocPoint;
use crate::explain::ShapAttribution;
use crate::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("refusing to write an empty ROC curve to {0}")]
    EmptyRoc(PathBuf),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ReportError>;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// `fpr,tpr,threshold`; the start point has an empty threshold.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("fpr,tpr,threshold\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(p.fpr),
            fmt_f64(p.tpr),
            p.threshold.map(fmt_f64).unwrap_or_default()
        ));
    }
    s
}

/// ROC vertices with interior collinear points removed.
pub fn roc_control_points(points: &[RocPoint]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for p in points {
        let q = (p.fpr, p.tpr);
        if out.last() == Some(&q) {
            continue;
        }
        if out.len() >= 2 {
            let (a, b) = (out[out.len() - 2], out[out.len() - 1]);
            let cross = (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
            if cross.abs() < 1e-12 {
                out.pop();
            }
        }
        out.push(q);
    }
    out
}

const SVG_SIZE: f64 = 400.0;
const SVG_MARGIN: f64 = 40.0;

/// Static SVG line plot of the ROC polyline with the chance diagonal.
pub fn roc_svg(points: &[RocPoint], auroc: f64) -> Option<String> {
    if points.is_empty() {
        return None;
    }
    let to_xy = |(f, t): (f64, f64)| (SVG_MARGIN + f * SVG_SIZE, SVG_MARGIN + (1.0 - t) * SVG_SIZE);
    let poly: Vec<String> = roc_control_points(points)
        .into_iter()
        .map(to_xy)
        .map(|(x, y)| format!("{x:.3},{y:.3}"))
        .collect();
    let full = SVG_SIZE + 2.0 * SVG_MARGIN;
    let (x0, y0) = to_xy((0.0, 0.0));
    let (x1, y1) = to_xy((1.0, 1.0));
    Some(format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{full}\" height=\"{full}\" viewBox=\"0 0 {full} {full}\">\n",
            "<rect x=\"{m}\" y=\"{m}\" width=\"{s}\" height=\"{s}\" fill=\"none\" stroke=\"black\"/>\n",
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"grey\" stroke-dasharray=\"4 4\"/>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{pts}\"/>\n",
            "<text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"14\">AUROC = {auc:.4}</text>\n",
            "<text x=\"{cx}\" y=\"{by}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">False positive rate</text>\n",
            "<text x=\"12\" y=\"{cy}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 {cy})\">True positive rate</text>\n",
            "</svg>\n"
        ),
        full = full,
        m = SVG_MARGIN,
        s = SVG_SIZE,
        x0 = x0,
        y0 = y0,
        x1 = x1,
        y1 = y1,
        pts = poly.join(" "),
        tx = SVG_MARGIN + 0.55 * SVG_SIZE,
        ty = SVG_MARGIN + 0.9 * SVG_SIZE,
        auc = auroc,
        cx = SVG_MARGIN + SVG_SIZE / 2.0,
        by = full - 8.0,
        cy = SVG_MARGIN + SVG_SIZE / 2.0,
    ))
}

/// Writes the ROC as CSV and, when `svg` is given, as an SVG plot. Empty
/// curves are rejected before anything is written.
pub fn write_roc(csv: &Path, svg: Option<&Path>, points: &[RocPoint], auroc: f64) -> Result<()> {
    if points.is_empty() {
        return Err(ReportError::EmptyRoc(csv.to_path_buf()));
    }
    write_text(csv, &roc_csv(points))?;
    if let Some(p) = svg {
        write_text(p, &roc_svg(points, auroc).expect("non-empty curve"))?;
    }
    Ok(())
}

/// `row_id,feature,shap_value,feature_value`.
pub fn shap_csv(attributions: &[ShapAttribution], features: &[String], rows: &Matrix) -> String {
    let mut s = String::from("row_id,feature,shap_value,feature_value\n");
    for (i, a) in attributions.iter().enumerate() {
        for (j, name) in features.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                a.row_id,
                name,
                fmt_f64(a.values[j]),
                fmt_f64(rows.get(i, j))
            ));
        }
    }
    s
}

/// `row_id,pc1,pc2,label`.
pub fn projection_csv(ids: &[String], coordinates: &Matrix, labels: &[String]) -> String {
    let mut s = String::from("row_id,pc1,pc2,label\n");
    for (i, id) in ids.iter().enumerate() {
        let pc2 = if coordinates.ncols() > 1 { coordinates.get(i, 1) } else { 0.0 };
        s.push_str(&format!("{id},{},{},{}\n", fmt_f64(coordinates.get(i, 0)), fmt_f64(pc2), labels[i]));
    }
    s
}

/// One row of a predictions file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictionRow {
    pub participant_id: String,
    pub label: String,
    pub probability: f64,
    pub predicted: u8,
}

/// `participant_id,label,probability,predicted`.
pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut s = String::from("participant_id,label,probability,predicted\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.participant_id, r.label, fmt_f64(r.probability), r.predicted));
    }
    s
}

pub fn parse_predictions_csv(text: &str) -> std::result::Result<Vec<PredictionRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::roc_auroc;

    #[test]
    fn perfect_classifier_svg() {
        let roc = roc_auroc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(roc_control_points(&roc.points), vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let svg = roc_svg(&roc.points, roc.auroc).unwrap();
        assert!(svg.contains("points=\"40.000,440.000 40.000,40.000 440.000,40.000\""));
    }

    #[test]
    fn empty_roc_refused_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("roc.csv");
        assert!(matches!(write_roc(&p, None, &[], 0.5), Err(ReportError::EmptyRoc(_))));
        assert!(!p.exists());
    }

    #[test]
    fn roc_csv_format() {
        let roc = roc_auroc(&[0.7, 0.2], &[true, false]).unwrap();
        assert_eq!(roc_csv(&roc.points), "fpr,tpr,threshold\n0.0,0.0,\n0.0,1.0,0.7\n1.0,1.0,0.2\n");
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![PredictionRow {
            participant_id: "p1".into(),
            label: "pd".into(),
            probability: 0.25,
            predicted: 0,
        }];
        assert_eq!(parse_predictions_csv(&predictions_csv(&rows)).unwrap(), rows);
    }
}

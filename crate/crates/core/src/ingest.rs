//! Parsing and validation of manifests, action-unit CSVs and landmark series.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Number of face-mesh points per frame (468 mesh + 10 iris).
pub const LANDMARK_POINTS: usize = 478;
/// Upper bound of OpenFace AU intensities.
pub const AU_INTENSITY_MAX: f64 = 5.0;
/// Frames under this confidence are counted in the validation report.
pub const LOW_CONFIDENCE: f64 = 0.75;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema violation in field {field:?} at row {row}: {reason}")]
    SchemaViolation {
        field: String,
        row: usize,
        reason: String,
    },
    #[error("duplicate manifest entry {0}")]
    DuplicateEntry(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column {col:?}")]
    NonNumericCell { row: usize, col: String },
    #[error("value out of range at row {row}, column {col:?}")]
    OutOfRange { row: usize, col: String },
    #[error("empty file: {0}")]
    EmptyFile(PathBuf),
    #[error("frame {frame_idx} has {point_count} landmark points, expected {LANDMARK_POINTS}")]
    RaggedFrame { frame_idx: usize, point_count: usize },
    #[error("frame counts disagree: action units {au} vs landmarks {landmarks}")]
    FrameCountMismatch { au: usize, landmarks: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expression {
    Smile,
    Disgust,
    Surprise,
}

impl Expression {
    pub const ALL: [Expression; 3] = [Expression::Smile, Expression::Disgust, Expression::Surprise];

    pub fn as_str(self) -> &'static str {
        match self {
            Expression::Smile => "smile",
            Expression::Disgust => "disgust",
            Expression::Surprise => "surprise",
        }
    }

    /// The seven action units summarised for this expression, ascending.
    pub fn action_units(self) -> [u8; 7] {
        match self {
            Expression::Smile => [1, 6, 12, 14, 25, 26, 45],
            Expression::Disgust => [4, 7, 9, 10, 25, 26, 45],
            Expression::Surprise => [1, 2, 4, 5, 25, 26, 45],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `AU06` style name.
pub fn au_name(id: u8) -> String {
    format!("AU{id:02}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Pd,
    NonPd,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pd => "pd",
            Label::NonPd => "non_pd",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Pd
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Pd
        } else {
            Label::NonPd
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pd" | "1" => Some(Label::Pd),
            "non_pd" | "0" => Some(Label::NonPd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    HomeGlobal,
    Clinic,
    PdCare,
    HomeBd,
}

impl Cohort {
    pub const ALL: [Cohort; 4] = [Cohort::HomeGlobal, Cohort::Clinic, Cohort::PdCare, Cohort::HomeBd];

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::HomeGlobal => "home_global",
            Cohort::Clinic => "clinic",
            Cohort::PdCare => "pd_care",
            Cohort::HomeBd => "home_bd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
    Other,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "male" => Some(Sex::Male),
            "female" => Some(Sex::Female),
            "other" => Some(Sex::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub participant_id: String,
    pub expression: Expression,
    pub au_path: PathBuf,
    pub landmark_path: PathBuf,
    pub label: Label,
    pub cohort: Cohort,
    #[serde(default)]
    pub sex: Option<Sex>,
    #[serde(default)]
    pub age: Option<f64>,
    #[serde(default)]
    pub ethnicity: Option<String>,
    #[serde(default)]
    pub disease_duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn read_to_string(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads and validates a manifest. Relative recording paths are resolved
/// against the manifest's directory.
pub fn parse_manifest(path: &Path) -> Result<Manifest> {
    let text = read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest_str(&text, base)
}

pub fn parse_manifest_str(text: &str, base: &Path) -> Result<Manifest> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| IngestError::SchemaViolation {
            field: "<document>".into(),
            row: 0,
            reason: e.to_string(),
        })?;
    let rows = doc
        .get("entries")
        .and_then(|v| v.as_array())
        .ok_or_else(|| IngestError::SchemaViolation {
            field: "entries".into(),
            row: 0,
            reason: "expected an array".into(),
        })?;

    let mut entries = Vec::with_capacity(rows.len());
    let mut seen = HashSet::new();
    for (row, value) in rows.iter().enumerate() {
        let mut entry: ManifestEntry =
            serde_json::from_value(value.clone()).map_err(|e| IngestError::SchemaViolation {
                field: schema_field_of(&e.to_string()),
                row,
                reason: e.to_string(),
            })?;
        if let Some(age) = entry.age {
            if !(18.0..=120.0).contains(&age) {
                return Err(IngestError::SchemaViolation {
                    field: "age".into(),
                    row,
                    reason: format!("{age} outside [18, 120]"),
                });
            }
        }
        if let Some(d) = entry.disease_duration {
            if !(d >= 0.0) {
                return Err(IngestError::SchemaViolation {
                    field: "disease_duration".into(),
                    row,
                    reason: format!("{d} is negative"),
                });
            }
        }
        if entry.participant_id.is_empty() {
            return Err(IngestError::SchemaViolation {
                field: "participant_id".into(),
                row,
                reason: "empty".into(),
            });
        }
        let key = format!("({}, {})", entry.participant_id, entry.expression);
        if !seen.insert((entry.participant_id.clone(), entry.expression)) {
            return Err(IngestError::DuplicateEntry(key));
        }
        for p in [&mut entry.au_path, &mut entry.landmark_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(IngestError::MissingFile(p.clone()));
            }
        }
        entries.push(entry);
    }
    Ok(Manifest { entries })
}

fn schema_field_of(msg: &str) -> String {
    // serde messages look like "missing field `label`" or "unknown variant `x`".
    msg.split('`').nth(1).unwrap_or("<entry>").to_string()
}

/// Per-frame recording for one participant and expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSeries {
    pub participant_id: String,
    pub expression: Expression,
    /// Source frame numbers, ascending.
    pub frames: Vec<u64>,
    pub au_intensity: BTreeMap<String, Vec<f64>>,
    pub au_activation: BTreeMap<String, Vec<u8>>,
    /// `frame_count x 478` points, when a landmark file was merged in.
    pub landmarks: Option<Vec<Vec<[f64; 3]>>>,
    pub confidence: Option<Vec<f64>>,
}

/// Landmark-only partial series.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSeries {
    pub frames: Vec<u64>,
    pub points: Vec<Vec<[f64; 3]>>,
}

impl RecordingSeries {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Attaches landmark frames; counts must agree.
    pub fn with_landmarks(mut self, lm: LandmarkSeries) -> Result<Self> {
        if lm.points.len() != self.frames.len() {
            return Err(IngestError::FrameCountMismatch {
                au: self.frames.len(),
                landmarks: lm.points.len(),
            });
        }
        self.landmarks = Some(lm.points);
        Ok(self)
    }

    /// Drops frames whose confidence is below `min`. Series without a
    /// confidence column are returned unchanged.
    pub fn retain_confident(mut self, min: f64) -> Self {
        let Some(conf) = self.confidence.clone() else {
            return self;
        };
        let keep: Vec<bool> = conf.iter().map(|&c| c >= min).collect();
        fn filter<T: Clone>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(x, _)| x.clone())
                .collect()
        }
        self.frames = filter(&self.frames, &keep);
        for v in self.au_intensity.values_mut() {
            *v = filter(v, &keep);
        }
        for v in self.au_activation.values_mut() {
            *v = filter(v, &keep);
        }
        if let Some(lm) = self.landmarks.as_mut() {
            *lm = filter(lm, &keep);
        }
        self.confidence = Some(filter(&conf, &keep));
        self
    }

    /// Canonical AU CSV: `frame`, every `AU##_r`, every `AU##_c`, then
    /// `confidence` when present.
    pub fn to_au_csv(&self) -> String {
        let mut out = String::from("frame");
        for name in self.au_intensity.keys() {
            out.push_str(&format!(",{name}_r"));
        }
        for name in self.au_activation.keys() {
            out.push_str(&format!(",{name}_c"));
        }
        if self.confidence.is_some() {
            out.push_str(",confidence");
        }
        out.push('\n');
        for (i, frame) in self.frames.iter().enumerate() {
            out.push_str(&frame.to_string());
            for v in self.au_intensity.values() {
                out.push_str(&format!(",{:?}", v[i]));
            }
            for v in self.au_activation.values() {
                out.push_str(&format!(",{}", v[i]));
            }
            if let Some(c) = &self.confidence {
                out.push_str(&format!(",{:?}", c[i]));
            }
            out.push('\n');
        }
        out
    }
}

fn parse_cell(raw: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| IngestError::NonNumericCell {
        row,
        col: col.to_string(),
    })?;
    if !v.is_finite() {
        return Err(IngestError::NonNumericCell {
            row,
            col: col.to_string(),
        });
    }
    Ok(v)
}

fn parse_frame_number(raw: &str, row: usize) -> Result<u64> {
    let v = parse_cell(raw, row, "frame")?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(IngestError::OutOfRange {
            row,
            col: "frame".into(),
        });
    }
    Ok(v as u64)
}

/// Reads an OpenFace-style AU CSV keeping only the expression's seven AUs.
pub fn parse_au_csv(path: &Path, expression: Expression) -> Result<RecordingSeries> {
    let text = read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    parse_au_csv_str(&text, expression).map_err(|e| match e {
        IngestError::EmptyFile(_) => IngestError::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

pub fn parse_au_csv_str(text: &str, expression: Expression) -> Result<RecordingSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let index: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };

    let frame_col = column("frame")?;
    let mut au_cols = Vec::new();
    for id in expression.action_units() {
        let name = au_name(id);
        let r = column(&format!("{name}_r"))?;
        let c = column(&format!("{name}_c"))?;
        au_cols.push((name, r, c));
    }
    let conf_col = index
        .get("confidence")
        .or_else(|| index.get("success"))
        .copied();

    let mut rows: Vec<(u64, Vec<f64>, Vec<u8>, Option<f64>)> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let frame = parse_frame_number(cell(frame_col), row)?;
        let mut intens = Vec::with_capacity(au_cols.len());
        let mut act = Vec::with_capacity(au_cols.len());
        for (name, r, c) in &au_cols {
            let rname = format!("{name}_r");
            let v = parse_cell(cell(*r), row, &rname)?;
            if !(0.0..=AU_INTENSITY_MAX).contains(&v) {
                return Err(IngestError::OutOfRange { row, col: rname });
            }
            let cname = format!("{name}_c");
            let a = parse_cell(cell(*c), row, &cname)?;
            if a != 0.0 && a != 1.0 {
                return Err(IngestError::OutOfRange { row, col: cname });
            }
            intens.push(v);
            act.push(a as u8);
        }
        let conf = match conf_col {
            Some(i) => {
                let v = parse_cell(cell(i), row, "confidence")?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(IngestError::OutOfRange {
                        row,
                        col: "confidence".into(),
                    });
                }
                Some(v)
            }
            None => None,
        };
        rows.push((frame, intens, act, conf));
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyFile(PathBuf::new()));
    }
    rows.sort_by_key(|r| r.0);

    let mut au_intensity = BTreeMap::new();
    let mut au_activation = BTreeMap::new();
    for (k, (name, _, _)) in au_cols.iter().enumerate() {
        au_intensity.insert(name.clone(), rows.iter().map(|r| r.1[k]).collect());
        au_activation.insert(name.clone(), rows.iter().map(|r| r.2[k]).collect());
    }
    let confidence = conf_col.map(|_| rows.iter().map(|r| r.3.unwrap_or(1.0)).collect());
    Ok(RecordingSeries {
        participant_id: String::new(),
        expression,
        frames: rows.iter().map(|r| r.0).collect(),
        au_intensity,
        au_activation,
        landmarks: None,
        confidence,
    })
}

/// Reads a landmark CSV (`frame, p000_x, p000_y, p000_z, ... p477_z`).
pub fn parse_landmark_series(path: &Path) -> Result<LandmarkSeries> {
    let text = read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    parse_landmark_str(&text).map_err(|e| match e {
        IngestError::EmptyFile(_) => IngestError::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

pub fn parse_landmark_str(text: &str) -> Result<LandmarkSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("frame") {
        return Err(IngestError::MissingColumn("frame".into()));
    }
    let mut frames = Vec::new();
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let coords = record.len().saturating_sub(1);
        if coords != LANDMARK_POINTS * 3 {
            return Err(IngestError::RaggedFrame {
                frame_idx: row,
                point_count: coords / 3,
            });
        }
        frames.push(parse_frame_number(&record[0], row)?);
        let mut frame = Vec::with_capacity(LANDMARK_POINTS);
        for p in 0..LANDMARK_POINTS {
            let mut xyz = [0.0; 3];
            for (axis, slot) in xyz.iter_mut().enumerate() {
                let col = 1 + 3 * p + axis;
                *slot = parse_cell(&record[col], row, headers.get(col).unwrap_or("?"))?;
            }
            frame.push(xyz);
        }
        points.push(frame);
    }
    if points.is_empty() {
        return Err(IngestError::EmptyFile(PathBuf::new()));
    }
    Ok(LandmarkSeries { frames, points })
}

/// Canonical landmark CSV header.
pub fn landmark_header() -> String {
    let mut h = String::from("frame");
    for p in 0..LANDMARK_POINTS {
        for axis in ["x", "y", "z"] {
            h.push_str(&format!(",p{p:03}_{axis}"));
        }
    }
    h
}

pub fn landmarks_to_csv(series: &LandmarkSeries) -> String {
    let mut out = landmark_header();
    out.push('\n');
    for (f, frame) in series.frames.iter().zip(&series.points) {
        out.push_str(&f.to_string());
        for p in frame {
            for v in p {
                out.push_str(&format!(",{v:?}"));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConfidenceSummary {
    Unavailable,
    Available {
        mean: f64,
        min: f64,
        frames_below_threshold: usize,
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub participant_id: String,
    pub expression: Expression,
    pub frame_count: usize,
    pub active_fraction: BTreeMap<String, f64>,
    /// AUs never active in the recording.
    pub inactive_aus: BTreeSet<String>,
    pub confidence: ConfidenceSummary,
    pub has_landmarks: bool,
}

pub fn validate_recording(series: &RecordingSeries) -> ValidationReport {
    let n = series.frame_count();
    let mut active_fraction = BTreeMap::new();
    let mut inactive_aus = BTreeSet::new();
    for (name, act) in &series.au_activation {
        let active = act.iter().filter(|&&a| a == 1).count();
        active_fraction.insert(name.clone(), if n == 0 { 0.0 } else { active as f64 / n as f64 });
        if active == 0 {
            inactive_aus.insert(name.clone());
        }
    }
    let confidence = match &series.confidence {
        Some(c) if !c.is_empty() => ConfidenceSummary::Available {
            mean: c.iter().sum::<f64>() / c.len() as f64,
            min: c.iter().copied().fold(f64::INFINITY, f64::min),
            frames_below_threshold: c.iter().filter(|&&v| v < LOW_CONFIDENCE).count(),
            threshold: LOW_CONFIDENCE,
        },
        _ => ConfidenceSummary::Unavailable,
    };
    ValidationReport {
        participant_id: series.participant_id.clone(),
        expression: series.expression,
        frame_count: n,
        active_fraction,
        inactive_aus,
        confidence,
        has_landmarks: series.landmarks.is_some(),
    }
}

/// Loads the AU and landmark files of one manifest entry.
pub fn load_entry(entry: &ManifestEntry, min_confidence: Option<f64>) -> Result<RecordingSeries> {
    let mut series = parse_au_csv(&entry.au_path, entry.expression)?;
    series.participant_id = entry.participant_id.clone();
    let lm = parse_landmark_series(&entry.landmark_path)?;
    let series = series.with_landmarks(lm)?;
    Ok(match min_confidence {
        Some(min) => series.retain_confident(min),
        None => series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn smile_csv(extra_header: &str, rows: &[&str]) -> String {
        let mut s = String::from(
            "frame,AU01_r,AU06_r,AU12_r,AU14_r,AU25_r,AU26_r,AU45_r,AU01_c,AU06_c,AU12_c,AU14_c,AU25_c,AU26_c,AU45_c",
        );
        s.push_str(extra_header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn parses_three_row_au_csv() {
        let text = smile_csv(
            "",
            &[
                "0,0,0,1.0,0,0,0,0,0,0,1,0,0,0,0",
                "1,0,0,2.0,0,0,0,0,0,0,1,0,0,0,0",
                "2,0,0,3.0,0,0,0,0,0,0,1,0,0,0,0",
            ],
        );
        let s = parse_au_csv_str(&text, Expression::Smile).unwrap();
        assert_eq!(s.frame_count(), 3);
        assert_eq!(s.au_intensity["AU12"], vec![1.0, 2.0, 3.0]);
        assert_eq!(s.au_activation["AU12"], vec![1, 1, 1]);
        assert_eq!(s.au_intensity.len(), 7);
    }

    #[test]
    fn rows_sorted_by_frame() {
        let text = smile_csv(
            "",
            &[
                "2,0,0,3.0,0,0,0,0,0,0,1,0,0,0,0",
                "0,0,0,1.0,0,0,0,0,0,0,1,0,0,0,0",
            ],
        );
        let s = parse_au_csv_str(&text, Expression::Smile).unwrap();
        assert_eq!(s.frames, vec![0, 2]);
        assert_eq!(s.au_intensity["AU12"], vec![1.0, 3.0]);
    }

    #[test]
    fn missing_blink_activation_column() {
        let text = "frame,AU01_r,AU06_r,AU12_r,AU14_r,AU25_r,AU26_r,AU45_r,AU01_c,AU06_c,AU12_c,AU14_c,AU25_c,AU26_c\n0,0,0,0,0,0,0,0,0,0,0,0,0,0\n";
        match parse_au_csv_str(text, Expression::Smile) {
            Err(IngestError::MissingColumn(c)) => assert_eq!(c, "AU45_c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn intensity_above_five_rejected() {
        let text = smile_csv("", &["0,0,7.2,0,0,0,0,0,0,0,0,0,0,0,0"]);
        match parse_au_csv_str(&text, Expression::Smile) {
            Err(IngestError::OutOfRange { row, col }) => {
                assert_eq!(row, 0);
                assert_eq!(col, "AU06_r");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_empty() {
        let text = smile_csv("", &["0,0,abc,0,0,0,0,0,0,0,0,0,0,0,0"]);
        assert!(matches!(
            parse_au_csv_str(&text, Expression::Smile),
            Err(IngestError::NonNumericCell { .. })
        ));
        let header_only = smile_csv("", &[]);
        assert!(matches!(
            parse_au_csv_str(&header_only, Expression::Smile),
            Err(IngestError::EmptyFile(_))
        ));
    }

    #[test]
    fn openface_style_padded_headers() {
        let text = " frame, AU01_r, AU06_r, AU12_r, AU14_r, AU25_r, AU26_r, AU45_r, AU01_c, AU06_c, AU12_c, AU14_c, AU25_c, AU26_c, AU45_c, success\n 0, 0, 0, 1.5, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1\n";
        let s = parse_au_csv_str(text, Expression::Smile).unwrap();
        assert_eq!(s.au_intensity["AU12"], vec![1.5]);
        assert_eq!(s.confidence, Some(vec![1.0]));
    }

    fn landmark_row(frame: usize, points: usize) -> String {
        let mut s = frame.to_string();
        for p in 0..points * 3 {
            s.push_str(&format!(",{}", p as f64 * 0.001));
        }
        s
    }

    #[test]
    fn landmark_frames() {
        let text = format!(
            "{}\n{}\n{}\n",
            landmark_header(),
            landmark_row(0, 478),
            landmark_row(1, 478)
        );
        let lm = parse_landmark_str(&text).unwrap();
        assert_eq!(lm.points.len(), 2);
        assert_eq!(lm.points[1][477][2], (477 * 3 + 2) as f64 * 0.001);

        let ragged = format!("{}\n{}\n{}\n", landmark_header(), landmark_row(0, 478), landmark_row(1, 400));
        match parse_landmark_str(&ragged) {
            Err(IngestError::RaggedFrame {
                frame_idx,
                point_count,
            }) => {
                assert_eq!(frame_idx, 1);
                assert_eq!(point_count, 400);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_landmark_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.csv");
        fs::File::create(&p).unwrap();
        assert!(matches!(parse_landmark_series(&p), Err(IngestError::EmptyFile(_))));
    }

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        fs::write(dir.join("a.csv"), "x").unwrap();
        fs::write(dir.join("l.csv"), "x").unwrap();
        let p = dir.join("manifest.json");
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn entry(pid: &str, expr: &str, age: &str) -> String {
        format!(
            r#"{{"participant_id":"{pid}","expression":"{expr}","au_path":"a.csv","landmark_path":"l.csv","label":"pd","cohort":"clinic","sex":"female","age":{age},"ethnicity":null,"disease_duration":null}}"#
        )
    }

    #[test]
    fn manifest_parse_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_manifest(
            dir.path(),
            &format!(r#"{{"entries":[{},{}]}}"#, entry("P1", "smile", "60"), entry("P1", "disgust", "60")),
        );
        let m = parse_manifest(&ok).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].sex, Some(Sex::Female));
        assert!(m.entries[0].au_path.is_absolute() || m.entries[0].au_path.starts_with(dir.path()));

        let dup = write_manifest(
            dir.path(),
            &format!(r#"{{"entries":[{},{}]}}"#, entry("P1", "smile", "60"), entry("P1", "smile", "61")),
        );
        assert!(matches!(parse_manifest(&dup), Err(IngestError::DuplicateEntry(_))));

        let bad_age = write_manifest(
            dir.path(),
            &format!(r#"{{"entries":[{},{}]}}"#, entry("P1", "smile", "60"), entry("P2", "smile", "-3")),
        );
        match parse_manifest(&bad_age) {
            Err(IngestError::SchemaViolation { field, row, .. }) => {
                assert_eq!(field, "age");
                assert_eq!(row, 1);
            }
            other => panic!("unexpected {other:?}"),
        }

        let missing = dir.path().join("nope.json");
        assert!(matches!(parse_manifest(&missing), Err(IngestError::MissingFile(_))));
    }

    #[test]
    fn validation_report_flags() {
        let mut s = RecordingSeries {
            participant_id: "P".into(),
            expression: Expression::Smile,
            frames: (0..10).collect(),
            au_intensity: BTreeMap::new(),
            au_activation: BTreeMap::new(),
            landmarks: None,
            confidence: None,
        };
        s.au_activation.insert("AU12".into(), vec![1; 10]);
        s.au_activation.insert("AU45".into(), vec![0; 10]);
        s.au_intensity.insert("AU12".into(), vec![1.0; 10]);
        s.au_intensity.insert("AU45".into(), vec![0.0; 10]);
        let r = validate_recording(&s);
        assert_eq!(r.active_fraction["AU12"], 1.0);
        assert!(r.inactive_aus.contains("AU45"));
        assert!(!r.inactive_aus.contains("AU12"));
        assert_eq!(r.confidence, ConfidenceSummary::Unavailable);

        s.confidence = Some((0..10).map(|i| if i < 3 { 0.5 } else { 0.9 }).collect());
        match validate_recording(&s).confidence {
            ConfidenceSummary::Available {
                frames_below_threshold,
                ..
            } => assert_eq!(frames_below_threshold, 3),
            _ => panic!(),
        }
        let kept = s.retain_confident(0.75);
        assert_eq!(kept.frame_count(), 7);
        assert_eq!(kept.au_activation["AU12"].len(), 7);
    }
}

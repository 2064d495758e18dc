//! Grid sweeps over dotted config paths, ranked by repeated-CV AUROC.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use hyposcreen_core::config::PipelineConfig;
use hyposcreen_core::evaluate::run_repeated_cv;
use hyposcreen_core::ingest::Expression;
use hyposcreen_core::report::write_text;
use hyposcreen_core::table::FeatureTable;

use crate::error::CliError;
use crate::SweepArgs;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    /// Relative paths resolve against the grid file's directory.
    features: Option<PathBuf>,
    #[serde(default)]
    base: Option<Value>,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default = "default_seeds")]
    seeds: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    axes: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    preset: Option<String>,
}

fn default_folds() -> usize {
    5
}

fn default_seeds() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub settings: Vec<(String, Value)>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct LeaderboardRow {
    pub config_hash: String,
    pub mean_auroc: f64,
    pub min_auroc: f64,
    pub max_auroc: f64,
    pub settings: Vec<(String, Value)>,
}

fn merge(dst: &mut Value, src: &Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (d, s) => *d = s.clone(),
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(CliError::Usage(format!("axis {path}: {part} is not inside an object")));
        };
        if !map.contains_key(*part) {
            return Err(CliError::Usage(format!("axis {path}: unknown config field {part}")));
        }
        let slot = map.get_mut(*part).expect("checked above");
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}

/// The seven non-empty expression subsets, singles first.
pub fn expression_subsets() -> Vec<Value> {
    let mut masks: Vec<u32> = (1..8).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
        .into_iter()
        .map(|m| {
            let names: Vec<Value> = Expression::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| m & (1 << i) != 0)
                .map(|(_, e)| Value::String(e.as_str().to_string()))
                .collect();
            Value::Array(names)
        })
        .collect()
}

/// Cartesian product of the axes over `base`, in axis-name order with the
/// last axis varying fastest.
pub fn expand_points(base: &Value, axes: &BTreeMap<String, Vec<Value>>) -> Result<Vec<SweepPoint>, CliError> {
    let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for (name, values) in axes {
        if values.is_empty() {
            return Err(CliError::Usage(format!("axis {name} has no values")));
        }
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((name.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|settings| {
            let mut doc = base.clone();
            for (k, v) in &settings {
                set_path(&mut doc, k, v.clone())?;
            }
            let config = PipelineConfig::from_json(&doc.to_string())?;
            Ok(SweepPoint { settings, config })
        })
        .collect()
}

/// Evaluates every point and ranks the results.
pub fn run_sweep(
    table: &FeatureTable,
    points: &[SweepPoint],
    folds: usize,
    seeds: &[u64],
) -> Result<Vec<LeaderboardRow>, CliError> {
    let mut rows = points
        .par_iter()
        .map(|p| {
            let cv = run_repeated_cv(table, &p.config, folds, seeds)?;
            let aurocs: Vec<f64> = cv.runs.iter().map(|r| r.pooled.auroc).collect();
            Ok(LeaderboardRow {
                config_hash: p.config.hash(),
                mean_auroc: aurocs.iter().sum::<f64>() / aurocs.len() as f64,
                min_auroc: aurocs.iter().copied().fold(f64::INFINITY, f64::min),
                max_auroc: aurocs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                settings: p.settings.clone(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    rank_rows(&mut rows);
    Ok(rows)
}

/// Mean AUROC descending, then config hash ascending.
pub fn rank_rows(rows: &mut [LeaderboardRow]) {
    rows.sort_by(|a, b| {
        b.mean_auroc
            .total_cmp(&a.mean_auroc)
            .then_with(|| a.config_hash.cmp(&b.config_hash))
    });
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut s = String::from("rank,mean_auroc,min_auroc,max_auroc,config_hash,settings\n");
    for (i, r) in rows.iter().enumerate() {
        let settings: Vec<String> = r.settings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!(
            "{},{:?},{:?},{:?},{},{}\n",
            i + 1,
            r.mean_auroc,
            r.min_auroc,
            r.max_auroc,
            r.config_hash,
            csv_field(&settings.join(";"))
        ));
    }
    s
}

fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

pub fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.grid)?;
    let grid: GridFile =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.grid.display())))?;
    let base_dir = a.grid.parent().unwrap_or(Path::new("."));
    let features = match (&a.features, &grid.features) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => resolve(base_dir, p),
        (None, None) => return Err(CliError::Usage("no feature table: pass --features or set it in the grid".into())),
    };
    if grid.folds < 2 || grid.seeds == 0 {
        return Err(CliError::Usage("grid needs folds >= 2 and seeds >= 1".into()));
    }
    let mut base = serde_json::to_value(PipelineConfig::default())?;
    if let Some(b) = &grid.base {
        merge(&mut base, b);
    }
    let mut axes = grid.axes.clone();
    let preset = a.preset.as_ref().or(grid.preset.as_ref());
    match preset.map(String::as_str) {
        None => {}
        Some("expressions") => {
            axes.insert("expressions".into(), expression_subsets());
        }
        Some(other) => return Err(CliError::Usage(format!("unknown preset {other}; known: expressions"))),
    }
    let points = expand_points(&base, &axes)?;
    let table = FeatureTable::read_csv(&features)?;
    let seeds: Vec<u64> = (0..grid.seeds as u64).map(|i| grid.seed + i).collect();
    let rows = run_sweep(&table, &points, grid.folds, &seeds)?;
    write_text(&a.out, &leaderboard_csv(&rows))?;
    Ok(())
}

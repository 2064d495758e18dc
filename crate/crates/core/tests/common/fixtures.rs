//! On-disk recording fixtures: AU and landmark CSVs plus a manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hyposcreen_core::ingest::{au_name, Expression, LANDMARK_POINTS};
use hyposcreen_core::rng::from_seed;
use rand::Rng;

fn au_csv<R: Rng>(rng: &mut R, expression: Expression, frames: usize, boost: f64) -> String {
    let aus = expression.action_units();
    let mut s = String::from("frame");
    for id in aus {
        write!(s, ",{}_r", au_name(id)).unwrap();
    }
    for id in aus {
        write!(s, ",{}_c", au_name(id)).unwrap();
    }
    s.push_str(",confidence\n");
    for f in 0..frames {
        write!(s, "{f}").unwrap();
        let mut active = Vec::new();
        for _ in aus {
            let v: f64 = (rng.random_range(0.0..3.0f64) + boost).min(5.0);
            active.push(u8::from(v > 1.0));
            write!(s, ",{:.3}", v).unwrap();
        }
        for a in active {
            write!(s, ",{a}").unwrap();
        }
        writeln!(s, ",{:.2}", rng.random_range(0.8..1.0f64)).unwrap();
    }
    s
}

fn landmark_csv<R: Rng>(rng: &mut R, frames: usize) -> String {
    let mut s = String::from("frame");
    for p in 0..LANDMARK_POINTS {
        for axis in ["x", "y", "z"] {
            write!(s, ",p{p:03}_{axis}").unwrap();
        }
    }
    s.push('\n');
    for f in 0..frames {
        write!(s, "{f}").unwrap();
        for p in 0..LANDMARK_POINTS {
            let (bx, by) = ((p % 22) as f64 * 10.0, (p / 22) as f64 * 10.0);
            write!(
                s,
                ",{:.3},{:.3},{:.3}",
                bx + rng.random_range(-2.0..2.0f64),
                by + rng.random_range(-2.0..2.0f64),
                rng.random_range(-1.0..1.0f64)
            )
            .unwrap();
        }
        s.push('\n');
    }
    s
}

/// Writes `n` participants (alternating labels) with all three expressions
/// under `dir` and returns the manifest path.
pub fn write_cohort(dir: &Path, n: usize, frames: usize, seed: u64) -> PathBuf {
    let mut rng = from_seed(seed);
    let mut entries = Vec::new();
    for i in 0..n {
        let pd = i % 2 == 0;
        let pid = format!("s{i:03}");
        for e in Expression::ALL {
            let au = format!("{pid}_{}_au.csv", e.as_str());
            let lm = format!("{pid}_{}_lm.csv", e.as_str());
            std::fs::write(dir.join(&au), au_csv(&mut rng, e, frames, if pd { 0.0 } else { 1.0 })).unwrap();
            std::fs::write(dir.join(&lm), landmark_csv(&mut rng, frames)).unwrap();
            entries.push(serde_json::json!({
                "participant_id": pid,
                "expression": e.as_str(),
                "au_path": au,
                "landmark_path": lm,
                "label": if pd { "pd" } else { "non_pd" },
                "cohort": "clinic",
                "sex": if i % 3 == 0 { "female" } else { "male" },
                "age": 50.0 + i as f64,
            }));
        }
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::json!({ "entries": entries }).to_string()).unwrap();
    path
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{l1, l2_diff, max_abs_diff};
use crate::error::{Error, Result};

/// One `trajectory_{method}.csv` file read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn read(path: &Path, label: impl Into<String>) -> Result<Self> {
        let err = |e: csv::Error| Error::Serde(format!("{}: {e}", path.display()));
        let mut reader = csv::Reader::from_path(path).map_err(err)?;
        let width = reader.headers().map_err(err)?.len();
        if width < 3 {
            return Err(Error::Serde(format!("{}: no solution columns", path.display())));
        }
        let mut out = Self {
            label: label.into(),
            steps: Vec::new(),
            times: Vec::new(),
            states: Vec::new(),
        };
        for record in reader.records() {
            let record = record.map_err(err)?;
            let num = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Serde(format!("{}: column {i}: {e}", path.display())))
            };
            out.steps.push(
                record[0]
                    .parse()
                    .map_err(|e| Error::Serde(format!("{}: step: {e}", path.display())))?,
            );
            out.times.push(num(1)?);
            out.states.push((2..width).map(num).collect::<Result<_>>()?);
        }
        Ok(out)
    }

    fn position(&self, step: usize) -> Option<usize> {
        self.steps.binary_search(&step).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub a: String,
    pub b: String,
    pub step: usize,
    pub time: f64,
    pub l1_a: f64,
    pub l1_b: f64,
    pub l2_diff: f64,
    pub max_abs_diff: f64,
}

/// Per-step metrics over the steps both trajectories share.
pub fn compare_pair(a: &Trajectory, b: &Trajectory) -> Result<Vec<ComparisonRow>> {
    let width = |t: &Trajectory| t.states.first().map_or(0, Vec::len);
    if width(a) != width(b) {
        return Err(Error::AxisMismatch(format!(
            "{} has {} nodes, {} has {}",
            a.label,
            width(a),
            b.label,
            width(b)
        )));
    }
    let mut rows = Vec::new();
    for (i, &s) in a.steps.iter().enumerate() {
        let Some(j) = b.position(s) else { continue };
        if (a.times[i] - b.times[j]).abs() > 1e-9 * a.times[i].abs().max(1.0) {
            return Err(Error::AxisMismatch(format!(
                "step {s} is at t = {} in {} but t = {} in {}",
                a.times[i], a.label, b.times[j], b.label
            )));
        }
        let (u, v) = (&a.states[i], &b.states[j]);
        rows.push(ComparisonRow {
            a: a.label.clone(),
            b: b.label.clone(),
            step: s,
            time: a.times[i],
            l1_a: l1(u),
            l1_b: l1(v),
            l2_diff: l2_diff(u, v),
            max_abs_diff: max_abs_diff(u, v),
        });
    }
    Ok(rows)
}

/// All `trajectory_*.csv` files in a run directory, sorted by name.
pub fn load_run(dir: &Path) -> Result<Vec<Trajectory>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trajectory_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no trajectory files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            Trajectory::read(p, stem.trim_start_matches("trajectory_"))
        })
        .collect()
}

/// With one directory, every pair of methods in it; with two, each method
/// against the same method in the other run, which must share its time axis.
pub fn compare(a: &Path, b: Option<&Path>) -> Result<Vec<ComparisonRow>> {
    let left = load_run(a)?;
    let mut rows = Vec::new();
    match b {
        None => {
            for (i, x) in left.iter().enumerate() {
                for y in &left[i + 1..] {
                    rows.extend(compare_pair(x, y)?);
                }
            }
        }
        Some(b) => {
            let right = load_run(b)?;
            for x in &left {
                let Some(y) = right.iter().find(|y| y.label == x.label) else { continue };
                if x.steps != y.steps {
                    return Err(Error::AxisMismatch(format!("{} runs record different steps", x.label)));
                }
                let mut xa = x.clone();
                let mut yb = y.clone();
                xa.label = format!("a:{}", x.label);
                yb.label = format!("b:{}", y.label);
                rows.extend(compare_pair(&xa, &yb)?);
            }
            if rows.is_empty() {
                return Err(Error::AxisMismatch("the two runs share no method".into()));
            }
        }
    }
    Ok(rows)
}

pub fn write_rows<W: std::io::Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}

//! File writers. Every CSV starts with a header row; JSON keys follow the
//! serialized field names. Floats use the shortest round-trip form, so equal
//! runs give byte-identical files.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bifurcation::{CrossingEvent, EigenCurve, Flag, Signature, StepSummary, Trend};
use crate::error::Result;
use crate::matrix::StochasticMatrix;
use crate::partition::BoxPartition;
use crate::spectral::{LabeledPartition, SpectralSet};

/// Output directory that remembers what it wrote so a failed run can be
/// rolled back.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created: bool,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        let created = !root.exists();
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), created, files: Vec::new(), dirs: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    fn prepare(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent()
            && !parent.exists()
        {
            fs::create_dir_all(parent)?;
            self.dirs.push(parent.to_path_buf());
        }
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.prepare(rel)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write_text(rel, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    pub fn write_matrix(&mut self, rel: &str, m: &StochasticMatrix) -> Result<()> {
        let path = self.prepare(rel)?;
        let mut w = BufWriter::new(File::create(path)?);
        m.write_matrix_market(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Removes everything this run wrote.
    pub fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
        if self.created {
            let _ = fs::remove_dir_all(&self.root);
        }
    }
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !x.is_finite() { x.to_string() } else { format!("{x:e}") }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

#[derive(Serialize)]
struct Eigenvalues<'a> {
    values: &'a [f64],
    residuals: &'a [f64],
}

pub fn eigenvalues_json(spec: &SpectralSet) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Eigenvalues { values: &spec.values, residuals: &spec.residuals })? + "\n")
}

/// `box,x,y,value` over all boxes, or `state,value` without a partition.
pub fn field_csv(partition: Option<&BoxPartition>, values: &[f64]) -> String {
    let mut s = String::new();
    match partition {
        Some(bp) => {
            s.push_str("box,x,y,value\n");
            for (b, v) in values.iter().enumerate() {
                let [x, y] = bp.center(b);
                let _ = writeln!(s, "{b},{},{},{}", num(x), num(y), num(*v));
            }
        }
        None => {
            s.push_str("state,value\n");
            for (i, v) in values.iter().enumerate() {
                let _ = writeln!(s, "{i},{}", num(*v));
            }
        }
    }
    s
}

/// `box,x,y,set` (or `state,set`); states outside `states` get an empty set.
pub fn partition_csv(partition: Option<&BoxPartition>, n_full: usize, states: &[usize], labels: &[usize]) -> String {
    let mut set = vec![None; n_full];
    for (&s, &l) in states.iter().zip(labels) {
        set[s] = Some(l);
    }
    let cell = |l: Option<usize>| l.map_or_else(String::new, |v| v.to_string());
    let mut s = String::new();
    match partition {
        Some(bp) => {
            s.push_str("box,x,y,set\n");
            for (b, l) in set.into_iter().enumerate() {
                let [x, y] = bp.center(b);
                let _ = writeln!(s, "{b},{},{},{}", num(x), num(y), cell(l));
            }
        }
        None => {
            s.push_str("state,set\n");
            for (i, l) in set.into_iter().enumerate() {
                let _ = writeln!(s, "{i},{}", cell(l));
            }
        }
    }
    s
}

/// `set,size,mass,invariance_ratio`.
pub fn partition_sets_csv(part: &LabeledPartition, pi: &[f64]) -> String {
    let mut s = String::from("set,size,mass,invariance_ratio\n");
    for (i, (members, r)) in part.sets.iter().zip(&part.ratios).enumerate() {
        let mass: f64 = members.iter().map(|&m| pi[m]).sum();
        let _ = writeln!(s, "{i},{},{},{}", members.len(), num(mass), num(*r));
    }
    s
}

fn kind_name<T: Serialize>(k: &T) -> String {
    serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// `branch,kind,step,p,lambda,residual,overlap,localization`, one row per
/// branch point; the overlap is empty where a branch starts.
pub fn curves_csv(curves: &[EigenCurve]) -> String {
    let mut s = String::from("branch,kind,step,p,lambda,residual,overlap,localization\n");
    for c in curves {
        let kind = kind_name(&c.kind);
        for q in &c.points {
            let _ = writeln!(
                s,
                "{},{kind},{},{},{},{},{},{}",
                c.id,
                q.step,
                num(q.p),
                num(q.lambda),
                num(q.residual),
                opt(q.overlap),
                opt(q.localization)
            );
        }
    }
    s
}

/// `branch,kind,step,p,trend` for the tagged branches.
pub fn trends_csv(curves: &[EigenCurve], signature: &Signature) -> String {
    let mut s = String::from("branch,kind,step,p,trend\n");
    for c in curves.iter().filter(|c| c.kind != crate::bifurcation::CurveKind::Other) {
        for q in &c.points {
            let t = signature.trends[c.id][q.step].map_or_else(String::new, |t: Trend| kind_name(&t));
            let _ = writeln!(s, "{},{},{},{},{t}", c.id, kind_name(&c.kind), q.step, num(q.p));
        }
    }
    s
}

#[derive(Serialize)]
struct Events<'a> {
    crossings: &'a [CrossingEvent],
    flags: &'a [Flag],
    dominance: &'a [bool],
}

pub fn events_json(crossings: &[CrossingEvent], flags: &[Flag], dominance: &[bool]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Events { crossings, flags, dominance })? + "\n")
}

pub fn steps_json(steps: &[StepSummary]) -> Result<String> {
    Ok(serde_json::to_string_pretty(steps)? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Rect;

    #[test]
    fn field_rows_carry_box_centers() {
        let bp = BoxPartition::new(Rect::unit(), 2).unwrap();
        let csv = field_csv(Some(&bp), &[1.0, 2.0, 3.0, 4.0]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "box,x,y,value");
        assert_eq!(lines[2], "1,0.75,0.25,2");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -0.25, 9.55952956422002e-15, 1e20, 0.9877091376732955] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.5e-15), "1.5e-15");
    }

    #[test]
    fn discard_removes_what_was_written() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("run");
        let mut out = OutputDir::create(&root).unwrap();
        out.write_text("a.txt", "x").unwrap();
        out.write_text("sub/b.txt", "y").unwrap();
        assert!(root.join("sub/b.txt").exists());
        out.discard();
        assert!(!root.exists());
    }
}

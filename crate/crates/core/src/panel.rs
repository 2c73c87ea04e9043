//! Longitudinal panel data: the in-memory model, JSONL persistence, splits
//! and batching.
//!
//! A data file `<name>.jsonl` holds one unit per line:
//!
//! ```text
//! {"id": 0, "x": [[..d_x..], ..T..], "w": [0, 1, ..], "y": [..], "y1": [..], "y0": [..], "tau": [..], "u": [..], "cluster": 1}
//! ```
//!
//! The optional keys (`y1`, `y0`, `tau`, `u`, `cluster`) are omitted when the
//! dataset does not carry them. A sidecar `<name>.meta.json` records
//! `{"n", "T", "d_x", "d_u", "generator", "seed"}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, Purpose};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing metadata sidecar {0}")]
    MissingSidecar(PathBuf),
    #[error("malformed record at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-binary treatment at unit {unit}, step {t}: {value}")]
    NonBinaryTreatment { unit: usize, t: usize, value: f64 },
    #[error("consistency violation at unit {unit}, step {t}: y={y} but w*y1+(1-w)*y0={expected}")]
    Consistency { unit: usize, t: usize, y: f64, expected: f64 },
    #[error("ite mismatch at unit {unit}, step {t}: tau != y1 - y0")]
    TauMismatch { unit: usize, t: usize },
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("empty index set")]
    EmptyIndex,
    #[error("batch size must be at least 1")]
    BatchSize,
}

pub type Result<T> = std::result::Result<T, PanelError>;

/// Where a dataset came from: the generator's full configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub generator: serde_json::Value,
    pub seed: u64,
}

/// `n` units observed over `T` steps.
///
/// Tensors are unit-major: `x[[i, t, j]]`, `w[[i, t]]`, `y[[i, t]]`.
/// Treatments are stored as `0.0`/`1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub x: Array3<f64>,
    pub w: Array2<f64>,
    pub y: Array2<f64>,
    pub y1: Option<Array2<f64>>,
    pub y0: Option<Array2<f64>>,
    pub tau: Option<Array2<f64>>,
    pub u: Option<Array2<f64>>,
    pub cluster: Option<Vec<i64>>,
    pub meta: Provenance,
}

impl PanelDataset {
    pub fn n(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn steps(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn d_x(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn d_u(&self) -> Option<usize> {
        self.u.as_ref().map(|u| u.ncols())
    }

    /// Checks every invariant: shapes, binary treatment, finiteness,
    /// exact consistency and `tau == y1 - y0`.
    pub fn validate(&self) -> Result<()> {
        let (n, steps) = (self.n(), self.steps());
        let check_shape = |name: &str, a: &Array2<f64>| {
            if a.dim() != (n, steps) {
                Err(PanelError::Dimension(format!(
                    "{name} has shape {:?}, expected ({n}, {steps})",
                    a.dim()
                )))
            } else {
                Ok(())
            }
        };
        check_shape("w", &self.w)?;
        check_shape("y", &self.y)?;
        for (name, a) in [("y1", &self.y1), ("y0", &self.y0), ("tau", &self.tau)] {
            if let Some(a) = a {
                check_shape(name, a)?;
            }
        }
        if let Some(u) = &self.u {
            if u.nrows() != n {
                return Err(PanelError::Dimension(format!("u has {} rows, expected {n}", u.nrows())));
            }
        }
        if let Some(c) = &self.cluster {
            if c.len() != n {
                return Err(PanelError::Dimension(format!("cluster has {} entries, expected {n}", c.len())));
            }
        }
        if self.y1.is_some() != self.y0.is_some() {
            return Err(PanelError::Dimension("y1 and y0 must be present together".into()));
        }

        if !self.x.iter().all(|v| v.is_finite()) {
            return Err(PanelError::NonFinite("x"));
        }
        for (name, a) in [
            ("y", Some(&self.y)),
            ("y1", self.y1.as_ref()),
            ("y0", self.y0.as_ref()),
            ("tau", self.tau.as_ref()),
            ("u", self.u.as_ref()),
        ] {
            if let Some(a) = a {
                if !a.iter().all(|v| v.is_finite()) {
                    return Err(PanelError::NonFinite(name));
                }
            }
        }

        for ((i, t), &v) in self.w.indexed_iter() {
            if v != 0.0 && v != 1.0 {
                return Err(PanelError::NonBinaryTreatment { unit: i, t, value: v });
            }
        }

        if let (Some(y1), Some(y0)) = (&self.y1, &self.y0) {
            for ((i, t), &y) in self.y.indexed_iter() {
                let w = self.w[[i, t]];
                let expected = w * y1[[i, t]] + (1.0 - w) * y0[[i, t]];
                if y != expected {
                    return Err(PanelError::Consistency { unit: i, t, y, expected });
                }
            }
            if let Some(tau) = &self.tau {
                for ((i, t), &v) in tau.indexed_iter() {
                    if v != y1[[i, t]] - y0[[i, t]] {
                        return Err(PanelError::TauMismatch { unit: i, t });
                    }
                }
            }
        }
        Ok(())
    }

    /// Copies out the units in `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> PanelDataset {
        PanelDataset {
            x: self.x.select(Axis(0), idx),
            w: self.w.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
            y1: self.y1.as_ref().map(|a| a.select(Axis(0), idx)),
            y0: self.y0.as_ref().map(|a| a.select(Axis(0), idx)),
            tau: self.tau.as_ref().map(|a| a.select(Axis(0), idx)),
            u: self.u.as_ref().map(|a| a.select(Axis(0), idx)),
            cluster: self.cluster.as_ref().map(|c| idx.iter().map(|&i| c[i]).collect()),
            meta: self.meta.clone(),
        }
    }
}

#[derive(Serialize)]
struct UnitOut<'a> {
    id: usize,
    x: Vec<Vec<f64>>,
    w: Vec<u8>,
    y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y1: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster: Option<&'a i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitIn {
    #[allow(dead_code)]
    id: usize,
    x: Vec<Vec<f64>>,
    w: Vec<f64>,
    y: Vec<f64>,
    y1: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
    tau: Option<Vec<f64>>,
    u: Option<Vec<f64>>,
    cluster: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    #[serde(rename = "T")]
    steps: usize,
    d_x: usize,
    d_u: Option<usize>,
    generator: serde_json::Value,
    seed: u64,
}

/// `data/run.jsonl` -> `data/run.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".jsonl").unwrap_or(&name);
    path.with_file_name(format!("{stem}.meta.json"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PanelError + '_ {
    move |source| PanelError::Io { path: path.to_path_buf(), source }
}

pub fn save_dataset(d: &PanelDataset, path: &Path) -> Result<()> {
    let row = |a: &Option<Array2<f64>>, i: usize| a.as_ref().map(|a| a.row(i).to_vec());
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for i in 0..d.n() {
        let unit = UnitOut {
            id: i,
            x: d.x.index_axis(Axis(0), i).outer_iter().map(|r| r.to_vec()).collect(),
            w: d.w.row(i).iter().map(|&v| v as u8).collect(),
            y: d.y.row(i).to_vec(),
            y1: row(&d.y1, i),
            y0: row(&d.y0, i),
            tau: row(&d.tau, i),
            u: row(&d.u, i),
            cluster: d.cluster.as_ref().map(|c| &c[i]),
        };
        let line = serde_json::to_string(&unit).expect("unit record serializes");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;

    let meta_path = sidecar_path(path);
    let sidecar = Sidecar {
        n: d.n(),
        steps: d.steps(),
        d_x: d.d_x(),
        d_u: d.d_u(),
        generator: d.meta.generator.clone(),
        seed: d.meta.seed,
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&meta_path, text).map_err(io_err(&meta_path))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<PanelDataset> {
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Err(PanelError::MissingSidecar(meta_path));
    }
    let meta_text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Sidecar = serde_json::from_str(&meta_text)
        .map_err(|e| PanelError::Parse { line: 0, msg: format!("sidecar: {e}") })?;

    let (n, steps, d_x) = (meta.n, meta.steps, meta.d_x);
    let mut x = Array3::zeros((n, steps, d_x));
    let mut w = Array2::zeros((n, steps));
    let mut y = Array2::zeros((n, steps));
    let mut y1 = None;
    let mut y0 = None;
    let mut tau = None;
    let mut u = None;
    let mut clusters: Vec<Option<i64>> = Vec::with_capacity(n);

    let file = File::open(path).map_err(io_err(path))?;
    let mut count = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let i = count;
        if i >= n {
            return Err(PanelError::Dimension(format!("more than n={n} data lines")));
        }
        let rec: UnitIn = serde_json::from_str(&line)
            .map_err(|e| PanelError::Parse { line: lineno + 1, msg: e.to_string() })?;
        let dim = |what: &str, got: usize, want: usize| {
            if got != want {
                Err(PanelError::Dimension(format!("unit {i}: {what} has length {got}, expected {want}")))
            } else {
                Ok(())
            }
        };
        dim("x", rec.x.len(), steps)?;
        for (t, xt) in rec.x.iter().enumerate() {
            dim("x[t]", xt.len(), d_x)?;
            for (j, &v) in xt.iter().enumerate() {
                x[[i, t, j]] = v;
            }
        }
        dim("w", rec.w.len(), steps)?;
        dim("y", rec.y.len(), steps)?;
        for t in 0..steps {
            w[[i, t]] = rec.w[t];
            y[[i, t]] = rec.y[t];
        }
        let fill = |slot: &mut Option<Array2<f64>>, v: Option<Vec<f64>>, name: &str, width: usize| -> Result<()> {
            match (v, i == 0) {
                (Some(v), first) => {
                    dim(name, v.len(), width)?;
                    if first {
                        *slot = Some(Array2::zeros((n, width)));
                    }
                    let a = slot.as_mut().ok_or_else(|| {
                        PanelError::Dimension(format!("unit {i}: `{name}` present but absent on unit 0"))
                    })?;
                    a.row_mut(i).iter_mut().zip(v).for_each(|(d, s)| *d = s);
                    Ok(())
                }
                (None, _) if slot.is_some() => {
                    Err(PanelError::Dimension(format!("unit {i}: `{name}` missing but present on unit 0")))
                }
                (None, _) => Ok(()),
            }
        };
        fill(&mut y1, rec.y1, "y1", steps)?;
        fill(&mut y0, rec.y0, "y0", steps)?;
        fill(&mut tau, rec.tau, "tau", steps)?;
        fill(&mut u, rec.u, "u", meta.d_u.unwrap_or(0))?;
        clusters.push(rec.cluster);
        count += 1;
    }
    if count != n {
        return Err(PanelError::Dimension(format!("sidecar says n={n} but file has {count} units")));
    }
    let cluster = if clusters.iter().all(Option::is_some) && n > 0 {
        Some(clusters.into_iter().flatten().collect())
    } else if clusters.iter().all(Option::is_none) {
        None
    } else {
        return Err(PanelError::Dimension("`cluster` present on some units only".into()));
    };
    let d = PanelDataset {
        x,
        w,
        y,
        y1,
        y0,
        tau,
        u,
        cluster,
        meta: Provenance { generator: meta.generator, seed: meta.seed },
    };
    d.validate()?;
    Ok(d)
}

/// Disjoint train/validation/test unit indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

/// Random partition of the units with sizes `round(f * n)` for train and
/// validation and the remainder for test.
pub fn split_dataset(d: &PanelDataset, fractions: (f64, f64, f64), seed: u64) -> Result<DataSplit> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(PanelError::Split(format!("fractions {fractions:?} must be positive and sum to 1")));
    }
    let n = d.n();
    let n_train = (ft * n as f64).round() as usize;
    let n_val = (fv * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(PanelError::Split(format!("n={n} too small for fractions {fractions:?}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, Purpose::Split, 0));
    let test_idx = order.split_off(n_train + n_val);
    let val_idx = order.split_off(n_train);
    Ok(DataSplit { train_idx: order, val_idx, test_idx, seed })
}

/// Whole trajectories of a subset of units, gathered into dense tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub units: Vec<usize>,
    pub x: Array3<f64>,
    pub w: Array2<f64>,
    pub y: Array2<f64>,
}

impl Batch {
    pub fn gather(d: &PanelDataset, units: &[usize]) -> Batch {
        Batch {
            units: units.to_vec(),
            x: d.x.select(Axis(0), units),
            w: d.w.select(Axis(0), units),
            y: d.y.select(Axis(0), units),
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.x.shape()[1]
    }
}

/// Shuffles `idx` (deterministically per `(seed, epoch)`) and cuts it into
/// consecutive batches of at most `batch_size` units.
pub fn make_batches(d: &PanelDataset, idx: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(PanelError::BatchSize);
    }
    if idx.is_empty() {
        return Err(PanelError::EmptyIndex);
    }
    let mut order = idx.to_vec();
    order.shuffle(&mut substream(seed, Purpose::Shuffle, epoch));
    Ok(order.chunks(batch_size).map(|c| Batch::gather(d, c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};

    fn toy(n: usize, steps: usize, d_x: usize) -> PanelDataset {
        let x = Array::from_shape_fn((n, steps, d_x), |(i, t, j)| (i * 100 + t * 10 + j) as f64 * 0.1 + 1.0 / 3.0);
        let w = Array2::from_shape_fn((n, steps), |(i, t)| ((i + t) % 2) as f64);
        let y1 = Array2::from_shape_fn((n, steps), |(i, t)| (i as f64).sin() + t as f64 / 7.0);
        let y0 = Array2::from_shape_fn((n, steps), |(i, t)| (i as f64).cos() - t as f64 / 11.0);
        let y = Array2::from_shape_fn((n, steps), |(i, t)| if w[[i, t]] == 1.0 { y1[[i, t]] } else { y0[[i, t]] });
        let tau = &y1 - &y0;
        PanelDataset {
            x,
            w,
            y,
            y1: Some(y1),
            y0: Some(y0),
            tau: Some(tau),
            u: Some(Array2::from_shape_fn((n, 2), |(i, k)| i as f64 * 1e-3 - k as f64)),
            cluster: Some((0..n as i64).map(|i| i % 2 + 1).collect()),
            meta: Provenance { generator: serde_json::json!({"kind": "toy"}), seed: 3 },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.jsonl");
        let d = toy(7, 5, 3);
        save_dataset(&d, &path).unwrap();
        assert!(dir.path().join("toy.meta.json").exists());
        let back = load_dataset(&path).unwrap();
        assert_eq!(d, back);
        for (a, b) in d.x.iter().zip(back.x.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_dataset_has_no_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let d = PanelDataset {
            x: Array3::zeros((0, 4, 2)),
            w: Array2::zeros((0, 4)),
            y: Array2::zeros((0, 4)),
            y1: None,
            y0: None,
            tau: None,
            u: None,
            cluster: None,
            meta: Provenance::default(),
        };
        save_dataset(&d, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert_eq!(load_dataset(&path).unwrap(), d);
    }

    #[test]
    fn minimal_dataset_is_one_line_with_three_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("min.jsonl");
        let d = PanelDataset {
            x: Array3::from_elem((1, 1, 1), 0.5),
            w: array![[1.0]],
            y: array![[2.5]],
            y1: None,
            y0: None,
            tau: None,
            u: None,
            cluster: None,
            meta: Provenance::default(),
        };
        save_dataset(&d, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim(), r#"{"id":0,"x":[[0.5]],"w":[1],"y":[2.5]}"#);
        let back = load_dataset(&path).unwrap();
        assert!(back.y1.is_none() && back.tau.is_none() && back.u.is_none() && back.cluster.is_none());
        assert_eq!(back, d);
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_dataset(&path), Err(PanelError::MissingSidecar(_))));
    }

    fn corrupt(edit: impl Fn(&mut serde_json::Value)) -> PanelError {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_dataset(&toy(3, 5, 2), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        edit(&mut lines[0]);
        let text: String = lines.iter().map(|v| format!("{v}\n")).collect();
        std::fs::write(&path, text).unwrap();
        load_dataset(&path).unwrap_err()
    }

    #[test]
    fn non_binary_treatment_is_rejected() {
        let err = corrupt(|v| v["w"][3] = serde_json::json!(2));
        assert!(err.to_string().contains("non-binary treatment"), "{err}");
    }

    #[test]
    fn consistency_violation_is_rejected() {
        let err = corrupt(|v| {
            let y = v["y"][1].as_f64().unwrap();
            v["y"][1] = serde_json::json!(y + 1.0);
        });
        assert!(err.to_string().contains("consistency violation"), "{err}");
    }

    #[test]
    fn ragged_lines_are_rejected() {
        let err = corrupt(|v| v["x"][2].as_array_mut().unwrap().push(serde_json::json!(1.0)));
        assert!(matches!(err, PanelError::Dimension(_)), "{err}");
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let d = toy(100, 2, 1);
        let s = split_dataset(&d, (0.7, 0.15, 0.15), 7).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (70, 15, 15));
        assert_eq!(s, split_dataset(&d, (0.7, 0.15, 0.15), 7).unwrap());
        let mut all: Vec<usize> = s.train_idx.iter().chain(&s.val_idx).chain(&s.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_ne!(s, split_dataset(&d, (0.7, 0.15, 0.15), 8).unwrap());
    }

    #[test]
    fn full_scale_split() {
        let d = PanelDataset {
            x: Array3::zeros((10_000, 1, 1)),
            w: Array2::zeros((10_000, 1)),
            y: Array2::zeros((10_000, 1)),
            y1: None,
            y0: None,
            tau: None,
            u: None,
            cluster: None,
            meta: Provenance::default(),
        };
        let s = split_dataset(&d, (0.7, 0.15, 0.15), 0).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (7000, 1500, 1500));
    }

    #[test]
    fn split_rejects_tiny_panels() {
        assert!(split_dataset(&toy(2, 2, 1), (0.7, 0.15, 0.15), 0).is_err());
        assert!(split_dataset(&toy(50, 2, 1), (0.7, 0.2, 0.2), 0).is_err());
    }

    #[test]
    fn batches_cover_units_once() {
        let d = toy(130, 3, 1);
        let idx: Vec<usize> = (0..130).collect();
        let b = make_batches(&d, &idx, 128, 1, 0).unwrap();
        assert_eq!(b.iter().map(Batch::len).collect::<Vec<_>>(), vec![128, 2]);
        assert_eq!(make_batches(&d, &idx, 500, 1, 0).unwrap().len(), 1);
        assert!(make_batches(&d, &[], 4, 1, 0).is_err());
        assert!(make_batches(&d, &idx, 0, 1, 0).is_err());

        let e0: Vec<usize> = make_batches(&d, &idx, 16, 9, 0).unwrap().into_iter().flat_map(|b| b.units).collect();
        let e1: Vec<usize> = make_batches(&d, &idx, 16, 9, 1).unwrap().into_iter().flat_map(|b| b.units).collect();
        assert_ne!(e0, e1);
        let (mut s0, mut s1) = (e0.clone(), e1.clone());
        s0.sort_unstable();
        s1.sort_unstable();
        assert_eq!(s0, idx);
        assert_eq!(s1, idx);
    }

    #[test]
    fn batch_rows_match_dataset() {
        let d = toy(10, 4, 2);
        let b = Batch::gather(&d, &[7, 2]);
        assert_eq!(b.y.row(0), d.y.row(7));
        assert_eq!(b.x.index_axis(Axis(0), 1), d.x.index_axis(Axis(0), 2));
    }
}

//! Multi-view datasets, missing-view masks and the observed-sample views the
//! solver consumes.
//!
//! On disk a dataset is a directory holding `manifest.json`, one CSV per view
//! (one row per sample, `d_v` comma-separated values) and a label CSV with
//! one integer per sample. Internally each view is stored `d_v × n`
//! (features × samples).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Complete multi-view data with ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    name: String,
    views: Vec<DMatrix<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl MultiViewDataset {
    pub fn new(name: impl Into<String>, views: Vec<DMatrix<f64>>, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if views.is_empty() {
            return Err(Error::Data("dataset has no views".into()));
        }
        for (v, x) in views.iter().enumerate() {
            if x.ncols() != n {
                return Err(Error::Data(format!("view {v} has {} samples, expected {n}", x.ncols())));
            }
            if x.nrows() == 0 {
                return Err(Error::Data(format!("view {v} has no features")));
            }
            if x.iter().any(|a| !a.is_finite()) {
                return Err(Error::Data(format!("view {v} contains non-finite values")));
            }
        }
        let n_classes = labels.iter().collect::<BTreeSet<_>>().len();
        if n_classes < 2 {
            return Err(Error::Data(format!(
                "labels name {n_classes} class(es); need at least 2"
            )));
        }
        Ok(Self {
            name: name.into(),
            views,
            labels,
            n_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.views.len()
    }

    /// Number of distinct ground-truth classes.
    pub fn c(&self) -> usize {
        self.n_classes
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.nrows()).collect()
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &DMatrix<f64> {
        &self.views[v]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub c: usize,
    pub dims: Vec<usize>,
    pub view_files: Vec<String>,
    pub label_file: String,
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: line {}: {e}", path.display(), line + 1)))?;
        rows.push(record.iter().map(|f| f.trim().to_owned()).collect());
    }
    Ok(rows)
}

fn parse_field<T: FromStr>(path: &Path, row: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Data(format!("{}: row {}: cannot parse {field:?}", path.display(), row + 1)))
}

/// Reads a `n × d` sample-per-row CSV into a `d × n` matrix.
fn read_view(path: &Path, n: usize, d: usize) -> Result<DMatrix<f64>> {
    let rows = read_csv_rows(path)?;
    if rows.len() != n {
        return Err(Error::Data(format!(
            "{}: {} rows, manifest declares n = {n}",
            path.display(),
            rows.len()
        )));
    }
    let mut x = DMatrix::zeros(d, n);
    for (j, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Data(format!(
                "{}: row {} has {} values, manifest declares d = {d}",
                path.display(),
                j + 1,
                row.len()
            )));
        }
        for (i, field) in row.iter().enumerate() {
            x[(i, j)] = parse_field(path, j, field)?;
        }
    }
    Ok(x)
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<MultiViewDataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", manifest_path.display())))?;
    if manifest.n == 0 {
        return Err(Error::Data("empty dataset".into()));
    }
    if manifest.dims.len() != manifest.m || manifest.view_files.len() != manifest.m {
        return Err(Error::Data(format!(
            "manifest declares m = {} but lists {} dims and {} view files",
            manifest.m,
            manifest.dims.len(),
            manifest.view_files.len()
        )));
    }
    let views = manifest
        .view_files
        .iter()
        .zip(&manifest.dims)
        .map(|(file, &d)| read_view(&dir.join(file), manifest.n, d))
        .collect::<Result<Vec<_>>>()?;

    let label_path = dir.join(&manifest.label_file);
    let labels: Vec<usize> = read_csv_rows(&label_path)?
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().filter(|f| !f.is_empty()).map(move |f| (r, f)))
        .map(|(r, f)| parse_field(&label_path, r, f))
        .collect::<Result<_>>()?;
    if labels.len() != manifest.n {
        return Err(Error::Data(format!(
            "{}: {} labels, manifest declares n = {}",
            label_path.display(),
            labels.len(),
            manifest.n
        )));
    }
    let ds = MultiViewDataset::new(manifest.name, views, labels)?;
    if ds.c() != manifest.c {
        return Err(Error::Data(format!(
            "labels contain {} classes, manifest declares c = {}",
            ds.c(),
            manifest.c
        )));
    }
    Ok(ds)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `ds` in the canonical directory format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_dataset(ds: &MultiViewDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let view_files: Vec<String> = (0..ds.m()).map(|v| format!("view{v}.csv")).collect();
    for (x, file) in ds.views().iter().zip(&view_files) {
        let mut out = String::new();
        for j in 0..x.ncols() {
            let row: Vec<String> = x.column(j).iter().map(|a| format!("{a:?}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        write_file(&dir.join(file), &out)?;
    }
    let labels: String = ds.labels().iter().map(|l| format!("{l}\n")).collect();
    write_file(&dir.join("labels.csv"), &labels)?;
    let manifest = Manifest {
        name: ds.name().to_owned(),
        n: ds.n(),
        m: ds.m(),
        c: ds.c(),
        dims: ds.dims(),
        view_files,
        label_file: "labels.csv".into(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &(json + "\n"))
}

/// Which samples are observed in which view (`n × m`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingMask {
    present: Vec<bool>,
    n: usize,
    m: usize,
}

impl MissingMask {
    pub fn full(n: usize, m: usize) -> Self {
        Self {
            present: vec![true; n * m],
            n,
            m,
        }
    }

    /// Builds a mask from per-sample rows; every sample must keep a view.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut present = Vec::with_capacity(n * m);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Data(format!(
                    "mask row {j} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if !row.iter().any(|&p| p) {
                return Err(Error::Infeasible(format!("sample {j} is missing from every view")));
            }
            present.extend_from_slice(row);
        }
        Ok(Self { present, n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_present(&self, sample: usize, view: usize) -> bool {
        self.present[sample * self.m + view]
    }

    /// Presence flags of every sample in view `v`.
    pub fn view_column(&self, v: usize) -> Vec<bool> {
        (0..self.n).map(|j| self.is_present(j, v)).collect()
    }

    /// Observed sample count `n_v` of view `v`.
    pub fn view_count(&self, v: usize) -> usize {
        (0..self.n).filter(|&j| self.is_present(j, v)).count()
    }

    /// Samples missing from at least one view.
    pub fn incomplete_count(&self) -> usize {
        (0..self.n)
            .filter(|&j| (0..self.m).any(|v| !self.is_present(j, v)))
            .count()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = read_csv_rows(path)?
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .map(|f| match f.as_str() {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        other => Err(Error::Data(format!(
                            "{}: row {}: mask entry {other:?} is not 0/1",
                            path.display(),
                            r + 1
                        ))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::with_capacity(self.n * (2 * self.m));
        for j in 0..self.n {
            let row: Vec<&str> = (0..self.m)
                .map(|v| if self.is_present(j, v) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        write_file(path.as_ref(), &out)
    }
}

/// Marks `round(rate·n)` random samples incomplete; each loses a uniformly
/// random nonempty proper subset of its views.
pub fn apply_missing(ds: &MultiViewDataset, rate: f64, seed: u64) -> Result<MissingMask> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("missing rate {rate} outside [0, 1)")));
    }
    let (n, m) = (ds.n(), ds.m());
    let count = (rate * n as f64).round() as usize;
    let mut mask = MissingMask::full(n, m);
    if count == 0 {
        return Ok(mask);
    }
    if m < 2 {
        return Err(Error::Infeasible(format!(
            "missing rate {rate} needs at least two views, dataset has {m}"
        )));
    }
    if m >= 64 {
        return Err(Error::Infeasible(format!("{m} views exceed the supported 63")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proper_subsets = (1u64 << m) - 2;
    for j in sample(&mut rng, n, count) {
        // bit v set ⇒ view v removed; 0 and all-ones excluded
        let removed = rng.random_range(1..=proper_subsets);
        for v in 0..m {
            if removed >> v & 1 == 1 {
                mask.present[j * m + v] = false;
            }
        }
    }
    for v in 0..m {
        let n_v = mask.view_count(v);
        if n_v < ds.c() {
            return Err(Error::Infeasible(format!(
                "view {v} keeps {n_v} samples, fewer than the {} classes",
                ds.c()
            )));
        }
    }
    Ok(mask)
}

/// Observed part of one view and its map back to global sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteView {
    /// `d_v × n_v`, observed samples in ascending global order.
    pub x_o: DMatrix<f64>,
    /// Global id of each observed column; strictly increasing.
    pub index: Vec<usize>,
    /// Total sample count `n`.
    pub n: usize,
}

impl IncompleteView {
    pub fn d(&self) -> usize {
        self.x_o.nrows()
    }

    pub fn n_observed(&self) -> usize {
        self.index.len()
    }

    pub fn present(&self) -> Vec<bool> {
        let mut p = vec![false; self.n];
        for &j in &self.index {
            p[j] = true;
        }
        p
    }

    /// The 0/1 index matrix `A` (n_v × n) with `A[i, index[i]] = 1`.
    pub fn index_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.index.len(), self.n);
        for (i, &j) in self.index.iter().enumerate() {
            a[(i, j)] = 1.0;
        }
        a
    }

    /// `X_o A`: observed columns at their global positions, zeros elsewhere.
    pub fn scatter(&self) -> DMatrix<f64> {
        scatter_columns(&self.x_o, &self.index, self.n)
    }
}

/// Places column `i` of `x` at column `index[i]` of a `rows × n` zero matrix.
pub fn scatter_columns(x: &DMatrix<f64>, index: &[usize], n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), n);
    for (i, &j) in index.iter().enumerate() {
        out.set_column(j, &x.column(i));
    }
    out
}

pub fn build_incomplete_views(ds: &MultiViewDataset, mask: &MissingMask) -> Result<Vec<IncompleteView>> {
    if mask.n() != ds.n() || mask.m() != ds.m() {
        return Err(Error::Shape(format!(
            "mask is {}×{}, dataset has n = {} and m = {}",
            mask.n(),
            mask.m(),
            ds.n(),
            ds.m()
        )));
    }
    Ok((0..ds.m())
        .map(|v| {
            let index: Vec<usize> = (0..ds.n()).filter(|&j| mask.is_present(j, v)).collect();
            IncompleteView {
                x_o: ds.view(v).select_columns(&index),
                index,
                n: ds.n(),
            }
        })
        .collect())
}

/// Scales every sample column of every view to unit ℓ2 norm.
pub fn normalize_features(ds: &MultiViewDataset) -> MultiViewDataset {
    let views = ds
        .views()
        .iter()
        .map(|x| {
            let mut x = x.clone();
            for mut col in x.column_iter_mut() {
                let norm = col.norm();
                if norm > 0.0 {
                    col /= norm;
                }
            }
            x
        })
        .collect();
    MultiViewDataset { views, ..ds.clone() }
}

/// Gaussian multi-view mixture: `classes:per_class:views:d1,d2,...:noise`.
///
/// Each class gets a random latent centre of dimension `2·classes`; view `v`
/// maps the latent through a random `d_v × latent` matrix and adds isotropic
/// Gaussian noise with standard deviation `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dims: Vec<usize>,
    pub noise: f64,
}

impl SyntheticSpec {
    pub fn views(&self) -> usize {
        self.dims.len()
    }

    pub fn latent_dim(&self) -> usize {
        2 * self.classes
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.per_class == 0 {
            return Err(Error::Config("need at least one sample per class".into()));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::Config(format!("invalid view dimensions {:?}", self.dims)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("invalid noise level {}", self.noise)));
        }
        Ok(())
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || {
            Error::Config(format!(
                "synthetic spec {s:?} is not classes:per_class:views:d1,d2,...:noise"
            ))
        };
        if parts.len() != 5 {
            return Err(bad());
        }
        let classes = parts[0].trim().parse().map_err(|_| bad())?;
        let per_class = parts[1].trim().parse().map_err(|_| bad())?;
        let views: usize = parts[2].trim().parse().map_err(|_| bad())?;
        let dims = parts[3]
            .split(',')
            .map(|d| d.trim().parse())
            .collect::<std::result::Result<Vec<usize>, _>>()
            .map_err(|_| bad())?;
        let noise = parts[4].trim().parse().map_err(|_| bad())?;
        if dims.len() != views {
            return Err(Error::Config(format!(
                "synthetic spec lists {} dims for {views} views",
                dims.len()
            )));
        }
        let spec = Self {
            classes,
            per_class,
            dims,
            noise,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Draws a synthetic dataset; samples are ordered class by class.
pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<MultiViewDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = spec.latent_dim();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = spec.classes * spec.per_class;
    let centers = DMatrix::from_fn(q, spec.classes, |_, _| std_normal.sample(&mut rng));
    let labels: Vec<usize> = (0..n).map(|j| j / spec.per_class).collect();
    let latent = DMatrix::from_fn(q, n, |i, j| centers[(i, labels[j])]);
    let map_scale = 1.0 / (q as f64).sqrt();
    let views = spec
        .dims
        .iter()
        .map(|&d| {
            let map = DMatrix::from_fn(d, q, |_, _| map_scale * std_normal.sample(&mut rng));
            let mut x = map * &latent;
            if spec.noise > 0.0 {
                for a in x.iter_mut() {
                    *a += spec.noise * std_normal.sample(&mut rng);
                }
            }
            x
        })
        .collect();
    MultiViewDataset::new(format!("synthetic-{seed}"), views, labels)
}

//! Experiment runner: seeded repetitions over missing rates, parameter grids
//! and model variants; per-run records, summary tables and graph dumps; and
//! the kNN-graph subsampling demonstration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{spectral_cluster, DEFAULT_RESTARTS};
use crate::dataset::{
    apply_missing, build_incomplete_views, load_dataset, make_synthetic, normalize_features, MissingMask,
    MultiViewDataset, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, ari, nmi};
use crate::solver::{write_trace_csv, FusedGraph, HyperParams, SolveOutput, Solver, Variant, WInit};

pub const DEFAULT_LAMBDA_GRID: [f64; 9] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
pub const DEFAULT_THETA_GRID: [f64; 8] = [0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const DEFAULT_K_GRID: [usize; 10] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

/// Offsets added to `seed0 + repeat` for each random stream of a run.
pub const MASK_SEED_OFFSET: u64 = 0;
pub const SOLVER_SEED_OFFSET: u64 = 1000;
pub const KMEANS_SEED_OFFSET: u64 = 2000;
pub const DATA_SEED_OFFSET: u64 = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    /// Directory with a manifest, one CSV per view and a label CSV.
    Dir(PathBuf),
    /// Freshly drawn for every repeat from the data seed.
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub missing_rates: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub variants: Vec<Variant>,
    pub repeats: usize,
    pub seed0: u64,
    /// Scale every sample to unit norm within each view.
    pub normalize: bool,
    pub kmeans_restarts: usize,
    /// Solver settings; `lambda`, `theta` and `k` are overridden per grid point.
    pub solver: HyperParams,
    /// Directory for traces and graph dumps; nothing is written when `None`.
    pub out: Option<PathBuf>,
    pub write_traces: bool,
    pub dump_graphs: bool,
}

impl ExperimentConfig {
    /// Default grids and missing rates, full model only, 20 repeats.
    pub fn new(source: DataSource) -> Self {
        Self {
            source,
            missing_rates: vec![0.1, 0.3, 0.5, 0.7],
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            theta_grid: DEFAULT_THETA_GRID.to_vec(),
            k_grid: DEFAULT_K_GRID.to_vec(),
            variants: vec![Variant::Full],
            repeats: 20,
            seed0: 0,
            normalize: true,
            kmeans_restarts: DEFAULT_RESTARTS,
            solver: HyperParams::new(1.0, 1.0, 10),
            out: None,
            write_traces: false,
            dump_graphs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        for (name, empty) in [
            ("missing_rates", self.missing_rates.is_empty()),
            ("lambda_grid", self.lambda_grid.is_empty()),
            ("theta_grid", self.theta_grid.is_empty()),
            ("k_grid", self.k_grid.is_empty()),
            ("variants", self.variants.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
        }
        if let Some(r) = self.missing_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("missing rate {r} outside [0, 1)")));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be ≥ 1".into()));
        }
        if (self.write_traces || self.dump_graphs) && self.out.is_none() {
            return Err(Error::Config("traces and graph dumps need an output directory".into()));
        }
        for &lambda in &self.lambda_grid {
            for &theta in &self.theta_grid {
                for &k in &self.k_grid {
                    HyperParams {
                        lambda,
                        theta,
                        k,
                        ..self.solver.clone()
                    }
                    .validate()?;
                }
            }
        }
        Ok(())
    }

    /// Grid points in output order: rate, then λ, θ, k, variant.
    pub fn points(&self) -> Vec<ConfigPoint> {
        let mut out = Vec::new();
        for &missing_rate in &self.missing_rates {
            for &lambda in &self.lambda_grid {
                for &theta in &self.theta_grid {
                    for &k in &self.k_grid {
                        for &variant in &self.variants {
                            out.push(ConfigPoint {
                                missing_rate,
                                lambda,
                                theta,
                                k,
                                variant,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn seeds(&self, repeat: usize) -> RunSeeds {
        let base = self.seed0.wrapping_add(repeat as u64);
        RunSeeds {
            mask: base.wrapping_add(MASK_SEED_OFFSET),
            solver: base.wrapping_add(SOLVER_SEED_OFFSET),
            kmeans: base.wrapping_add(KMEANS_SEED_OFFSET),
            data: base.wrapping_add(DATA_SEED_OFFSET),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub missing_rate: f64,
    pub lambda: f64,
    pub theta: f64,
    pub k: usize,
    pub variant: Variant,
}

impl ConfigPoint {
    fn file_stem(&self) -> String {
        format!(
            "rate{}_lambda{}_theta{}_k{}_{}",
            self.missing_rate, self.lambda, self.theta, self.k, self.variant
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub mask: u64,
    pub solver: u64,
    pub kmeans: u64,
    /// Only used for synthetic sources.
    pub data: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub point: ConfigPoint,
    pub repeat: usize,
    pub seeds: RunSeeds,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

impl RunRecord {
    /// Everything except wall time, which is the only nondeterministic field.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.point == other.point
            && self.repeat == other.repeat
            && self.seeds == other.seeds
            && self.acc.to_bits() == other.acc.to_bits()
            && self.nmi.to_bits() == other.nmi.to_bits()
            && self.ari.to_bits() == other.ari.to_bits()
            && self.iterations == other.iterations
            && self.converged == other.converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: ConfigPoint,
    pub runs: usize,
    pub acc: MeanStd,
    pub nmi: MeanStd,
    pub ari: MeanStd,
    pub converged_runs: usize,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub summary: Vec<SummaryRow>,
    pub records: Vec<RunRecord>,
}

/// Labels, scores and solver output of one clustering run.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub labels: Vec<usize>,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub output: SolveOutput,
}

/// Solves, clusters the fused graph into the dataset's class count and scores.
pub fn evaluate(
    ds: &MultiViewDataset,
    mask: &MissingMask,
    hp: &HyperParams,
    variant: Variant,
    restarts: usize,
    kmeans_seed: u64,
) -> Result<Evaluation> {
    let views = build_incomplete_views(ds, mask)?;
    let output = Solver::new(&views, hp.clone(), variant)?.run()?;
    let labels = spectral_cluster(&output.h, ds.c(), restarts, kmeans_seed)?;
    Ok(Evaluation {
        acc: accuracy(&labels, ds.labels())?,
        nmi: nmi(&labels, ds.labels())?,
        ari: ari(&labels, ds.labels())?,
        labels,
        output,
    })
}

fn load_source(cfg: &ExperimentConfig, data_seed: u64) -> Result<MultiViewDataset> {
    let ds = match &cfg.source {
        DataSource::Dir(dir) => load_dataset(dir)?,
        DataSource::Synthetic(spec) => make_synthetic(spec, data_seed)?,
    };
    Ok(if cfg.normalize { normalize_features(&ds) } else { ds })
}

fn run_one(
    cfg: &ExperimentConfig,
    cached: Option<&MultiViewDataset>,
    point: &ConfigPoint,
    repeat: usize,
) -> Result<RunRecord> {
    let seeds = cfg.seeds(repeat);
    let start = Instant::now();
    let owned;
    let ds = match cached {
        Some(ds) => ds,
        None => {
            owned = load_source(cfg, seeds.data)?;
            &owned
        }
    };
    let mask = apply_missing(ds, point.missing_rate, seeds.mask)?;
    let mut hp = HyperParams {
        lambda: point.lambda,
        theta: point.theta,
        k: point.k,
        ..cfg.solver.clone()
    };
    if let WInit::Random(_) = hp.w_init {
        hp.w_init = WInit::Random(seeds.solver);
    }
    let eval = evaluate(ds, &mask, &hp, point.variant, cfg.kmeans_restarts, seeds.kmeans)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    if let Some(out) = &cfg.out {
        let stem = format!("{}_r{repeat}", point.file_stem());
        if cfg.write_traces {
            let dir = out.join("traces");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_trace_csv(&eval.output.state.residual_trace, dir.join(format!("{stem}.csv")))?;
        }
        if cfg.dump_graphs {
            let dir = out.join("graphs");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            dump_graph(&eval.output.h, dir.join(format!("{stem}.csv")))?;
        }
    }
    Ok(RunRecord {
        point: *point,
        repeat,
        seeds,
        acc: eval.acc,
        nmi: eval.nmi,
        ari: eval.ari,
        iterations: eval.output.state.iter,
        converged: eval.output.converged,
        wall_time_s,
    })
}

/// Means and deviations per grid point, in grid order.
pub fn summarize(points: &[ConfigPoint], records: &[RunRecord]) -> Vec<SummaryRow> {
    points
        .iter()
        .filter_map(|point| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.point == *point).collect();
            if runs.is_empty() {
                return None;
            }
            let col = |f: fn(&RunRecord) -> f64| MeanStd::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
            Some(SummaryRow {
                point: *point,
                runs: runs.len(),
                acc: col(|r| r.acc),
                nmi: col(|r| r.nmi),
                ari: col(|r| r.ari),
                converged_runs: runs.iter().filter(|r| r.converged).count(),
                mean_iterations: runs.iter().map(|r| r.iterations as f64).sum::<f64>() / runs.len() as f64,
            })
        })
        .collect()
}

/// Runs every (grid point, repeat) pair. Runs execute in parallel; records
/// come back sorted by grid point, then repeat.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    // a directory dataset is loaded once and shared across runs
    let shared = match cfg.source {
        DataSource::Dir(_) => Some(load_source(cfg, 0)?),
        DataSource::Synthetic(_) => None,
    };
    let dataset = match (&shared, &cfg.source) {
        (Some(ds), _) => ds.name().to_string(),
        (None, DataSource::Synthetic(spec)) => format!(
            "synthetic {}x{} views {:?} noise {}",
            spec.classes, spec.per_class, spec.dims, spec.noise
        ),
        (None, DataSource::Dir(_)) => unreachable!(),
    };
    let points = cfg.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.repeats).map(move |r| (p, r)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(p, r)| run_one(cfg, shared.as_ref(), &points[p], r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        dataset,
        config: cfg.clone(),
        summary: summarize(&points, &records),
        records,
    })
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const RUNS_FILE: &str = "runs.csv";

/// Writes `summary.json` (config plus summary rows) and `runs.csv`.
pub fn write_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        dataset: &'a str,
        config: &'a ExperimentConfig,
        summary: &'a [SummaryRow],
    }
    let json = serde_json::to_string_pretty(&Summary {
        dataset: &report.dataset,
        config: &report.config,
        summary: &report.summary,
    })
    .map_err(|e| Error::Data(format!("serializing summary: {e}")))?;
    let path = dir.join(SUMMARY_FILE);
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(RUNS_FILE);
    let csv_err = |e: csv::Error| Error::Data(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record([
        "missing_rate",
        "lambda",
        "theta",
        "k",
        "variant",
        "repeat",
        "mask_seed",
        "solver_seed",
        "kmeans_seed",
        "data_seed",
        "acc",
        "nmi",
        "ari",
        "iterations",
        "converged",
        "wall_time_s",
    ])
    .map_err(csv_err)?;
    for r in &report.records {
        w.write_record([
            format!("{:?}", r.point.missing_rate),
            format!("{:?}", r.point.lambda),
            format!("{:?}", r.point.theta),
            r.point.k.to_string(),
            r.point.variant.to_string(),
            r.repeat.to_string(),
            r.seeds.mask.to_string(),
            r.seeds.solver.to_string(),
            r.seeds.kmeans.to_string(),
            r.seeds.data.to_string(),
            format!("{:?}", r.acc),
            format!("{:?}", r.nmi),
            format!("{:?}", r.ari),
            r.iterations.to_string(),
            r.converged.to_string(),
            format!("{:?}", r.wall_time_s),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Summary as text: one block per missing rate, scores in percent.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dataset: {}", report.dataset);
    let mut rates: Vec<f64> = Vec::new();
    for row in &report.summary {
        if !rates.contains(&row.point.missing_rate) {
            rates.push(row.point.missing_rate);
        }
    }
    let pct = |m: MeanStd| format!("{:6.2}±{:5.2}", 100.0 * m.mean, 100.0 * m.std);
    for rate in rates {
        let _ = writeln!(out, "\nmissing rate {rate}");
        let _ = writeln!(
            out,
            "{:<8}{:>8}{:>8}{:>6}  {:>13}  {:>13}  {:>13}  {:>5}",
            "variant", "lambda", "theta", "k", "ACC(%)", "NMI(%)", "ARI(%)", "conv"
        );
        for row in report.summary.iter().filter(|r| r.point.missing_rate == rate) {
            let p = &row.point;
            let _ = writeln!(
                out,
                "{:<8}{:>8}{:>8}{:>6}  {}  {}  {}  {:>2}/{:<2}",
                p.variant.to_string(),
                p.lambda,
                p.theta,
                p.k,
                pct(row.acc),
                pct(row.nmi),
                pct(row.ari),
                row.converged_runs,
                row.runs
            );
        }
    }
    out
}

/// Writes `H` row-major as CSV with 17 significant digits, which round-trips.
pub fn dump_graph(h: &FusedGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let h = h.matrix();
    let mut out = String::with_capacity(h.len() * 24);
    for row in h.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`dump_graph`].
pub fn load_graph(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Data(format!("{}: ragged rows", path.display())));
    }
    Ok(DMatrix::from_row_iterator(n, cols, rows.into_iter().flatten()))
}

/// Undirected kNN edges `(i, j)` with `i < j`, sorted. Points are rows; an
/// edge exists when either endpoint is among the other's `k` nearest
/// neighbours by Euclidean distance, ties broken by lower index.
pub fn knn_graph(points: &DMatrix<f64>, k: usize) -> Result<Vec<(usize, usize)>> {
    let n = points.nrows();
    if k >= n {
        return Err(Error::Config(format!("k = {k} must be below the point count {n}")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("kNN points".into()));
    }
    let mut edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((points.row(i) - points.row(j)).norm_squared(), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.truncate(k);
            others.into_iter().map(move |(_, j)| (i.min(j), i.max(j)))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// Fraction of edges joining different classes; 0 for an empty edge list.
pub fn inter_class_fraction(edges: &[(usize, usize)], labels: &[usize]) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    edges.iter().filter(|&&(i, j)| labels[i] != labels[j]).count() as f64 / edges.len() as f64
}

pub fn write_edges_csv(edges: &[(usize, usize)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("source,target\n");
    for (i, j) in edges {
        let _ = writeln!(out, "{i},{j}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Three unit-variance Gaussian blobs in the plane, centred on an equilateral
/// triangle with the given side; samples ordered blob by blob.
pub fn three_blobs(per_blob: usize, side: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = side * 3f64.sqrt() / 2.0;
    let centers = [(0.0, 0.0), (side, 0.0), (side / 2.0, h)];
    let n = 3 * per_blob;
    let labels: Vec<usize> = (0..n).map(|i| i / per_blob).collect();
    let mut points = DMatrix::zeros(n, 2);
    for i in 0..n {
        let (cx, cy) = centers[labels[i]];
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        points[(i, 0)] = cx + dx;
        points[(i, 1)] = cy + dy;
    }
    (points, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnDemo {
    pub points: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub full_edges: Vec<(usize, usize)>,
    /// Ascending ids of the kept points.
    pub kept: Vec<usize>,
    /// Edges over positions in `kept`.
    pub sub_edges: Vec<(usize, usize)>,
    pub full_fraction: f64,
    pub sub_fraction: f64,
}

/// kNN graphs of the blob sample before and after keeping `keep` random points.
pub fn knn_subsample_demo(per_blob: usize, side: f64, keep: usize, k: usize, seed: u64) -> Result<KnnDemo> {
    let (points, labels) = three_blobs(per_blob, side, seed);
    let full_edges = knn_graph(&points, k)?;
    let n = points.nrows();
    if keep > n {
        return Err(Error::Config(format!("cannot keep {keep} of {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut kept = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    kept.sort_unstable();
    let sub_points = points.select_rows(&kept);
    let sub_labels: Vec<usize> = kept.iter().map(|&i| labels[i]).collect();
    let sub_edges = knn_graph(&sub_points, k)?;
    Ok(KnnDemo {
        full_fraction: inter_class_fraction(&full_edges, &labels),
        sub_fraction: inter_class_fraction(&sub_edges, &sub_labels),
        points,
        labels,
        full_edges,
        kept,
        sub_edges,
    })
}

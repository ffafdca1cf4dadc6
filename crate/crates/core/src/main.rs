use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jpltd::dataset::{make_synthetic, save_dataset, SyntheticSpec};
use jpltd::harness::{
    knn_subsample_demo, render_table, run_experiment, write_edges_csv, write_report, DataSource, ExperimentConfig,
};
use jpltd::solver::{TnnScale, Variant, WUpdate};
use jpltd::Error;

#[derive(Parser)]
#[command(
    name = "jpltd",
    version,
    about = "Incomplete multi-view clustering with tensor graph recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid and write summary.json and runs.csv.
    Run(Box<RunArgs>),
    /// Write a synthetic dataset in the directory format read by `run --data`.
    Generate {
        #[arg(long)]
        synthetic: SyntheticSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// kNN graphs of three planar blobs before and after random subsampling.
    Knn {
        #[arg(long, default_value_t = 100)]
        per_blob: usize,
        /// Distance between blob centres.
        #[arg(long, default_value_t = 2.5)]
        side: f64,
        #[arg(long, default_value_t = 150)]
        keep: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for points.csv, edges_full.csv and edges_sub.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// classes:per_class:views:d1,d2,...:noise
    #[arg(long)]
    synthetic: Option<SyntheticSpec>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7])]
    missing_rate: Vec<f64>,
    /// Defaults to the full λ grid.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Defaults to the full θ grid.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    /// Defaults to the full latent dimension grid.
    #[arg(long, value_delimiter = ',')]
    latent_k: Vec<usize>,
    /// full, n, b or o
    #[arg(long, value_delimiter = ',', default_value = "full")]
    variant: Vec<Variant>,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Keep raw feature scales instead of unit-norm samples.
    #[arg(long)]
    no_normalize: bool,
    /// Write per-run residual traces under OUT/traces.
    #[arg(long)]
    trace: bool,
    /// Write per-run fused graphs under OUT/graphs.
    #[arg(long)]
    dump_graph: bool,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// normalized or unnormalized
    #[arg(long, default_value = "normalized", value_parser = ["normalized", "unnormalized"])]
    tnn_scale: String,
    /// closed-form or exact
    #[arg(long, default_value = "closed-form", value_parser = ["closed-form", "exact"])]
    w_update: String,
}

impl RunArgs {
    fn into_config(self) -> ExperimentConfig {
        let source = match (self.data, self.synthetic) {
            (Some(dir), _) => DataSource::Dir(dir),
            (None, Some(spec)) => DataSource::Synthetic(spec),
            (None, None) => unreachable!("clap requires one source"),
        };
        let mut cfg = ExperimentConfig::new(source);
        cfg.missing_rates = self.missing_rate;
        if !self.lambda.is_empty() {
            cfg.lambda_grid = self.lambda;
        }
        if !self.theta.is_empty() {
            cfg.theta_grid = self.theta;
        }
        if !self.latent_k.is_empty() {
            cfg.k_grid = self.latent_k;
        }
        cfg.variants = self.variant;
        cfg.repeats = self.repeats;
        cfg.seed0 = self.seed;
        cfg.normalize = !self.no_normalize;
        cfg.kmeans_restarts = self.restarts;
        cfg.solver.max_iter = self.max_iter;
        cfg.solver.eps = self.eps;
        cfg.solver.tnn_scale = if self.tnn_scale == "unnormalized" {
            TnnScale::Unnormalized
        } else {
            TnnScale::Normalized
        };
        cfg.solver.w_update = if self.w_update == "exact" {
            WUpdate::Exact
        } else {
            WUpdate::ClosedForm
        };
        cfg.out = Some(self.out);
        cfg.write_traces = self.trace;
        cfg.dump_graphs = self.dump_graph;
        cfg
    }
}

fn execute(command: Command) -> jpltd::Result<()> {
    match command {
        Command::Run(args) => {
            let cfg = (*args).into_config();
            let report = run_experiment(&cfg)?;
            write_report(&report, cfg.out.as_ref().expect("set from --out"))?;
            print!("{}", render_table(&report));
        }
        Command::Generate { synthetic, seed, out } => {
            save_dataset(&make_synthetic(&synthetic, seed)?, out)?;
        }
        Command::Knn {
            per_blob,
            side,
            keep,
            k,
            seed,
            out,
        } => {
            let demo = knn_subsample_demo(per_blob, side, keep, k, seed)?;
            println!("inter-class edge fraction, all points: {:.4}", demo.full_fraction);
            println!("inter-class edge fraction, subsample:  {:.4}", demo.sub_fraction);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let mut pts = String::from("id,x,y,label,kept\n");
                for i in 0..demo.points.nrows() {
                    pts.push_str(&format!(
                        "{i},{:?},{:?},{},{}\n",
                        demo.points[(i, 0)],
                        demo.points[(i, 1)],
                        demo.labels[i],
                        demo.kept.binary_search(&i).is_ok()
                    ));
                }
                let path = dir.join("points.csv");
                std::fs::write(&path, pts).map_err(|e| Error::Io { path, source: e })?;
                write_edges_csv(&demo.full_edges, dir.join("edges_full.csv"))?;
                // subsample edges in original point ids
                let sub: Vec<(usize, usize)> = demo
                    .sub_edges
                    .iter()
                    .map(|&(a, b)| (demo.kept[a], demo.kept[b]))
                    .collect();
                write_edges_csv(&sub, dir.join("edges_sub.csv"))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Shape(_) => ExitCode::from(2),
                e if e.is_data_error() => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linknas::config::{PartialConfig, RunConfig};
use linknas::diagnostics::gradcheck_suite;
use linknas::run::{evaluate_seed_dir, execute, summary_table};
use linknas::supernet::{DerivedArchitecture, TaskKind};
use linknas::tasks::metrics::{read_csv_rows, CsvRow};
use linknas::tasks::{EvalSplit, MetricsReport};
use linknas::Error;

#[derive(Parser)]
#[command(name = "linknas", version, about = "Differentiable architecture search for message-passing graph networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search, derive and retrain for every seed.
    Search(RunArgs),
    /// Retrain a given architecture for every seed.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Architecture JSON produced by `search`.
        #[arg(long)]
        arch: PathBuf,
    },
    /// Re-evaluate the trained model of a seed directory.
    Eval {
        /// A `seed-<s>` directory written by `search` or `train`.
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = "test")]
        split: EvalSplit,
    },
    /// Finite-difference check of every operation and of small supernets.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate per-seed metrics CSVs into mean/std tables and curves.
    Report {
        /// CSV files or directories searched recursively for `metrics.csv`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for `summary.csv` and `curves.csv`; stdout only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    dataset_name: Option<String>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    arch_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    search_epochs: Option<usize>,
    #[arg(long)]
    retrain_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    tau_final: Option<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Ablation flag; repeatable.
    #[arg(long = "ablation")]
    ablations: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long)]
    eval_batch: Option<usize>,
}

impl RunArgs {
    /// Flags over environment over file over defaults.
    fn resolve(self) -> linknas::Result<RunConfig> {
        let file = match &self.config {
            Some(p) => PartialConfig::load(p)?,
            None => PartialConfig::default(),
        };
        let flags = PartialConfig {
            task: self.task,
            dataset: self.dataset,
            dataset_name: self.dataset_name,
            features: self.features,
            labels: self.labels,
            dim: self.dim,
            layers: self.layers,
            lr: self.lr,
            arch_lr: self.arch_lr,
            batch_size: self.batch_size,
            dropout: self.dropout,
            search_epochs: self.search_epochs,
            retrain_epochs: self.retrain_epochs,
            patience: self.patience,
            tau0: self.tau0,
            tau_final: self.tau_final,
            seeds: self.seeds,
            ablations: (!self.ablations.is_empty()).then_some(self.ablations),
            output_dir: self.output_dir,
            hops: self.hops,
            dmax: self.dmax,
            label_smoothing: None,
            max_degree: None,
            eval_batch: self.eval_batch,
        };
        file.overlay(PartialConfig::from_env()).overlay(flags).resolve()
    }
}

fn print_report(report: &MetricsReport) {
    for (m, mean) in &report.mean {
        println!(
            "{} {} {m}: {mean:.4} ± {:.4} (n = {})",
            report.dataset, report.task, report.std[m], report.n
        );
    }
}

fn run_search(args: RunArgs, arch: Option<&Path>) -> linknas::Result<()> {
    let cfg = args.resolve()?;
    let arch = arch.map(DerivedArchitecture::load).transpose()?;
    let out = execute(&cfg, arch.as_ref())?;
    for r in &out.runs {
        println!("seed {}: {}", r.seed, serde_json::to_string(&r.architecture.slots)?);
    }
    print_report(&out.report);
    println!("artifacts in {}", out.dir.display());
    Ok(())
}

fn gradcheck(eps: f64, tol: f64, seed: u64) -> linknas::Result<bool> {
    let results = gradcheck_suite(seed, eps)?;
    let worst = results.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    for c in &results {
        let mark = if c.max_rel_err <= tol { "ok" } else { "FAIL" };
        println!("{mark:4} {:<16} {:.3e}", c.name, c.max_rel_err);
    }
    let pass = worst <= tol;
    println!(
        "{} checks, max rel err {worst:.3e} {} {tol:e}",
        results.len(),
        if pass { "≤" } else { ">" }
    );
    Ok(pass)
}

fn collect_csvs(p: &Path, out: &mut Vec<PathBuf>) -> linknas::Result<()> {
    if p.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            if e.is_dir() {
                collect_csvs(&e, out)?;
            } else if e.file_name().is_some_and(|n| n == "metrics.csv") {
                out.push(e);
            }
        }
    } else {
        out.push(p.to_path_buf());
    }
    Ok(())
}

fn report(inputs: &[PathBuf], out: Option<&Path>) -> linknas::Result<()> {
    let mut files = Vec::new();
    for p in inputs {
        collect_csvs(p, &mut files)?;
    }
    if files.is_empty() {
        return Err(Error::Config("no metrics.csv files found".into()));
    }
    let mut rows: Vec<CsvRow> = Vec::new();
    for f in &files {
        rows.extend(read_csv_rows(f)?);
    }
    let reports = MetricsReport::from_csv_rows(&rows)?;
    let table = summary_table(&reports);
    print!("{table}");
    if let Some(dir) = out {
        let io = |path: &Path, e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let summary = dir.join("summary.csv");
        std::fs::write(&summary, &table).map_err(|e| io(&summary, e))?;
        // search curves next to each metrics file, tagged with their seed directory
        let mut curves = String::from("run,epoch,tau,train_loss,val_metric\n");
        for f in &files {
            let Some(parent) = f.parent() else { continue };
            let curve = parent.join("search_curve.csv");
            if let Ok(text) = std::fs::read_to_string(&curve) {
                for line in text.lines().skip(1) {
                    curves.push_str(&format!("{},{line}\n", parent.display()));
                }
            }
        }
        let path = dir.join("curves.csv");
        std::fs::write(&path, curves).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> linknas::Result<bool> {
    match cli.command {
        Command::Search(args) => run_search(args, None).map(|_| true),
        Command::Train { run, arch } => run_search(run, Some(&arch)).map(|_| true),
        Command::Eval { run_dir, split } => {
            let m = evaluate_seed_dir(&run_dir, split)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(true)
        }
        Command::Gradcheck { eps, tol, seed } => gradcheck(eps, tol, seed),
        Command::Report { inputs, out } => report(&inputs, out.as_deref()).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

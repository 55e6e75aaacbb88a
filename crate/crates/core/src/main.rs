use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lbc::harness::config::KEYS;
use lbc::harness::{self, ExperimentConfig};
use lbc::Result;

/// Learning-by-confusion experiments: simulate or ingest gridded data,
/// train single- and multi-task confusion classifiers, and benchmark them.
#[derive(Parser, Debug)]
#[command(name = "lbc", version, about, after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the Ising model on the configured grid and write samples.lbcd
    Sample(Common),
    /// Validate a CSV or binary dataset and store it as dataset.lbcd
    Ingest {
        /// Input file (.csv: grid_index,f0,f1,...; anything else: binary)
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train confusion classifiers and write curves, summary, plots and checkpoints
    Run(Common),
    /// Time K single-task trainings against one multi-task training
    Benchmark(Common),
    /// Exact partition function and averages of a small lattice
    Oracle {
        /// Lattice side length (2 to 4)
        #[arg(long, default_value_t = 3)]
        lattice: usize,
        /// Temperatures, comma-separated
        #[arg(long, value_delimiter = ',', default_value = "1.5,2.27,3.5")]
        temps: Vec<f64>,
        /// Also write exact.csv into this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file with key = value lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// single | multi | both | bayes
    #[arg(long)]
    mode: Option<String>,
    /// Splitting indices, comma-separated, or "all"
    #[arg(long)]
    nodes: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    batch: Option<usize>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Independent training runs
    #[arg(long)]
    runs: Option<usize>,
    /// Summarize each curve by its per-node minimum over epochs
    #[arg(long)]
    min_over_epochs: bool,
    /// Benchmark splitting counts, comma-separated
    #[arg(long)]
    ks: Option<String>,
    /// Benchmark error thresholds, comma-separated
    #[arg(long)]
    thresholds: Option<String>,
    /// Run benchmark single-task trainings concurrently
    #[arg(long)]
    parallel: bool,
    /// Explicit grid values, comma-separated
    #[arg(long)]
    grid: Option<String>,
    /// Skip SVG plots
    #[arg(long)]
    no_plot: bool,
}

fn keys_help() -> String {
    let mut s = String::from("Configuration keys (file or --set KEY=VALUE):\n");
    for (key, doc) in KEYS {
        s.push_str(&format!("  {key:<22} {doc}\n"));
    }
    s
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| lbc::Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags: [(&str, Option<String>); 11] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("nodes", self.nodes.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch.map(|v| v.to_string())),
            ("learning_rate", self.lr.map(|v| v.to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
            ("runs", self.runs.map(|v| v.to_string())),
            ("ks", self.ks.clone()),
            ("thresholds", self.thresholds.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if let Some(g) = &self.grid {
            cfg.set("grid", g)?;
        }
        cfg.min_over_epochs |= self.min_over_epochs;
        cfg.parallel |= self.parallel;
        cfg.plot &= !self.no_plot;
        Ok(cfg)
    }
}

fn init_threads(threads: usize) -> Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| lbc::Error::Usage(format!("cannot start {threads} threads: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(common) => {
            let cfg = common.config()?;
            init_threads(cfg.threads)?;
            let (path, samples) = harness::cmd_sample(&cfg)?;
            println!(
                "wrote {} ({} points x {} samples, {} features)",
                path.display(),
                samples.grid().len(),
                samples.samples_at(0),
                samples.feature_dim()
            );
        }
        Command::Ingest { input, common } => {
            let cfg = common.config()?;
            let (path, dataset) = harness::cmd_ingest(&cfg, &input)?;
            println!(
                "wrote {} ({} points, K = {}, {} features, {} train / {} validation samples)",
                path.display(),
                dataset.grid().len(),
                dataset.n_splittings(),
                dataset.feature_dim(),
                dataset.train.len(),
                dataset.valid.len()
            );
        }
        Command::Run(common) => {
            let cfg = common.config()?;
            init_threads(cfg.threads)?;
            let report = harness::cmd_run(&cfg)?;
            for row in report.summary()?.iter().filter(|r| r.run.is_none()) {
                println!(
                    "{:<6} argmin node {} (boundary {}) error {:.4}{}",
                    row.source,
                    row.node,
                    row.boundary,
                    row.error,
                    if row.tied { " [tied]" } else { "" }
                );
            }
            println!("outputs in {}", cfg.out.display());
        }
        Command::Benchmark(common) => {
            let cfg = common.config()?;
            init_threads(cfg.threads)?;
            let report = harness::cmd_benchmark(&cfg)?;
            print!("{}", report.render());
            println!("outputs in {}", cfg.out.display());
        }
        Command::Oracle { lattice, temps, out } => {
            let table = harness::cmd_oracle(lattice, &temps, out.as_deref())?;
            let mut stdout = std::io::stdout().lock();
            harness::write_exact_csv(&mut stdout, &table)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lbc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

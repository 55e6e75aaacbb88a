use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::plot::{LinePlot, Series};
use super::{build_dataset, create_file, create_out_dir, load_samples, write_text, RunSeeds};
use crate::confusion::{train_multi_task, train_single_task, ParameterGrid, Schedule, TrainOutcome};
use crate::dataset::SampleSet;
use crate::error::{usage, Result};

/// Timings and curves for one splitting count `K`.
#[derive(Debug, Clone)]
pub struct BenchmarkEntry {
    pub k: usize,
    pub grid: ParameterGrid,
    pub epochs: usize,
    pub multi_seconds: f64,
    /// Wall-clock seconds of each single-task training, timed individually.
    pub single_seconds: Vec<f64>,
    /// Wall-clock seconds of the whole single-task phase.
    pub single_wall_seconds: f64,
    pub multi: TrainOutcome,
    /// One outcome per node, in node order.
    pub singles: Vec<TrainOutcome>,
}

impl BenchmarkEntry {
    /// Sequential-equivalent single-task time: the sum of the individual runs.
    pub fn single_total_seconds(&self) -> f64 {
        self.single_seconds.iter().sum()
    }

    /// `(Σ single-task seconds) / (multi-task seconds)`.
    pub fn speedup(&self) -> f64 {
        self.single_total_seconds() / self.multi_seconds
    }

    /// How far the multi-task network falls short of the ideal speedup `K`.
    pub fn overhead(&self) -> f64 {
        self.k as f64 / self.speedup()
    }

    /// `(node, multi-task epochs, single-task epochs)` to reach `threshold`.
    pub fn epochs_to_threshold(&self, threshold: f64) -> Vec<(usize, Option<usize>, Option<usize>)> {
        (0..self.k)
            .map(|node| {
                (node, self.multi.epochs_to_threshold(node, threshold), self.singles[node].epochs_to_threshold(0, threshold))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub entries: Vec<BenchmarkEntry>,
    pub thresholds: Vec<f64>,
    pub threads: usize,
    pub precision: &'static str,
    pub parallel: bool,
}

/// Grid indices that keep every `(n - 1) / k`-th point, giving `k` splittings.
fn subgrid_indices(n_points: usize, k: usize) -> Result<Vec<usize>> {
    let full = n_points - 1;
    if k > full || !full.is_multiple_of(k) {
        return Err(usage!("cannot form {k} splittings from a grid of {n_points} points; k must divide {full}"));
    }
    let stride = full / k;
    Ok((0..=k).map(|i| i * stride).collect())
}

/// Times one multi-task training against `K` single-task trainings at equal
/// epochs and batch size, for each `K` in `cfg.ks` (default: the full grid).
pub fn benchmark(cfg: &ExperimentConfig, samples: &SampleSet) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let n_points = samples.grid().len();
    let ks = cfg.ks.clone().unwrap_or_else(|| vec![n_points - 1]);
    let subgrids = ks.iter().map(|&k| subgrid_indices(n_points, k)).collect::<Result<Vec<_>>>()?;
    let seeds = RunSeeds::new(cfg.seed, 0);
    let schedule = Schedule { epochs: cfg.epochs, batch_size: cfg.batch_size, seed: seeds.batches };
    let mut entries = Vec::with_capacity(ks.len());
    for (&k, indices) in ks.iter().zip(&subgrids) {
        let sub = samples.select_points(indices)?;
        let dataset = build_dataset(&sub, cfg, 0)?;
        let d = dataset.feature_dim();

        let multi_spec = cfg.network(d, k, seeds.init);
        let start = Instant::now();
        let multi = train_multi_task(&dataset, &multi_spec, cfg.adam, schedule)?;
        let multi_seconds = start.elapsed().as_secs_f64();

        let single_spec = cfg.network(d, 1, seeds.init);
        let timed = |node: usize| -> Result<(f64, TrainOutcome)> {
            let start = Instant::now();
            let outcome = train_single_task(&dataset, node, &single_spec, cfg.adam, schedule)?;
            Ok((start.elapsed().as_secs_f64(), outcome))
        };
        let start = Instant::now();
        let results: Vec<(f64, TrainOutcome)> = if cfg.parallel {
            (0..k).into_par_iter().map(timed).collect::<Result<_>>()?
        } else {
            (0..k).map(timed).collect::<Result<_>>()?
        };
        let single_wall_seconds = start.elapsed().as_secs_f64();
        let (single_seconds, singles) = results.into_iter().unzip();
        entries.push(BenchmarkEntry {
            k,
            grid: sub.grid().clone(),
            epochs: cfg.epochs,
            multi_seconds,
            single_seconds,
            single_wall_seconds,
            multi,
            singles,
        });
    }
    Ok(BenchmarkReport {
        entries,
        thresholds: cfg.thresholds.clone(),
        threads: rayon::current_num_threads(),
        precision: "f64",
        parallel: cfg.parallel,
    })
}

impl BenchmarkReport {
    /// Human-readable timing report.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "threads: {}", self.threads);
        let _ = writeln!(s, "precision: {}", self.precision);
        let _ = writeln!(s, "single-task scheduling: {}", if self.parallel { "parallel" } else { "sequential" });
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>4} {:>6} {:>12} {:>14} {:>14} {:>9} {:>9}",
            "K", "epochs", "multi [s]", "single sum [s]", "single wall [s]", "speedup", "overhead"
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:>4} {:>6} {:>12.3} {:>14.3} {:>14.3} {:>9.2} {:>9.2}",
                e.k,
                e.epochs,
                e.multi_seconds,
                e.single_total_seconds(),
                e.single_wall_seconds,
                e.speedup(),
                e.overhead()
            );
        }
        for &t in &self.thresholds {
            let _ = writeln!(s);
            let _ = writeln!(s, "epochs to validation error <= {t}");
            for e in &self.entries {
                let fmt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
                let row: Vec<String> =
                    e.epochs_to_threshold(t).into_iter().map(|(n, m, si)| format!("{n}:{}/{}", fmt(m), fmt(si))).collect();
                let _ = writeln!(s, "  K = {} (node:multi/single): {}", e.k, row.join(" "));
            }
        }
        s
    }
}

/// `k,node,boundary,threshold,multi_epochs,single_epochs`; empty when never reached.
pub fn write_thresholds<W: Write>(w: &mut W, report: &BenchmarkReport) -> Result<()> {
    writeln!(w, "k,node,boundary,threshold,multi_epochs,single_epochs")?;
    let fmt = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    for e in &report.entries {
        for &t in &report.thresholds {
            for (node, m, s) in e.epochs_to_threshold(t) {
                writeln!(w, "{},{node},{},{t},{},{}", e.k, e.multi.splittings[node].boundary, fmt(m), fmt(s))?;
            }
        }
    }
    Ok(())
}

/// Final validation curves of both modes: `k,node,boundary,multi_error,single_error`.
pub fn write_benchmark_curves<W: Write>(w: &mut W, report: &BenchmarkReport) -> Result<()> {
    writeln!(w, "k,node,boundary,multi_error,single_error")?;
    for e in &report.entries {
        let multi = e.multi.final_curve();
        for (node, single) in e.singles.iter().enumerate() {
            writeln!(
                w,
                "{},{node},{},{},{}",
                e.k,
                multi.boundaries()[node],
                multi.errors()[node],
                single.final_curve().errors()[0]
            )?;
        }
    }
    Ok(())
}

/// Runs [`benchmark`] on the configured data and writes `report.txt`,
/// `thresholds.csv`, `benchmark_curves.csv` and optionally `speedup.svg`.
pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let samples = load_samples(cfg)?;
    let report = benchmark(cfg, &samples)?;
    create_out_dir(&cfg.out)?;
    write_text(&cfg.out.join("config.txt"), &cfg.render())?;
    write_text(&cfg.out.join("report.txt"), &report.render())?;
    let mut w = create_file(&cfg.out.join("thresholds.csv"))?;
    write_thresholds(&mut w, &report)?;
    w.flush()?;
    let mut w = create_file(&cfg.out.join("benchmark_curves.csv"))?;
    write_benchmark_curves(&mut w, &report)?;
    w.flush()?;
    if cfg.plot {
        let measured = report.entries.iter().map(|e| (e.k as f64, e.speedup())).collect();
        let ideal = report.entries.iter().map(|e| (e.k as f64, e.k as f64)).collect();
        let plot = LinePlot {
            title: "Multi-task speedup".into(),
            x_label: "splittings K".into(),
            y_label: "single-task time / multi-task time".into(),
            series: vec![Series::new("measured", measured), Series::new("ideal", ideal).dashed()],
            markers: Vec::new(),
        };
        write_text(&cfg.out.join("speedup.svg"), &plot.render())?;
    }
    Ok(report)
}

use std::io::Write;
use std::path::Path;

use super::config::{ExperimentConfig, Mode};
use super::plot::{LinePlot, Series};
use super::{build_dataset, create_file, create_out_dir, load_samples, write_text, RunSeeds};
use crate::confusion::{
    make_splittings, train_multi_task, train_single_task, ConfusionCurve, ParameterGrid, Schedule, TrainOutcome,
};
use crate::dataset::{GriddedDataset, SampleSet};
use crate::error::{usage, Result};
use crate::nn::write_checkpoint;
use crate::oracle::{bayes_error_curve, fit_energy_histograms, partition_energies};
use crate::ISING_CRITICAL_TEMPERATURE;

/// Trained networks and baseline of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub multi: Option<TrainOutcome>,
    /// `(node, outcome)` for every single-task network, in node order.
    pub singles: Vec<(usize, TrainOutcome)>,
    pub bayes: Option<ConfusionCurve>,
}

/// Argmin of one summarized curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `None` for the mean over runs.
    pub run: Option<usize>,
    pub source: &'static str,
    pub node: usize,
    pub boundary: f64,
    pub error: f64,
    pub tied: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub grid: ParameterGrid,
    /// Nodes trained in single-task mode and traced.
    pub nodes: Vec<usize>,
    pub runs: Vec<RunResult>,
    pub min_over_epochs: bool,
}

fn summarize(outcome: &TrainOutcome, min_over_epochs: bool) -> ConfusionCurve {
    if min_over_epochs {
        outcome.min_over_epochs_curve()
    } else {
        outcome.final_curve()
    }
}

impl RunResult {
    /// Multi-task curve of this run (final or min-over-epochs).
    pub fn multi_curve(&self, min_over_epochs: bool) -> Option<ConfusionCurve> {
        self.multi.as_ref().map(|o| summarize(o, min_over_epochs))
    }

    /// Single-task errors as `(node, error)` pairs.
    pub fn single_errors(&self, min_over_epochs: bool) -> Vec<(usize, f64)> {
        self.singles.iter().map(|(k, o)| (*k, summarize(o, min_over_epochs).errors()[0])).collect()
    }
}

impl RunReport {
    /// One curve per source and run, plus the mean over runs.
    pub fn summary(&self) -> Result<Vec<SummaryRow>> {
        let boundaries: Vec<f64> = make_splittings(&self.grid).iter().map(|s| s.boundary).collect();
        let mut rows = Vec::new();
        let mut push = |run: Option<usize>, source: &'static str, nodes: &[usize], curve: &ConfusionCurve| {
            let m = curve.minimum();
            rows.push(SummaryRow { run, source, node: nodes[m.index], boundary: m.boundary, error: m.error, tied: m.tied });
        };
        let all: Vec<usize> = (0..boundaries.len()).collect();
        let (mut multi, mut single, mut bayes) = (Vec::new(), Vec::new(), Vec::new());
        for r in &self.runs {
            if let Some(c) = r.multi_curve(self.min_over_epochs) {
                push(Some(r.run), "multi", &all, &c);
                multi.push(c);
            }
            if !r.singles.is_empty() {
                let errors: Vec<(usize, f64)> = r.single_errors(self.min_over_epochs);
                let c = ConfusionCurve::new(
                    errors.iter().map(|&(k, _)| boundaries[k]).collect(),
                    errors.iter().map(|&(_, e)| e).collect(),
                )?;
                push(Some(r.run), "single", &self.nodes, &c);
                single.push(c);
            }
            if let Some(c) = &r.bayes {
                push(Some(r.run), "bayes", &all, c);
                bayes.push(c.clone());
            }
        }
        for (source, curves, nodes) in [("multi", &multi, &all), ("single", &single, &self.nodes), ("bayes", &bayes, &all)] {
            if !curves.is_empty() {
                push(None, source, nodes, &ConfusionCurve::mean(curves)?);
            }
        }
        Ok(rows)
    }

    /// Mean-over-runs curve of a source (`multi`, `single` or `bayes`), with
    /// the nodes it covers.
    pub fn mean_curve(&self, source: &str) -> Result<Option<(Vec<usize>, ConfusionCurve)>> {
        let boundaries: Vec<f64> = make_splittings(&self.grid).iter().map(|s| s.boundary).collect();
        let all: Vec<usize> = (0..boundaries.len()).collect();
        let curves: Vec<ConfusionCurve> = match source {
            "multi" => self.runs.iter().filter_map(|r| r.multi_curve(self.min_over_epochs)).collect(),
            "bayes" => self.runs.iter().filter_map(|r| r.bayes.clone()).collect(),
            "single" => self
                .runs
                .iter()
                .filter(|r| !r.singles.is_empty())
                .map(|r| {
                    let e = r.single_errors(self.min_over_epochs);
                    ConfusionCurve::new(e.iter().map(|&(k, _)| boundaries[k]).collect(), e.iter().map(|p| p.1).collect())
                })
                .collect::<Result<_>>()?,
            _ => return Err(usage!("unknown curve source {source:?}")),
        };
        if curves.is_empty() {
            return Ok(None);
        }
        let nodes = if source == "single" { self.nodes.clone() } else { all };
        Ok(Some((nodes, ConfusionCurve::mean(&curves)?)))
    }
}

fn bayes_curve(dataset: &GriddedDataset, cfg: &ExperimentConfig) -> Result<ConfusionCurve> {
    let n = dataset.grid().len();
    let model = fit_energy_histograms(&partition_energies(&dataset.train, n)?, cfg.binning)?;
    bayes_error_curve(&model, dataset.grid(), &partition_energies(&dataset.valid, n)?)
}

/// Trains the networks requested by `cfg.mode` for every run on `samples`.
pub fn run_experiment(cfg: &ExperimentConfig, samples: &SampleSet) -> Result<RunReport> {
    cfg.validate()?;
    let grid = samples.grid().clone();
    let k = grid.n_splittings();
    let nodes = match (&cfg.nodes, cfg.mode) {
        (Some(sel), _) => sel.resolve(k)?,
        (None, Mode::Both) => (0..k).collect(),
        (None, _) => Vec::new(),
    };
    let schedule = |seeds: RunSeeds| Schedule { epochs: cfg.epochs, batch_size: cfg.batch_size, seed: seeds.batches };
    let mut runs = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let dataset = build_dataset(samples, cfg, run)?;
        let seeds = RunSeeds::new(cfg.seed, run);
        let bayes = if cfg.mode == Mode::Bayes { Some(bayes_curve(&dataset, cfg)?) } else { None };
        let multi = if cfg.mode.trains_multi() {
            let spec = cfg.network(dataset.feature_dim(), k, seeds.init);
            Some(train_multi_task(&dataset, &spec, cfg.adam, schedule(seeds))?)
        } else {
            None
        };
        let mut singles = Vec::new();
        if cfg.mode.trains_single() {
            let spec = cfg.network(dataset.feature_dim(), 1, seeds.init);
            for &node in &nodes {
                singles.push((node, train_single_task(&dataset, node, &spec, cfg.adam, schedule(seeds))?));
            }
        }
        runs.push(RunResult { run, multi, singles, bayes });
    }
    Ok(RunReport { grid, nodes, runs, min_over_epochs: cfg.min_over_epochs })
}

/// `epoch,node,boundary,train_loss,valid_error,source` for every recorded
/// epoch; Bayes rows have no epoch or loss.
pub fn write_curves<W: Write>(w: &mut W, result: &RunResult) -> Result<()> {
    writeln!(w, "epoch,node,boundary,train_loss,valid_error,source")?;
    let mut outcome_rows = |o: &TrainOutcome, source: &str| -> Result<()> {
        for record in &o.history {
            for (h, split) in o.splittings.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{source}",
                    record.epoch, split.index, split.boundary, record.train_loss[h], record.valid_error[h]
                )?;
            }
        }
        Ok(())
    };
    if let Some(o) = &result.multi {
        outcome_rows(o, "multi")?;
    }
    for (_, o) in &result.singles {
        outcome_rows(o, "single")?;
    }
    if let Some(c) = &result.bayes {
        for (k, (b, e)) in c.boundaries().iter().zip(c.errors()).enumerate() {
            writeln!(w, ",{k},{b},,{e},bayes")?;
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(w: &mut W, rows: &[SummaryRow], min_over_epochs: bool) -> Result<()> {
    let curve = if min_over_epochs { "min_over_epochs" } else { "final" };
    writeln!(w, "run,source,curve,argmin_node,boundary,error,tied")?;
    for r in rows {
        let run = r.run.map_or_else(|| "mean".to_string(), |i| i.to_string());
        let curve = if r.source == "bayes" { "bayes" } else { curve };
        writeln!(w, "{run},{},{curve},{},{},{},{}", r.source, r.node, r.boundary, r.error, r.tied)?;
    }
    Ok(())
}

/// `run,node,epoch,source,valid_error` for the traced nodes.
pub fn write_traces<W: Write>(w: &mut W, report: &RunReport) -> Result<()> {
    writeln!(w, "run,node,epoch,source,valid_error")?;
    for r in &report.runs {
        for &node in &report.nodes {
            if let Some(o) = &r.multi {
                for (epoch, e) in o.trace(node).iter().enumerate() {
                    writeln!(w, "{},{node},{epoch},multi,{e}", r.run)?;
                }
            }
            if let Some((_, o)) = r.singles.iter().find(|(k, _)| *k == node) {
                for (epoch, e) in o.trace(0).iter().enumerate() {
                    writeln!(w, "{},{node},{epoch},single,{e}", r.run)?;
                }
            }
        }
    }
    Ok(())
}

fn curves_plot(report: &RunReport, simulated: bool) -> Result<LinePlot> {
    let boundaries: Vec<f64> = make_splittings(&report.grid).iter().map(|s| s.boundary).collect();
    let mut series = Vec::new();
    for (source, label) in [("multi", "multi-task"), ("single", "single-task"), ("bayes", "Bayes (energy)")] {
        if let Some((nodes, curve)) = report.mean_curve(source)? {
            let points = nodes.iter().zip(curve.errors()).map(|(&k, &e)| (boundaries[k], e)).collect();
            let s = Series::new(label, points);
            series.push(if source == "bayes" { s.dashed() } else { s });
        }
    }
    let markers = if simulated { vec![(ISING_CRITICAL_TEMPERATURE, "Tc".to_string())] } else { Vec::new() };
    let which = if report.min_over_epochs { "minimum over epochs" } else { "final epoch" };
    Ok(LinePlot {
        title: format!("Confusion curve ({which}, mean of {} run(s))", report.runs.len()),
        x_label: "boundary".into(),
        y_label: "balanced validation error".into(),
        series,
        markers,
    })
}

fn traces_plot(report: &RunReport) -> LinePlot {
    let mut series = Vec::new();
    if let Some(r) = report.runs.first() {
        for &node in &report.nodes {
            if let Some(o) = &r.multi {
                let pts = o.trace(node).iter().enumerate().map(|(i, &e)| (i as f64, e)).collect();
                series.push(Series::new(format!("node {node} multi"), pts));
            }
            if let Some((_, o)) = r.singles.iter().find(|(k, _)| *k == node) {
                let pts = o.trace(0).iter().enumerate().map(|(i, &e)| (i as f64, e)).collect();
                series.push(Series::new(format!("node {node} single"), pts).dashed());
            }
        }
    }
    LinePlot {
        title: "Validation error per epoch (run 0)".into(),
        x_label: "epoch".into(),
        y_label: "balanced validation error".into(),
        series,
        markers: Vec::new(),
    }
}

/// Writes every artifact of a finished run into `cfg.out`.
pub fn write_run_outputs(report: &RunReport, cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.out;
    create_out_dir(out)?;
    write_text(&out.join("config.txt"), &cfg.render())?;
    for r in &report.runs {
        let mut w = create_file(&out.join(format!("curves_run{}.csv", r.run)))?;
        write_curves(&mut w, r)?;
        w.flush()?;
    }
    let mut w = create_file(&out.join("summary.csv"))?;
    write_summary(&mut w, &report.summary()?, report.min_over_epochs)?;
    w.flush()?;
    if cfg.nodes.is_some() && !report.nodes.is_empty() {
        let mut w = create_file(&out.join("traces.csv"))?;
        write_traces(&mut w, report)?;
        w.flush()?;
    }
    if cfg.plot {
        write_text(&out.join("curves.svg"), &curves_plot(report, cfg.data.is_none())?.render())?;
        if cfg.nodes.is_some() && !report.nodes.is_empty() {
            write_text(&out.join("traces.svg"), &traces_plot(report).render())?;
        }
    }
    if cfg.checkpoint {
        for r in &report.runs {
            if let Some(o) = &r.multi {
                write_model(&out.join(format!("model_run{}.lbcm", r.run)), o)?;
            }
            for (k, o) in &r.singles {
                write_model(&out.join(format!("model_run{}_node{k}.lbcm", r.run)), o)?;
            }
        }
    }
    Ok(())
}

fn write_model(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut w = create_file(path)?;
    write_checkpoint(&mut w, &outcome.model, Some(&outcome.adam))?;
    w.flush()?;
    Ok(())
}

/// Loads or simulates the data, trains, and writes the run artifacts.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let samples = load_samples(cfg)?;
    if let Some(sel) = &cfg.nodes {
        sel.resolve(samples.grid().n_splittings())?;
    }
    let report = run_experiment(cfg, &samples)?;
    write_run_outputs(&report, cfg)?;
    Ok(report)
}

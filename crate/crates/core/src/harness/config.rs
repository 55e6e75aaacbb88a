//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # desk-scale Ising run
//! lattice = 20
//! grid_min = 1.0
//! grid_max = 3.5
//! grid_points = 21
//! m_train = 500
//! m_valid = 500
//! batch_size = 512
//! learning_rate = 1e-4
//! epochs = 50
//! hidden = 64,32
//! mode = both
//! nodes = 8,9,10
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Every key can be
//! overridden from the command line.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::confusion::ParameterGrid;
use crate::error::{usage, Error, Result};
use crate::ising::SamplerConfig;
use crate::nn::{Activation, AdamConfig, NetworkSpec};
use crate::oracle::Binning;

/// Documented configuration keys, in the order `lbc` prints them.
pub const KEYS: &[(&str, &str)] = &[
    ("data", "dataset file (.csv or binary); empty simulates the Ising model"),
    ("grid", "explicit comma-separated grid values (overrides grid_min/max/points)"),
    ("grid_min", "first grid value"),
    ("grid_max", "last grid value"),
    ("grid_points", "number of grid points (K + 1)"),
    ("lattice", "Ising lattice side length"),
    ("samples_per_point", "simulated samples per grid point (default m_train + m_valid)"),
    ("thermalization_sweeps", "sweeps discarded at each temperature before sampling"),
    ("decorrelation_sweeps", "sweeps between stored samples"),
    ("m_train", "training samples per grid point"),
    ("m_valid", "validation samples per grid point"),
    ("split", "fixed | shuffled (reshuffled for every run)"),
    ("hidden", "hidden layer widths, comma-separated"),
    ("activation", "relu | tanh"),
    ("learning_rate", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("epsilon", "Adam epsilon"),
    ("epochs", "training epochs"),
    ("batch_size", "minibatch size"),
    ("mode", "single | multi | both | bayes"),
    ("nodes", "splitting indices, comma-separated, or all"),
    ("runs", "independent training runs averaged in the summary"),
    ("min_over_epochs", "summarize each curve by its per-node minimum over epochs"),
    ("binning", "energy histogram bins for the Bayes baseline: auto | <width>"),
    ("seed", "master seed"),
    ("threads", "worker threads (0 = all cores)"),
    ("out", "output directory"),
    ("plot", "write SVG plots"),
    ("checkpoint", "write model checkpoints"),
    ("ks", "benchmark splitting counts, comma-separated (default: full grid)"),
    ("thresholds", "benchmark error thresholds, comma-separated"),
    ("parallel", "benchmark runs single-task trainings concurrently"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Multi,
    Both,
    Bayes,
}

impl FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "multi" => Ok(Self::Multi),
            "both" => Ok(Self::Both),
            "bayes" => Ok(Self::Bayes),
            _ => Err(usage!("unknown mode {s:?}, expected single, multi, both or bayes")),
        }
    }
}

impl Mode {
    pub fn trains_single(self) -> bool {
        matches!(self, Self::Single | Self::Both)
    }

    pub fn trains_multi(self) -> bool {
        matches!(self, Self::Multi | Self::Both | Self::Bayes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeSelection {
    All,
    List(Vec<usize>),
}

impl NodeSelection {
    /// Ascending, deduplicated node indices, all below `n_splittings`.
    pub fn resolve(&self, n_splittings: usize) -> Result<Vec<usize>> {
        match self {
            Self::All => Ok((0..n_splittings).collect()),
            Self::List(nodes) => {
                if let Some(&bad) = nodes.iter().find(|&&k| k >= n_splittings) {
                    return Err(usage!("node {bad} outside 0..{n_splittings}"));
                }
                let mut nodes = nodes.clone();
                nodes.sort_unstable();
                nodes.dedup();
                Ok(nodes)
            }
        }
    }
}

impl FromStr for NodeSelection {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(Self::All);
        }
        let nodes = parse_list(s)?;
        if nodes.is_empty() {
            return Err(usage!("empty node list"));
        }
        Ok(Self::List(nodes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Fixed,
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub grid: Option<Vec<f64>>,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub lattice: usize,
    pub samples_per_point: Option<usize>,
    pub thermalization_sweeps: usize,
    pub decorrelation_sweeps: usize,
    pub m_train: usize,
    pub m_valid: usize,
    pub split: SplitKind,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: Mode,
    pub nodes: Option<NodeSelection>,
    pub runs: usize,
    pub min_over_epochs: bool,
    pub binning: Binning,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub plot: bool,
    pub checkpoint: bool,
    pub ks: Option<Vec<usize>>,
    pub thresholds: Vec<f64>,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            grid: None,
            grid_min: 1.0,
            grid_max: 3.5,
            grid_points: 21,
            lattice: 20,
            samples_per_point: None,
            thermalization_sweeps: 100_000,
            decorrelation_sweeps: 10,
            m_train: 500,
            m_valid: 500,
            split: SplitKind::Fixed,
            hidden: vec![64, 32],
            activation: Activation::Relu,
            adam: AdamConfig::with_learning_rate(1e-4),
            epochs: 50,
            batch_size: 512,
            mode: Mode::Multi,
            nodes: None,
            runs: 1,
            min_over_epochs: false,
            binning: Binning::Auto,
            seed: 0,
            threads: 0,
            out: PathBuf::from("lbc-out"),
            plot: true,
            checkpoint: true,
            ks: None,
            thresholds: vec![0.4],
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage!("cannot read config {}: {e}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage!("config line {}: expected key = value, got {line:?}", n + 1))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(usage!("config line {}: duplicate key {key:?}", n + 1));
            }
            seen.push(key);
            self.set(key, value.trim()).map_err(|e| match e {
                Error::Usage(msg) => usage!("config line {}: {msg}", n + 1),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "grid" => self.grid = (!value.is_empty()).then(|| parse_list(value)).transpose()?,
            "grid_min" => self.grid_min = parse(key, value)?,
            "grid_max" => self.grid_max = parse(key, value)?,
            "grid_points" => self.grid_points = parse(key, value)?,
            "lattice" => self.lattice = parse(key, value)?,
            "samples_per_point" => {
                self.samples_per_point = (!value.is_empty()).then(|| parse(key, value)).transpose()?
            }
            "thermalization_sweeps" => self.thermalization_sweeps = parse(key, value)?,
            "decorrelation_sweeps" => self.decorrelation_sweeps = parse(key, value)?,
            "m_train" => self.m_train = parse(key, value)?,
            "m_valid" => self.m_valid = parse(key, value)?,
            "split" => {
                self.split = match value {
                    "fixed" => SplitKind::Fixed,
                    "shuffled" => SplitKind::Shuffled,
                    _ => return Err(usage!("split must be fixed or shuffled, got {value:?}")),
                }
            }
            "hidden" => self.hidden = if value.is_empty() { Vec::new() } else { parse_list(value)? },
            "activation" => self.activation = value.parse()?,
            "learning_rate" => self.adam.learning_rate = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "epsilon" => self.adam.epsilon = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "nodes" => self.nodes = Some(value.parse()?),
            "runs" => self.runs = parse(key, value)?,
            "min_over_epochs" => self.min_over_epochs = parse_bool(key, value)?,
            "binning" => {
                self.binning = if value == "auto" { Binning::Auto } else { Binning::Width(parse(key, value)?) }
            }
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "plot" => self.plot = parse_bool(key, value)?,
            "checkpoint" => self.checkpoint = parse_bool(key, value)?,
            "ks" => self.ks = Some(parse_list(value)?),
            "thresholds" => self.thresholds = parse_list(value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            _ => return Err(usage!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        if self.m_train == 0 || self.m_valid == 0 {
            return Err(usage!("m_train and m_valid must be positive"));
        }
        if self.runs == 0 {
            return Err(usage!("runs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(usage!("batch_size must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(usage!("hidden layer widths must be positive"));
        }
        self.adam.validate()?;
        if self.mode == Mode::Single && self.nodes.is_none() {
            return Err(usage!("mode single needs nodes (a list or all)"));
        }
        if let Some(ks) = &self.ks {
            if ks.is_empty() || ks.contains(&0) {
                return Err(usage!("ks must list positive splitting counts"));
            }
        }
        if let Some(path) = &self.data {
            if !path.is_file() {
                return Err(usage!("data file {} does not exist", path.display()));
            }
        }
        Ok(())
    }

    /// Grid from `grid` if set, else `grid_points` values from `grid_min` to `grid_max`.
    pub fn parameter_grid(&self) -> Result<ParameterGrid> {
        match &self.grid {
            Some(values) => ParameterGrid::new(values.clone()),
            None => ParameterGrid::linspace(self.grid_min, self.grid_max, self.grid_points),
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            side_length: self.lattice,
            thermalization_sweeps: self.thermalization_sweeps,
            decorrelation_sweeps: self.decorrelation_sweeps,
            samples_per_point: self.samples_per_point.unwrap_or(self.m_train + self.m_valid),
        }
    }

    pub fn network(&self, input_dim: usize, output_heads: usize, init_seed: u64) -> NetworkSpec {
        NetworkSpec { input_dim, hidden_layers: self.hidden.clone(), output_heads, activation: self.activation, init_seed }
    }

    /// The effective configuration in the file format, one key per line.
    pub fn render(&self) -> String {
        fn list<T: Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        line("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        line("grid", self.grid.as_deref().map(list).unwrap_or_default());
        line("grid_min", self.grid_min.to_string());
        line("grid_max", self.grid_max.to_string());
        line("grid_points", self.grid_points.to_string());
        line("lattice", self.lattice.to_string());
        line("samples_per_point", self.samples_per_point.map(|m| m.to_string()).unwrap_or_default());
        line("thermalization_sweeps", self.thermalization_sweeps.to_string());
        line("decorrelation_sweeps", self.decorrelation_sweeps.to_string());
        line("m_train", self.m_train.to_string());
        line("m_valid", self.m_valid.to_string());
        line("split", if self.split == SplitKind::Fixed { "fixed" } else { "shuffled" }.into());
        line("hidden", list(&self.hidden));
        line("activation", self.activation.name().into());
        line("learning_rate", self.adam.learning_rate.to_string());
        line("beta1", self.adam.beta1.to_string());
        line("beta2", self.adam.beta2.to_string());
        line("epsilon", self.adam.epsilon.to_string());
        line("epochs", self.epochs.to_string());
        line("batch_size", self.batch_size.to_string());
        let mode = match self.mode {
            Mode::Single => "single",
            Mode::Multi => "multi",
            Mode::Both => "both",
            Mode::Bayes => "bayes",
        };
        line("mode", mode.into());
        let nodes = match &self.nodes {
            None => String::new(),
            Some(NodeSelection::All) => "all".into(),
            Some(NodeSelection::List(v)) => list(v),
        };
        line("nodes", nodes);
        line("runs", self.runs.to_string());
        line("min_over_epochs", self.min_over_epochs.to_string());
        let binning = match self.binning {
            Binning::Auto => "auto".to_string(),
            Binning::Width(w) => w.to_string(),
        };
        line("binning", binning);
        line("seed", self.seed.to_string());
        line("plot", self.plot.to_string());
        line("checkpoint", self.checkpoint.to_string());
        line("ks", self.ks.as_deref().map(list).unwrap_or_default());
        line("thresholds", list(&self.thresholds));
        line("parallel", self.parallel.to_string());
        out
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| usage!("invalid value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(usage!("invalid value {value:?} for {key}: expected true or false")),
    }
}

/// Comma-separated list; surrounding whitespace is ignored.
pub fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| usage!("invalid list entry {s:?}: {e}")))
        .collect()
}

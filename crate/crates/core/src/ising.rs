//! 2D square-lattice Ising model with periodic boundaries, sampled by
//! single-site Metropolis-Hastings updates.
//!
//! Units: `J = k_B = 1`, so temperatures are `k_B T / J` and energies `E / J`.
//! Energy is `E(σ) = -Σ_<ij> σ_i σ_j` with each of the `2L²` nearest-neighbour
//! bonds counted once (right and down neighbour of every site).

use rand::{Rng as _, SeedableRng};

use crate::confusion::ParameterGrid;
use crate::dataset::SampleSet;
use crate::error::{domain, format_err, usage, Result};
use crate::Rng;

/// `L × L` lattice of ±1 spins, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    side: usize,
    spins: Vec<i8>,
}

impl SpinConfiguration {
    /// All spins up.
    pub fn all_up(side: usize) -> Result<Self> {
        Self::filled(side, 1)
    }

    fn filled(side: usize, value: i8) -> Result<Self> {
        if side < 2 {
            return Err(usage!("lattice side length must be at least 2, got {side}"));
        }
        Ok(Self { side, spins: vec![value; side * side] })
    }

    /// Alternating +1/−1 pattern with `+1` at the origin.
    pub fn checkerboard(side: usize) -> Result<Self> {
        let mut config = Self::all_up(side)?;
        for r in 0..side {
            for c in 0..side {
                if (r + c) % 2 == 1 {
                    config.spins[r * side + c] = -1;
                }
            }
        }
        Ok(config)
    }

    /// Builds a configuration from row-major spins; every entry must be ±1.
    pub fn from_spins(side: usize, spins: Vec<i8>) -> Result<Self> {
        if side < 2 {
            return Err(usage!("lattice side length must be at least 2, got {side}"));
        }
        if spins.len() != side * side {
            return Err(usage!("expected {} spins for a {side}x{side} lattice, got {}", side * side, spins.len()));
        }
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(usage!("spin values must be +1 or -1, found {bad}"));
        }
        Ok(Self { side, spins })
    }

    /// Decodes a flattened ±1 feature vector. The lattice must be square.
    pub fn from_features(features: &[f32]) -> Result<Self> {
        let side = (features.len() as f64).sqrt().round() as usize;
        if side * side != features.len() || side < 2 {
            return Err(format_err!("feature length {} is not a square lattice", features.len()));
        }
        let spins = features
            .iter()
            .map(|&x| match x {
                1.0 => Ok(1),
                -1.0 => Ok(-1),
                x => Err(format_err!("feature value {x} is not a spin")),
            })
            .collect::<Result<Vec<i8>>>()?;
        Ok(Self { side, spins })
    }

    /// Row-major ±1.0 encoding fed to the classifiers.
    pub fn to_features(&self) -> Vec<f32> {
        self.spins.iter().map(|&s| f32::from(s)).collect()
    }

    pub fn side_length(&self) -> usize {
        self.side
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, row: usize, col: usize) -> i8 {
        self.spins[row * self.side + col]
    }

    /// Flips one spin in place.
    pub fn flip(&mut self, row: usize, col: usize) -> Result<()> {
        self.check_site(row, col)?;
        let i = row * self.side + col;
        self.spins[i] = -self.spins[i];
        Ok(())
    }

    /// Copy with every spin reversed.
    pub fn flipped_globally(&self) -> Self {
        Self { side: self.side, spins: self.spins.iter().map(|&s| -s).collect() }
    }

    /// Periodic translation by `(dr, dc)` sites.
    pub fn rolled(&self, dr: usize, dc: usize) -> Self {
        let l = self.side;
        let mut spins = vec![0; l * l];
        for r in 0..l {
            for c in 0..l {
                spins[((r + dr) % l) * l + (c + dc) % l] = self.spins[r * l + c];
            }
        }
        Self { side: l, spins }
    }

    fn check_site(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.side || col >= self.side {
            return Err(usage!("site ({row}, {col}) outside a {0}x{0} lattice", self.side));
        }
        Ok(())
    }

    #[inline]
    fn neighbour_sum(&self, row: usize, col: usize) -> i64 {
        let l = self.side;
        let up = (row + l - 1) % l;
        let down = (row + 1) % l;
        let left = (col + l - 1) % l;
        let right = (col + 1) % l;
        i64::from(self.spins[up * l + col])
            + i64::from(self.spins[down * l + col])
            + i64::from(self.spins[row * l + left])
            + i64::from(self.spins[row * l + right])
    }
}

/// `E/J = -Σ_<ij> σ_i σ_j` over the `2L²` periodic bonds.
pub fn energy(config: &SpinConfiguration) -> i64 {
    let l = config.side;
    let s = &config.spins;
    let mut sum = 0i64;
    for r in 0..l {
        let down = ((r + 1) % l) * l;
        for c in 0..l {
            let here = i64::from(s[r * l + c]);
            sum += here * (i64::from(s[r * l + (c + 1) % l]) + i64::from(s[down + c]));
        }
    }
    -sum
}

/// Energy change caused by flipping the spin at `(row, col)`.
pub fn local_energy_delta(config: &SpinConfiguration, row: usize, col: usize) -> Result<i64> {
    config.check_site(row, col)?;
    Ok(2 * i64::from(config.spin(row, col)) * config.neighbour_sum(row, col))
}

/// Mean spin `(1/L²) Σ σ_i`.
pub fn magnetization(config: &SpinConfiguration) -> f64 {
    let total: i64 = config.spins.iter().map(|&s| i64::from(s)).sum();
    total as f64 / config.spins.len() as f64
}

/// Metropolis acceptance probability `min(1, exp(-ΔE / T))`.
pub fn acceptance_probability(delta_energy: f64, temperature: f64) -> f64 {
    if delta_energy <= 0.0 {
        1.0
    } else {
        (-delta_energy / temperature).exp()
    }
}

/// Temperature together with the random stream driving a chain.
#[derive(Debug, Clone)]
pub struct ThermalState {
    temperature: f64,
    rng: Rng,
    // exp(-ΔE/T) for ΔE = 4 and 8, the only positive values on a square lattice
    boltzmann: [f64; 2],
}

impl ThermalState {
    pub fn new(temperature: f64, seed: u64) -> Result<Self> {
        Self::with_rng(temperature, Rng::seed_from_u64(seed))
    }

    pub fn with_rng(temperature: f64, rng: Rng) -> Result<Self> {
        let mut state = Self { temperature: 1.0, rng, boltzmann: [0.0; 2] };
        state.set_temperature(temperature)?;
        Ok(state)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Changes temperature while keeping the random stream position.
    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        if !(temperature > 0.0) {
            return Err(domain!("temperature must be positive, got {temperature}"));
        }
        self.temperature = temperature;
        self.boltzmann = [acceptance_probability(4.0, temperature), acceptance_probability(8.0, temperature)];
        Ok(())
    }

    #[inline]
    fn accept(&mut self, delta: i64) -> bool {
        // always draw, so the stream position does not depend on ΔE
        let u: f64 = self.rng.gen();
        match delta {
            d if d <= 0 => true,
            4 => u < self.boltzmann[0],
            8 => u < self.boltzmann[1],
            d => u < acceptance_probability(d as f64, self.temperature),
        }
    }
}

/// One sweep: `L²` update attempts at independently drawn uniform sites.
/// Returns the number of accepted flips.
pub fn metropolis_sweep(config: &mut SpinConfiguration, state: &mut ThermalState) -> usize {
    let l = config.side;
    let n = l * l;
    let mut accepted = 0;
    for _ in 0..n {
        let site = state.rng.gen_range(0..n);
        let (row, col) = (site / l, site % l);
        let delta = 2 * i64::from(config.spins[site]) * config.neighbour_sum(row, col);
        if state.accept(delta) {
            config.spins[site] = -config.spins[site];
            accepted += 1;
        }
    }
    accepted
}

/// Sweep schedule for collecting samples at each temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub side_length: usize,
    pub thermalization_sweeps: usize,
    /// Sweeps between consecutive collected samples at one temperature.
    pub decorrelation_sweeps: usize,
    pub samples_per_point: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { side_length: 60, thermalization_sweeps: 100_000, decorrelation_sweeps: 10, samples_per_point: 2000 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_point == 0 {
            return Err(usage!("samples per grid point must be at least 1"));
        }
        if self.side_length < 2 {
            return Err(usage!("lattice side length must be at least 2, got {}", self.side_length));
        }
        Ok(())
    }
}

/// Spin configurations collected on a temperature grid.
#[derive(Debug, Clone)]
pub struct IsingSamples {
    pub temperatures: Vec<f64>,
    pub side_length: usize,
    /// `configs[p]` holds the samples taken at `temperatures[p]`, in collection order.
    pub configs: Vec<Vec<SpinConfiguration>>,
}

impl IsingSamples {
    pub fn len(&self) -> usize {
        self.configs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens every configuration into the ±1 feature encoding. Needs at
    /// least two temperatures to form a [`ParameterGrid`].
    pub fn to_sample_set(&self) -> Result<SampleSet> {
        let grid = ParameterGrid::new(self.temperatures.clone())?;
        let dim = self.side_length * self.side_length;
        let points = self
            .configs
            .iter()
            .map(|cs| cs.iter().flat_map(|c| c.spins.iter().map(|&s| f32::from(s))).collect())
            .collect();
        SampleSet::new(grid, dim, points)
    }
}

/// Runs one Metropolis chain over the grid in ascending temperature order.
///
/// The lattice starts all up. At each temperature the chain is thermalized,
/// then `samples_per_point` configurations are recorded with
/// `decorrelation_sweeps` sweeps between them; the final state carries over
/// to the next temperature.
pub fn sample_grid(temperatures: &[f64], sampler: &SamplerConfig, seed: u64) -> Result<IsingSamples> {
    sampler.validate()?;
    if temperatures.is_empty() {
        return Err(usage!("temperature grid is empty"));
    }
    if let Some(&t) = temperatures.iter().find(|&&t| !(t > 0.0)) {
        return Err(domain!("temperatures must be positive, got {t}"));
    }
    if temperatures.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain!("temperature grid must be strictly increasing"));
    }
    let mut config = SpinConfiguration::all_up(sampler.side_length)?;
    let mut state = ThermalState::new(temperatures[0], seed)?;
    let mut configs = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        state.set_temperature(t)?;
        for _ in 0..sampler.thermalization_sweeps {
            metropolis_sweep(&mut config, &mut state);
        }
        let mut here = Vec::with_capacity(sampler.samples_per_point);
        for i in 0..sampler.samples_per_point {
            if i > 0 {
                for _ in 0..sampler.decorrelation_sweeps {
                    metropolis_sweep(&mut config, &mut state);
                }
            }
            here.push(config.clone());
        }
        configs.push(here);
    }
    Ok(IsingSamples { temperatures: temperatures.to_vec(), side_length: sampler.side_length, configs })
}

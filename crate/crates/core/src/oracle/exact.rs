use std::collections::BTreeMap;

use crate::error::{domain, usage, Result};

/// Largest lattice side accepted by [`enumerate_exact`] (2^16 states).
pub const MAX_EXACT_SIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevel {
    pub energy: i64,
    pub degeneracy: u64,
    pub probability: f64,
}

/// Exact Boltzmann distribution of an `L × L` periodic Ising lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEnsemble {
    pub side_length: usize,
    pub temperature: f64,
    /// Attainable energies in ascending order.
    pub levels: Vec<EnergyLevel>,
    log_partition: f64,
    mean_energy: f64,
    mean_energy_sq: f64,
    mean_abs_magnetization: f64,
}

impl ExactEnsemble {
    /// `ln Z` with `Z = Σ_σ exp(-E(σ)/T)`.
    pub fn log_partition_function(&self) -> f64 {
        self.log_partition
    }

    /// `Z`; overflows to infinity for very low temperatures, where
    /// [`Self::log_partition_function`] stays finite.
    pub fn partition_function(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn mean_energy(&self) -> f64 {
        self.mean_energy
    }

    pub fn energy_variance(&self) -> f64 {
        self.mean_energy_sq - self.mean_energy * self.mean_energy
    }

    /// `⟨|Σσ|⟩ / L²`.
    pub fn mean_abs_magnetization(&self) -> f64 {
        self.mean_abs_magnetization
    }

    pub fn state_count(&self) -> u64 {
        self.levels.iter().map(|l| l.degeneracy).sum()
    }
}

/// Brute-force sum over all `2^(L²)` configurations. `temperature` may be
/// `+∞` (uniform distribution).
pub fn enumerate_exact(side_length: usize, temperature: f64) -> Result<ExactEnsemble> {
    if side_length < 2 {
        return Err(usage!("lattice side length must be at least 2, got {side_length}"));
    }
    if side_length > MAX_EXACT_SIDE {
        return Err(usage!("exact enumeration is limited to L <= {MAX_EXACT_SIDE}, got {side_length}"));
    }
    if !(temperature > 0.0) {
        return Err(domain!("temperature must be positive, got {temperature}"));
    }
    let l = side_length;
    let n = l * l;
    // (energy, |total spin|) -> number of states
    let mut table: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for state in 0u32..(1u32 << n) {
        let spin = |r: usize, c: usize| if state >> ((r % l) * l + c % l) & 1 == 1 { -1i64 } else { 1 };
        let mut bonds = 0;
        let mut total = 0;
        for r in 0..l {
            for c in 0..l {
                let s = spin(r, c);
                total += s;
                bonds += s * (spin(r, c + 1) + spin(r + 1, c));
            }
        }
        *table.entry((-bonds, total.abs())).or_default() += 1;
    }

    let e_min = table.keys().next().map(|k| k.0).expect("at least one state");
    let weight = |e: i64| (-((e - e_min) as f64) / temperature).exp();
    let mut z_shifted = 0.0;
    let (mut e1, mut e2, mut m1) = (0.0, 0.0, 0.0);
    let mut by_energy: BTreeMap<i64, (u64, f64)> = BTreeMap::new();
    for (&(e, m), &g) in &table {
        let w = g as f64 * weight(e);
        z_shifted += w;
        e1 += w * e as f64;
        e2 += w * (e * e) as f64;
        m1 += w * m as f64 / n as f64;
        let slot = by_energy.entry(e).or_default();
        slot.0 += g;
        slot.1 += w;
    }
    let levels = by_energy
        .into_iter()
        .map(|(energy, (degeneracy, w))| EnergyLevel { energy, degeneracy, probability: w / z_shifted })
        .collect();
    Ok(ExactEnsemble {
        side_length,
        temperature,
        levels,
        log_partition: -(e_min as f64) / temperature + z_shifted.ln(),
        mean_energy: e1 / z_shifted,
        mean_energy_sq: e2 / z_shifted,
        mean_abs_magnetization: m1 / z_shifted,
    })
}

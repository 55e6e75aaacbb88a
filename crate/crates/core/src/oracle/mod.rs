//! Ground truth for validating samplers and classifiers: exact enumeration
//! of small Ising lattices and a generative Bayes classifier over
//! configuration energies.

mod exact;
mod histogram;

pub use exact::{enumerate_exact, EnergyLevel, ExactEnsemble, MAX_EXACT_SIDE};
pub use histogram::{
    bayes_error_curve, fit_energy_histograms, partition_energies, Binning, EnergyHistogramModel,
};

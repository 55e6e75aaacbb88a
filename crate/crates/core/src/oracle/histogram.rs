//! Generative classifier in energy space.
//!
//! Each grid point gets a normalized energy histogram. For splitting `k` the
//! likelihood of a side is the equal-weight mixture of the histograms of its
//! grid points, and a sample is assigned to the side with the larger
//! mixture value in its energy bin.

use crate::confusion::{balanced_rate, make_splittings, ConfusionCurve, ParameterGrid, Side};
use crate::dataset::Partition;
use crate::error::{domain, format_err, usage, Result};
use crate::ising::{energy, SpinConfiguration};

/// Relative tolerance under which two side likelihoods count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// Unit-width bins centred on integers when every energy is an integer
    /// (one bin per attainable Ising energy), Freedman–Diaconis otherwise.
    Auto,
    /// Bins of the given width, one of them centred on the lowest energy.
    Width(f64),
}

/// Per-grid-point energy histograms on shared bins.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyHistogramModel {
    /// Lower edge of bin 0.
    pub origin: f64,
    pub bin_width: f64,
    /// `histograms[p][b]`: fraction of grid point `p`'s samples in bin `b`.
    pub histograms: Vec<Vec<f64>>,
}

impl EnergyHistogramModel {
    pub fn n_bins(&self) -> usize {
        self.histograms.first().map_or(0, Vec::len)
    }

    /// Bin of an energy; values outside the fitted range go to the nearest edge bin.
    pub fn bin_of(&self, energy: f64) -> usize {
        bin_index(energy, self.origin, self.bin_width, self.n_bins())
    }
}

fn bin_index(energy: f64, origin: f64, width: f64, n_bins: usize) -> usize {
    let raw = ((energy - origin) / width).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(n_bins - 1)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn freedman_diaconis(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if width > 0.0 {
        width
    } else {
        // degenerate spread: fall back to a single bin over the range
        (sorted[sorted.len() - 1] - sorted[0]).max(1.0)
    }
}

/// Fits one histogram per grid point from the energies observed there.
pub fn fit_energy_histograms(energies: &[Vec<f64>], binning: Binning) -> Result<EnergyHistogramModel> {
    if energies.is_empty() {
        return Err(usage!("no grid points to fit"));
    }
    if let Some(p) = energies.iter().position(Vec::is_empty) {
        return Err(domain!("grid point {p} has no samples"));
    }
    let all: Vec<f64> = energies.iter().flatten().copied().collect();
    if all.iter().any(|e| !e.is_finite()) {
        return Err(domain!("energies must be finite"));
    }
    let min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = match binning {
        Binning::Width(w) if w > 0.0 && w.is_finite() => w,
        Binning::Width(w) => return Err(usage!("bin width must be positive, got {w}")),
        Binning::Auto if all.iter().all(|e| e.fract() == 0.0) => 1.0,
        Binning::Auto => freedman_diaconis(&all),
    };
    let origin = min - 0.5 * width;
    let n_bins = ((max - origin) / width).floor() as usize + 1;
    let histograms = energies
        .iter()
        .map(|point| {
            let mut h = vec![0.0; n_bins];
            for &e in point {
                h[bin_index(e, origin, width, n_bins)] += 1.0;
            }
            let n = point.len() as f64;
            h.iter_mut().for_each(|v| *v /= n);
            h
        })
        .collect();
    Ok(EnergyHistogramModel { origin, bin_width: width, histograms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Rule {
    /// Pick the side with the larger likelihood.
    Argmax,
    /// Pick the other side.
    #[cfg_attr(not(test), allow(dead_code))]
    Complement,
}

/// Bayes error estimate per splitting: each evaluation sample is assigned to
/// the side whose equal-weight mixture of grid-point histograms is larger at
/// its energy bin, and errors are tallied as class-balanced rates. Equal
/// likelihoods count as half an error.
pub fn bayes_error_curve(
    model: &EnergyHistogramModel,
    grid: &ParameterGrid,
    eval_energies: &[Vec<f64>],
) -> Result<ConfusionCurve> {
    bayes_error_curve_with(model, grid, eval_energies, Rule::Argmax)
}

pub(crate) fn bayes_error_curve_with(
    model: &EnergyHistogramModel,
    grid: &ParameterGrid,
    eval_energies: &[Vec<f64>],
    rule: Rule,
) -> Result<ConfusionCurve> {
    let n_points = grid.len();
    if model.histograms.len() != n_points || eval_energies.len() != n_points {
        return Err(usage!("histograms, evaluation data and grid disagree on the number of points"));
    }
    if let Some(p) = eval_energies.iter().position(Vec::is_empty) {
        return Err(domain!("grid point {p} has no evaluation samples"));
    }
    let n_bins = model.n_bins();
    // cumulative[p][b] = Σ_{q<p} h_q[b]
    let mut cumulative = vec![vec![0.0; n_bins]];
    for (p, h) in model.histograms.iter().enumerate() {
        let next = cumulative[p].iter().zip(h).map(|(c, x)| c + x).collect();
        cumulative.push(next);
    }
    let eval_bins: Vec<Vec<usize>> =
        eval_energies.iter().map(|es| es.iter().map(|&e| model.bin_of(e)).collect()).collect();

    let splittings = make_splittings(grid);
    let mut errors = Vec::with_capacity(splittings.len());
    for split in &splittings {
        let k = split.index;
        let n_left = (k + 1) as f64;
        let n_right = (n_points - k - 1) as f64;
        // decision per bin: Some(side) or None for a tie
        let decision: Vec<Option<Side>> = (0..n_bins)
            .map(|b| {
                let left = cumulative[k + 1][b] / n_left;
                let right = (cumulative[n_points][b] - cumulative[k + 1][b]) / n_right;
                if (left - right).abs() <= TIE_TOLERANCE * left.max(right) {
                    None
                } else {
                    let best = if right > left { Side::Above } else { Side::Below };
                    Some(match (rule, best) {
                        (Rule::Argmax, side) => side,
                        (Rule::Complement, Side::Above) => Side::Below,
                        (Rule::Complement, Side::Below) => Side::Above,
                    })
                }
            })
            .collect();
        let (mut err_below, mut n_below, mut err_above, mut n_above) = (0, 0, 0, 0);
        for (p, bins) in eval_bins.iter().enumerate() {
            let side = split.side_of(p);
            let half_errors: usize = bins
                .iter()
                .map(|&b| match decision[b] {
                    None => 1,
                    Some(d) if d == side => 0,
                    Some(_) => 2,
                })
                .sum();
            match side {
                Side::Below => {
                    err_below += half_errors;
                    n_below += bins.len();
                }
                Side::Above => {
                    err_above += half_errors;
                    n_above += bins.len();
                }
            }
        }
        errors.push(balanced_rate(err_below, n_below, err_above, n_above));
    }
    ConfusionCurve::from_splittings(&splittings, errors)
}

/// Energies of spin-configuration features, grouped by grid point.
pub fn partition_energies(part: &Partition, n_points: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::new(); n_points];
    let mut buf = Vec::with_capacity(part.features.ncols());
    for (row, &g) in part.features.outer_iter().zip(&part.grid_index) {
        buf.clear();
        buf.extend(row.iter().map(|&v| v as f32));
        let config = SpinConfiguration::from_features(&buf)
            .map_err(|e| format_err!("features cannot be read as spin configurations: {e}"))?;
        out.get_mut(g).ok_or_else(|| usage!("grid index {g} outside the grid"))?.push(energy(&config) as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> ParameterGrid {
        ParameterGrid::new((0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn identical_samples_fill_one_bin() {
        let m = fit_energy_histograms(&[vec![-8.0; 5]], Binning::Auto).unwrap();
        assert_eq!(m.n_bins(), 1);
        assert_eq!(m.histograms[0], vec![1.0]);
    }

    #[test]
    fn empty_point_is_domain_error() {
        assert!(matches!(fit_energy_histograms(&[vec![1.0], vec![]], Binning::Auto), Err(crate::Error::Domain(_))));
        assert!(fit_energy_histograms(&[vec![1.0]], Binning::Width(0.0)).is_err());
    }

    #[test]
    fn disjoint_supports_are_error_free() {
        let train = vec![vec![-8.0, -8.0, -4.0], vec![0.0, 4.0, 4.0]];
        let m = fit_energy_histograms(&train, Binning::Auto).unwrap();
        let curve = bayes_error_curve(&m, &grid(2), &train).unwrap();
        assert_eq!(curve.errors(), &[0.0]);
    }

    #[test]
    fn identical_histograms_give_one_half() {
        let train = vec![vec![-8.0, 0.0, 0.0, 8.0]; 5];
        let m = fit_energy_histograms(&train, Binning::Auto).unwrap();
        let curve = bayes_error_curve(&m, &grid(5), &train).unwrap();
        assert!(curve.errors().iter().all(|&e| e == 0.5));
        assert!(curve.minimum().tied);
    }

    #[test]
    fn out_of_range_energies_use_edge_bins() {
        let m = fit_energy_histograms(&[vec![-4.0], vec![4.0]], Binning::Auto).unwrap();
        assert_eq!(m.bin_of(-100.0), 0);
        assert_eq!(m.bin_of(100.0), m.n_bins() - 1);
        let curve = bayes_error_curve(&m, &grid(2), &[vec![-50.0], vec![50.0]]).unwrap();
        assert_eq!(curve.errors(), &[0.0]);
    }

    #[test]
    fn freedman_diaconis_for_real_valued_energies() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 * 0.37 + 0.1).collect();
        let m = fit_energy_histograms(std::slice::from_ref(&values), Binning::Auto).unwrap();
        let iqr = quantile(&values, 0.75) - quantile(&values, 0.25);
        assert!((m.bin_width - 2.0 * iqr / 100f64.cbrt()).abs() < 1e-12);
        assert!((m.histograms[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn arb_energies() -> impl Strategy<Value = Vec<Vec<f64>>> {
        // multiples of 4, as for Ising lattices with even side length
        prop::collection::vec(prop::collection::vec((-10i64..10).prop_map(|v| 4.0 * v as f64), 1..12), 2..6)
    }

    proptest! {
        #[test]
        fn permuting_samples_within_a_point_is_invariant(energies in arb_energies(), rot in 0usize..12) {
            let m = fit_energy_histograms(&energies, Binning::Auto).unwrap();
            let g = grid(energies.len());
            let a = bayes_error_curve(&m, &g, &energies).unwrap();
            let rotated: Vec<Vec<f64>> = energies.iter().map(|es| {
                let mut v = es.clone();
                let r = rot % v.len();
                v.rotate_left(r);
                v.reverse();
                v
            }).collect();
            let m2 = fit_energy_histograms(&rotated, Binning::Auto).unwrap();
            prop_assert_eq!(a, bayes_error_curve(&m2, &g, &rotated).unwrap());
        }

        #[test]
        fn refining_aligned_bins_changes_nothing(energies in arb_energies(), factor in 1usize..5) {
            let g = grid(energies.len());
            let coarse = fit_energy_histograms(&energies, Binning::Width(4.0)).unwrap();
            let fine = fit_energy_histograms(&energies, Binning::Width(4.0 / factor as f64)).unwrap();
            prop_assert_eq!(
                bayes_error_curve(&coarse, &g, &energies).unwrap(),
                bayes_error_curve(&fine, &g, &energies).unwrap()
            );
        }

        #[test]
        fn complement_rule_gives_one_minus_error(energies in arb_energies()) {
            let g = grid(energies.len());
            let m = fit_energy_histograms(&energies, Binning::Auto).unwrap();
            let a = bayes_error_curve_with(&m, &g, &energies, Rule::Argmax).unwrap();
            let b = bayes_error_curve_with(&m, &g, &energies, Rule::Complement).unwrap();
            for (x, y) in a.errors().iter().zip(b.errors()) {
                prop_assert!((x + y - 1.0).abs() < 1e-12);
            }
        }
    }
}

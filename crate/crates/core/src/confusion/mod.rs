//! Splitting geometry, class-balanced losses and error rates, and the
//! confusion curve.
//!
//! A grid `θ_0 < … < θ_K` has `K` splittings. Splitting `k` puts grid points
//! `0..=k` below the boundary `θ*_k = (θ_k + θ_{k+1})/2` and `k+1..=K` above
//! it. Head `k` of a classifier emits `p̂_k(>|x)`; `p̂_k(<|x) = 1 - p̂_k(>|x)`.
//!
//! Losses and error rates weight each side by the inverse of its sample
//! count, so both sides contribute equally regardless of how many grid
//! points they cover:
//!
//! ```text
//! L_k     = -½ Σ_y (1/|D_k^y|) Σ_{x∈D_k^y} ln p̂_k(y|x)
//! p_err_k =  ½ Σ_y (1/|D_k^y|) Σ_{x∈D_k^y} err_k(y, x)
//! ```

mod train;

use crate::error::{domain, usage, Result};
use crate::nn::log_sigmoid;

pub use train::{train_multi_task, train_single_task, EpochRecord, Schedule, TrainOutcome};

/// Strictly increasing tuning-parameter values `θ_0 … θ_K`, `K ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    values: Vec<f64>,
}

impl ParameterGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(domain!("a parameter grid needs at least 2 points, got {}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain!("grid values must be finite"));
        }
        if let Some(i) = values.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(domain!("grid values must be strictly increasing (positions {i} and {})", i + 1));
        }
        Ok(Self { values })
    }

    /// `n` equally spaced points from `start` to `end` inclusive.
    pub fn linspace(start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(domain!("a parameter grid needs at least 2 points, got {n}"));
        }
        let step = (end - start) / (n - 1) as f64;
        let mut values: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
        values[n - 1] = end;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of grid points `K + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of splittings `K`.
    pub fn n_splittings(&self) -> usize {
        self.values.len() - 1
    }

    /// Same grid with every value passed through `f`, which must be strictly increasing.
    pub fn relabeled(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// Tentative transition between grid points `index` and `index + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splitting {
    pub index: usize,
    pub boundary: f64,
    /// Number of grid points `K + 1` on the grid this splitting belongs to.
    pub grid_len: usize,
}

impl Splitting {
    pub fn side_of(&self, grid_index: usize) -> Side {
        if grid_index <= self.index {
            Side::Below
        } else {
            Side::Above
        }
    }

    /// Grid indices `0..=k`.
    pub fn below(&self) -> std::ops::Range<usize> {
        0..self.index + 1
    }

    /// Grid indices `k+1..=K`.
    pub fn above(&self) -> std::ops::Range<usize> {
        self.index + 1..self.grid_len
    }
}

/// The `K` splittings of a grid, boundaries at midpoints.
pub fn make_splittings(grid: &ParameterGrid) -> Vec<Splitting> {
    grid.values
        .windows(2)
        .enumerate()
        .map(|(index, w)| Splitting { index, boundary: 0.5 * (w[0] + w[1]), grid_len: grid.len() })
        .collect()
}

fn check_inputs(n: usize, grid_index: &[usize], split: &Splitting) -> Result<(usize, usize)> {
    if n != grid_index.len() {
        return Err(usage!("{n} predictions for {} samples", grid_index.len()));
    }
    if grid_index.iter().any(|&g| g >= split.grid_len) {
        return Err(usage!("sample grid index outside the grid"));
    }
    let above = grid_index.iter().filter(|&&g| g > split.index).count();
    let below = grid_index.len() - above;
    if above == 0 || below == 0 {
        return Err(domain!("splitting {} leaves one side without samples", split.index));
    }
    Ok((below, above))
}

/// Class-balanced binary cross-entropy `L_k` from head probabilities `p̂_k(>|x)`.
pub fn balanced_bce_loss(p_above: &[f64], grid_index: &[usize], split: &Splitting) -> Result<f64> {
    let (n_below, n_above) = check_inputs(p_above.len(), grid_index, split)?;
    let (mut sum_below, mut sum_above) = (0.0, 0.0);
    for (&p, &g) in p_above.iter().zip(grid_index) {
        match split.side_of(g) {
            Side::Below => sum_below -= (1.0 - p).ln(),
            Side::Above => sum_above -= p.ln(),
        }
    }
    Ok(0.5 * (sum_below / n_below as f64 + sum_above / n_above as f64))
}

/// [`balanced_bce_loss`] evaluated from logits with the stable log-sigmoid.
pub fn balanced_bce_loss_from_logits(logits: &[f64], grid_index: &[usize], split: &Splitting) -> Result<f64> {
    let (n_below, n_above) = check_inputs(logits.len(), grid_index, split)?;
    let (mut sum_below, mut sum_above) = (0.0, 0.0);
    for (&z, &g) in logits.iter().zip(grid_index) {
        match split.side_of(g) {
            Side::Below => sum_below -= log_sigmoid(-z),
            Side::Above => sum_above -= log_sigmoid(z),
        }
    }
    Ok(0.5 * (sum_below / n_below as f64 + sum_above / n_above as f64))
}

/// Multi-task loss: the arithmetic mean of the per-splitting losses.
pub fn multi_task_loss(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(usage!("multi-task loss needs at least one splitting"));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Error contribution of one sample in half-units: 0 if classified
/// correctly, 2 if wrong, and 1 when `p̂ = 0.5` exactly (a tie is half an
/// error, so an uninformative classifier scores 0.5).
pub fn half_errors(p_above: f64, side: Side) -> usize {
    if p_above == 0.5 {
        return 1;
    }
    let wrong = match side {
        Side::Below => p_above > 0.5,
        Side::Above => p_above < 0.5,
    };
    2 * usize::from(wrong)
}

/// Class-balanced error rate `p_err_k` with the decision threshold `p̂ = 0.5`.
pub fn error_rate(p_above: &[f64], grid_index: &[usize], split: &Splitting) -> Result<f64> {
    let (n_below, n_above) = check_inputs(p_above.len(), grid_index, split)?;
    let (mut err_below, mut err_above) = (0usize, 0usize);
    for (&p, &g) in p_above.iter().zip(grid_index) {
        let side = split.side_of(g);
        match side {
            Side::Below => err_below += half_errors(p, side),
            Side::Above => err_above += half_errors(p, side),
        }
    }
    Ok(balanced_rate(err_below, n_below, err_above, n_above))
}

/// `½ (e_<  / n_< + e_> / n_>)` with errors counted in half-units.
pub(crate) fn balanced_rate(half_err_below: usize, n_below: usize, half_err_above: usize, n_above: usize) -> f64 {
    0.25 * (half_err_below as f64 / n_below as f64 + half_err_above as f64 / n_above as f64)
}

/// Location of the lowest error on a confusion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    /// Node (splitting) index.
    pub index: usize,
    pub boundary: f64,
    pub error: f64,
    /// Set when more than one node attains the minimum; `index` is then the lowest of them.
    pub tied: bool,
}

/// Error rate per splitting together with the boundaries `θ*_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionCurve {
    boundaries: Vec<f64>,
    errors: Vec<f64>,
    minimum: Minimum,
}

impl ConfusionCurve {
    pub fn new(boundaries: Vec<f64>, errors: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() || boundaries.len() != errors.len() {
            return Err(usage!("a confusion curve needs matching, non-empty boundaries and errors"));
        }
        if errors.iter().any(|e| e.is_nan()) {
            return Err(usage!("confusion curve contains NaN"));
        }
        let minimum = find_minimum(&boundaries, &errors);
        Ok(Self { boundaries, errors, minimum })
    }

    pub fn from_splittings(splittings: &[Splitting], errors: Vec<f64>) -> Result<Self> {
        Self::new(splittings.iter().map(|s| s.boundary).collect(), errors)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn minimum(&self) -> Minimum {
        self.minimum
    }

    /// Indices of strict local minima (edges compared with their single neighbour).
    pub fn local_minima(&self) -> Vec<usize> {
        let e = &self.errors;
        (0..e.len())
            .filter(|&i| {
                let left = i == 0 || e[i] < e[i - 1];
                let right = i + 1 == e.len() || e[i] < e[i + 1];
                left && right && e.len() > 1
            })
            .collect()
    }

    /// Node-wise mean of several curves over the same boundaries.
    pub fn mean(curves: &[ConfusionCurve]) -> Result<Self> {
        let first = curves.first().ok_or_else(|| usage!("cannot average zero curves"))?;
        if curves.iter().any(|c| c.boundaries != first.boundaries) {
            return Err(usage!("curves to average must share boundaries"));
        }
        let n = curves.len() as f64;
        let errors = (0..first.len()).map(|k| curves.iter().map(|c| c.errors[k]).sum::<f64>() / n).collect();
        Self::new(first.boundaries.clone(), errors)
    }
}

fn find_minimum(boundaries: &[f64], errors: &[f64]) -> Minimum {
    let mut index = 0;
    for (k, &e) in errors.iter().enumerate().skip(1) {
        if e < errors[index] {
            index = k;
        }
    }
    let tied = errors.iter().filter(|&&e| e == errors[index]).count() > 1;
    Minimum { index, boundary: boundaries[index], error: errors[index], tied }
}

/// Estimated transition: the boundary with the lowest error, lowest index on ties.
pub fn confusion_minimum(curve: &ConfusionCurve) -> Minimum {
    curve.minimum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn split(index: usize, grid_len: usize) -> Splitting {
        Splitting { index, boundary: index as f64 + 0.5, grid_len }
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(ParameterGrid::new(vec![1.0]), Err(crate::Error::Domain(_))));
        assert!(ParameterGrid::new(vec![1.0, 1.0]).is_err());
        assert!(ParameterGrid::new(vec![2.0, 1.0]).is_err());
        assert!(ParameterGrid::new(vec![1.0, f64::NAN]).is_err());
        let g = ParameterGrid::linspace(0.05, 10.0, 200).unwrap();
        assert_eq!(g.values()[199], 10.0);
        assert_eq!(g.n_splittings(), 199);
    }

    #[test]
    fn splitting_examples() {
        let s = make_splittings(&ParameterGrid::new(vec![1.0, 2.0, 3.0]).unwrap());
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].boundary, s[1].boundary), (1.5, 2.5));
        assert_eq!(s[0].below(), 0..1);
        assert_eq!(s[0].above(), 1..3);
        assert_eq!(s[1].side_of(1), Side::Below);
        assert_eq!(s[1].side_of(2), Side::Above);

        let years = ParameterGrid::new((1900..2050).map(f64::from).collect()).unwrap();
        let s = make_splittings(&years);
        assert_eq!(s.len(), 149);
        assert_eq!(s[29].boundary, 1929.5);
    }

    #[test]
    fn loss_examples() {
        let idx = [0, 0, 1, 1];
        let s = split(0, 2);
        assert_eq!(balanced_bce_loss(&[0.0, 0.0, 1.0, 1.0], &idx, &s).unwrap(), 0.0);
        assert!((balanced_bce_loss(&[0.5; 4], &idx, &s).unwrap() - LN_2).abs() < 1e-12);
        assert!((balanced_bce_loss_from_logits(&[0.0; 4], &idx, &s).unwrap() - LN_2).abs() < 1e-12);

        // sides of size 1 and 3; correct-class probabilities {0.8} and {0.6, 0.7, 0.9}
        let idx = [0, 1, 1, 1];
        let expected = 0.5 * (-(0.8f64.ln()) - (0.6f64.ln() + 0.7f64.ln() + 0.9f64.ln()) / 3.0);
        let got = balanced_bce_loss(&[0.2, 0.6, 0.7, 0.9], &idx, &s).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.273_72).abs() < 5e-6);
    }

    #[test]
    fn logit_and_probability_losses_agree() {
        let idx = [0, 1, 2, 2, 3];
        let z = [-1.3, 0.2, 2.0, -0.4, 0.9];
        let p: Vec<f64> = z.iter().map(|&v| crate::nn::sigmoid(v)).collect();
        for k in 0..3 {
            let s = split(k, 4);
            let a = balanced_bce_loss(&p, &idx, &s).unwrap();
            let b = balanced_bce_loss_from_logits(&z, &idx, &s).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_side_is_domain_error() {
        let s = split(1, 3);
        assert!(matches!(balanced_bce_loss(&[0.5, 0.5], &[0, 1], &s), Err(crate::Error::Domain(_))));
        assert!(matches!(error_rate(&[0.5, 0.5], &[2, 2], &s), Err(crate::Error::Domain(_))));
        assert!(matches!(error_rate(&[0.5], &[2, 2], &s), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn multi_task_loss_examples() {
        assert_eq!(multi_task_loss(&[0.3]).unwrap(), 0.3);
        assert!((multi_task_loss(&[LN_2; 7]).unwrap() - LN_2).abs() < 1e-15);
        assert!((multi_task_loss(&[0.2, 0.4, 0.6]).unwrap() - 0.4).abs() < 1e-15);
        assert!(multi_task_loss(&[]).is_err());
    }

    #[test]
    fn error_rate_examples() {
        let idx = [0, 0, 1, 1, 1, 1];
        let s = split(0, 2);
        assert_eq!(error_rate(&[0.1, 0.2, 0.9, 0.8, 0.7, 0.6], &idx, &s).unwrap(), 0.0);
        assert_eq!(error_rate(&[0.9, 0.8, 0.1, 0.2, 0.3, 0.4], &idx, &s).unwrap(), 1.0);
        // one error of two below, one error of four above
        assert_eq!(error_rate(&[0.9, 0.2, 0.1, 0.8, 0.7, 0.6], &idx, &s).unwrap(), 0.375);
        // exactly 0.5 is half an error on either side
        assert_eq!(error_rate(&[0.5; 6], &idx, &s).unwrap(), 0.5);
        assert_eq!(error_rate(&[0.5, 0.1, 0.9, 0.9, 0.9, 0.9], &idx, &s).unwrap(), 0.125);
    }

    #[test]
    fn minimum_examples() {
        let c = ConfusionCurve::new(vec![1.5, 2.5, 3.5], vec![0.4, 0.1, 0.3]).unwrap();
        let m = confusion_minimum(&c);
        assert_eq!((m.index, m.boundary, m.tied), (1, 2.5, false));
        let flat = ConfusionCurve::new(vec![1.5, 2.5, 3.5], vec![0.5; 3]).unwrap();
        let m = confusion_minimum(&flat);
        assert_eq!((m.index, m.boundary, m.tied), (0, 1.5, true));
        let multi = ConfusionCurve::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.3, 0.1, 0.4, 0.2, 0.5]).unwrap();
        assert_eq!(multi.local_minima(), vec![1, 3]);
        assert!(ConfusionCurve::new(vec![], vec![]).is_err());
    }

    #[test]
    fn mean_curve() {
        let a = ConfusionCurve::new(vec![1.0, 2.0], vec![0.2, 0.4]).unwrap();
        let b = ConfusionCurve::new(vec![1.0, 2.0], vec![0.4, 0.0]).unwrap();
        let m = ConfusionCurve::mean(&[a, b]).unwrap();
        assert_eq!(m.errors(), &[0.30000000000000004, 0.2]);
        assert_eq!(m.minimum().index, 1);
    }

    fn arb_labelled(max_points: usize) -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize, usize)> {
        (2usize..max_points).prop_flat_map(|points| {
            (
                prop::collection::vec((0.01f64..0.99, 0..points), 2..40),
                Just(points),
                0..points - 1,
            )
                .prop_map(|(pairs, points, k)| {
                    let (mut p, mut idx): (Vec<f64>, Vec<usize>) = pairs.into_iter().unzip();
                    // guarantee both sides are populated
                    p.push(0.3);
                    idx.push(0);
                    p.push(0.6);
                    idx.push(points - 1);
                    (p, idx, points, k)
                })
        })
    }

    proptest! {
        #[test]
        fn duplication_on_one_side_is_invariant((p, idx, points, k) in arb_labelled(6), times in 2usize..4) {
            let s = split(k, points);
            let loss = balanced_bce_loss(&p, &idx, &s).unwrap();
            let err = error_rate(&p, &idx, &s).unwrap();
            let (mut p2, mut idx2) = (p.clone(), idx.clone());
            for _ in 1..times {
                for (&pi, &g) in p.iter().zip(&idx) {
                    if g > k {
                        p2.push(pi);
                        idx2.push(g);
                    }
                }
            }
            let loss2 = balanced_bce_loss(&p2, &idx2, &s).unwrap();
            prop_assert!((loss - loss2).abs() <= 1e-12 * loss.max(1.0));
            prop_assert_eq!(err, error_rate(&p2, &idx2, &s).unwrap());
        }

        #[test]
        fn balanced_equals_plain_mean_for_equal_sides(below in prop::collection::vec(0.01f64..0.99, 1..20), seed in 0u64..1000) {
            use rand::{Rng as _, SeedableRng};
            let mut rng = crate::Rng::seed_from_u64(seed);
            let above: Vec<f64> = below.iter().map(|_| rng.gen_range(0.01..0.99)).collect();
            let p: Vec<f64> = below.iter().chain(&above).copied().collect();
            let idx: Vec<usize> = below.iter().map(|_| 0).chain(above.iter().map(|_| 1)).collect();
            let balanced = balanced_bce_loss(&p, &idx, &split(0, 2)).unwrap();
            let plain = -(below.iter().map(|q| (1.0 - q).ln()).sum::<f64>() + above.iter().map(|q| q.ln()).sum::<f64>())
                / p.len() as f64;
            prop_assert!((balanced - plain).abs() <= 1e-12);
        }

        #[test]
        fn error_rate_bounds((p, idx, points, k) in arb_labelled(6)) {
            let e = error_rate(&p, &idx, &split(k, points)).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!(balanced_bce_loss(&p, &idx, &split(k, points)).unwrap() >= 0.0);
        }

        #[test]
        fn argmin_ignores_monotone_relabeling(errors in prop::collection::vec(0.0f64..0.5, 1..12), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let grid = ParameterGrid::new((0..=errors.len()).map(|i| i as f64).collect()).unwrap();
            let mapped = grid.relabeled(|v| (scale * v + shift).exp()).unwrap();
            let a = ConfusionCurve::from_splittings(&make_splittings(&grid), errors.clone()).unwrap();
            let b = ConfusionCurve::from_splittings(&make_splittings(&mapped), errors).unwrap();
            prop_assert_eq!(a.minimum().index, b.minimum().index);
            prop_assert_eq!(a.minimum().tied, b.minimum().tied);
        }
    }
}

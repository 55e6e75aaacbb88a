//! Kept in its own test binary so no other test competes for the CPU while
//! wall-clock times are measured.

use rand::{Rng as _, SeedableRng};

use lbc::confusion::ParameterGrid;
use lbc::dataset::SampleSet;
use lbc::harness::{benchmark, ExperimentConfig};
use lbc::Rng;

#[test]
fn one_splitting_costs_the_same_in_both_modes() {
    let mut rng = Rng::seed_from_u64(1);
    let grid = ParameterGrid::new(vec![0.0, 1.0]).unwrap();
    let points = (0..2)
        .map(|p| (0..3000 * 64).map(|_| rng.gen_range(-1.0f32..1.0) + p as f32 * 0.2).collect())
        .collect();
    let samples = SampleSet::new(grid, 64, points).unwrap();
    let cfg = ExperimentConfig {
        m_train: 2000,
        m_valid: 1000,
        hidden: vec![32],
        epochs: 8,
        batch_size: 128,
        ks: Some(vec![1]),
        ..Default::default()
    };
    // best of three to damp scheduler noise
    let best = (0..3)
        .map(|_| benchmark(&cfg, &samples).unwrap().entries[0].speedup())
        .min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
        .unwrap();
    assert!((best - 1.0).abs() <= 0.2, "K = 1 speedup {best}");
}

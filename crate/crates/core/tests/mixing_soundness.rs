mod common;

use common::{positive_matrix, positive_simplex};
use pufferfish::approx::{
    approx_plan, extent_threshold, fast_plan, mixing_summary, shape_bound, stationary_distribution, time_reversal,
    GapMode, MixingSummary,
};
use pufferfish::quilt::{minimal_quilt_set, InfluenceTables};
use pufferfish::{DistributionClass, LipschitzQuery, MarkovChainModel, TransitionMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn residual(p: &TransitionMatrix, pi: &[f64]) -> f64 {
    p.left_mul(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn stationary_residuals_are_tiny() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..200 {
        let k = rng.random_range(2..=6);
        let p = positive_matrix(&mut rng, k);
        let pi = stationary_distribution(&p).unwrap();
        assert!(residual(&p, &pi) < 1e-12);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pi.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn double_reversal_is_identity() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for _ in 0..100 {
        let k = rng.random_range(2..=5);
        let p = positive_matrix(&mut rng, k);
        let pi = stationary_distribution(&p).unwrap();
        let r = time_reversal(&p, &pi).unwrap();
        assert!(residual(&r, &pi) < 1e-12);
        let back = time_reversal(&r, &pi).unwrap();
        for (a, b) in back.rows().iter().flatten().zip(p.rows().iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn check_bound(summary: &MixingSummary, tables: &InfluenceTables, len: usize) -> usize {
    let thr = extent_threshold(summary);
    let mut checked = 0;
    for i in 1..=len {
        for q in minimal_quilt_set(i, len, len) {
            let bound = shape_bound(summary, q.shape);
            let exact = tables.influence(&q);
            if bound.is_finite() {
                assert!(exact <= bound + 1e-9, "{q}: exact {exact} above bound {bound} (threshold {thr})");
                checked += 1;
            }
        }
    }
    checked
}

#[test]
fn bound_dominates_exact_influence() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..40 {
        let k = rng.random_range(2..=3);
        let len = 40;
        let p = positive_matrix(&mut rng, k);
        let class = DistributionClass::matrix_set_all_inits(vec![p.clone()], len).unwrap();
        for mode in [GapMode::PpStar, GapMode::Reversible] {
            let Ok(summary) = mixing_summary(&class, mode) else { continue };
            let pi = stationary_distribution(&p).unwrap();
            let stationary = InfluenceTables::for_model(&MarkovChainModel::new(pi, p.clone(), len).unwrap());
            checked += check_bound(&summary, &stationary, len);
            let q = positive_simplex(&mut rng, k, 0.0);
            let other = InfluenceTables::for_model(&MarkovChainModel::new(q, p.clone(), len).unwrap());
            checked += check_bound(&summary, &other, len);
        }
    }
    assert!(checked > 1000, "only {checked} finite bounds exercised");
}

#[test]
fn fast_search_equals_full_search() {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for _ in 0..30 {
        let k = rng.random_range(2..=4);
        let pi_min = rng.random_range(0.05..=1.0 / k as f64);
        let g = rng.random_range(0.3..2.0);
        let eps = rng.random_range(0.5..5.0);
        let class = DistributionClass::mixing_params(pi_min, g, k, 10, false).unwrap();
        let probe = fast_plan(&class, &LipschitzQuery::state_frequency(10, 0), eps, GapMode::PpStar).unwrap();
        let astar = probe.a_star.unwrap();
        let len = 8 * astar.max(1) + rng.random_range(0..20);
        let class = class.with_length(len).unwrap();
        let f = LipschitzQuery::state_frequency(len, 0);
        let fast = fast_plan(&class, &f, eps, GapMode::PpStar).unwrap();
        let full = approx_plan(&class, &f, eps, 4 * astar, GapMode::PpStar).unwrap();
        assert_eq!(fast.sigma_max, full.sigma_max, "pi_min={pi_min} g={g} eps={eps} T={len}");
        assert_eq!(fast.per_node.len(), 1);
        let unlimited = approx_plan(&class, &f, eps, len, GapMode::PpStar).unwrap();
        assert_eq!(unlimited.sigma_max, full.sigma_max, "larger quilts won at T={len}");
        // Longer chains need no more noise.
        let longer = class.with_length(2 * len).unwrap();
        let f2 = LipschitzQuery::state_frequency(2 * len, 0);
        assert_eq!(fast_plan(&longer, &f2, eps, GapMode::PpStar).unwrap().sigma_max, fast.sigma_max);
    }
}

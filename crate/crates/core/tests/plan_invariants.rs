mod common;

use common::{positive_chain, positive_matrix};
use proptest::prelude::*;
use pufferfish::approx::{approx_plan, GapMode};
use pufferfish::baselines::{entry_dp_scale, group_dp_scale, ChainSegmentation};
use pufferfish::quilt::exact_plan;
use pufferfish::{DistributionClass, LipschitzQuery};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_noise_between_entry_and_group(seed in any::<u64>(), k in 2usize..=3, len in 1usize..=30, eps in 0.2f64..6.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let class = DistributionClass::finite_set(vec![positive_chain(&mut rng, k, len)]).unwrap();
        let f = LipschitzQuery::count_histogram(len, k);
        let plan = exact_plan(&class, &f, eps, len).unwrap();
        prop_assert!(plan.sigma_max <= len as f64 / eps + 1e-12);
        prop_assert!(plan.sigma_max >= 1.0 / eps - 1e-12);
        prop_assert!(plan.laplace_scale >= entry_dp_scale(&f, eps).unwrap() - 1e-12);
        prop_assert!(plan.laplace_scale <= group_dp_scale(&f, &ChainSegmentation::single(len), eps).unwrap() + 1e-9);
        prop_assert_eq!(plan.per_node.len(), len);
    }

    #[test]
    fn larger_ell_never_adds_noise(seed in any::<u64>(), len in 2usize..=25, eps in 0.2f64..4.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let class = DistributionClass::matrix_set_all_inits(vec![positive_matrix(&mut rng, 2)], len).unwrap();
        let f = LipschitzQuery::state_frequency(len, 0);
        let mut last = f64::INFINITY;
        for ell in 1..=len {
            let s = exact_plan(&class, &f, eps, ell).unwrap().sigma_max;
            prop_assert!(s <= last + 1e-12, "ell={} gave {} after {}", ell, s, last);
            last = s;
        }
    }

    #[test]
    fn exact_never_exceeds_bound(seed in any::<u64>(), len in 20usize..=80, eps in 0.3f64..5.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let class = DistributionClass::matrix_set_all_inits(vec![positive_matrix(&mut rng, 2)], len).unwrap();
        let f = LipschitzQuery::state_frequency(len, 0);
        let exact = exact_plan(&class, &f, eps, len).unwrap();
        let approx = approx_plan(&class, &f, eps, len, GapMode::PpStar).unwrap();
        prop_assert!(exact.sigma_max <= approx.sigma_max + 1e-9);
        prop_assert!(approx.sigma_max <= len as f64 / eps + 1e-12);
    }
}

mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stm_core::data::{complete_edge_counts_from_data, group_counts, DataSet, Sample};
use stm_core::likelihood::{fit_mle, loglik, loglik_complete, loglik_data, LikKind};
use stm_core::simulate::sample_data;
use stm_core::trees::{StagedTreeModel, Theta};

use common::{assignment_probability, oracle_full_loglik, random_data, random_model, random_spec, rel_close};

fn holes(rng: &mut ChaCha8Rng, data: &DataSet, rate: f64) -> DataSet {
    let rows = data
        .rows()
        .iter()
        .map(|r| Sample::new(r.values.iter().map(|v| if rng.random_bool(rate) { None } else { *v }).collect()))
        .collect();
    DataSet::new(data.spec().clone(), rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_missing_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 4, 3);
        let model = random_model(&mut rng, &spec);
        let data = random_data(&mut rng, &spec, 25, 0.4);
        let got = loglik_data(LikKind::FullMissing, &model, &data).unwrap().loglik;
        prop_assert!(rel_close(got, oracle_full_loglik(&model, &data), 1e-12));
    }

    #[test]
    fn complete_loglik_is_sum_of_row_logs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 4, 3);
        let model = random_model(&mut rng, &spec);
        let data = random_data(&mut rng, &spec, 50, 0.0);
        let want: f64 = data
            .rows()
            .iter()
            .map(|r| assignment_probability(&model, &r.values.iter().map(|v| v.unwrap()).collect::<Vec<_>>()).ln())
            .sum();
        prop_assert!(rel_close(loglik_complete(&model, &data).unwrap().loglik, want, 1e-12));
    }

    #[test]
    fn row_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 4, 3);
        let model = random_model(&mut rng, &spec);
        let data = random_data(&mut rng, &spec, 30, 0.3);
        let mut rows = data.rows().to_vec();
        rows.shuffle(&mut rng);
        let shuffled = DataSet::new(spec.clone(), rows).unwrap();
        for kind in LikKind::ALL.into_iter().filter(|&k| k != LikKind::Complete) {
            let a = loglik_data(kind, &model, &data).unwrap();
            let b = loglik_data(kind, &model, &shuffled).unwrap();
            prop_assert!(rel_close(a.loglik, b.loglik, 1e-12), "{kind:?}");
            prop_assert_eq!(a.n_effective, b.n_effective);
        }
    }

    #[test]
    fn omit_is_complete_on_complete_rows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 4, 3);
        let model = random_model(&mut rng, &spec);
        let data = random_data(&mut rng, &spec, 40, 0.15);
        let omit = loglik_data(LikKind::Omit, &model, &data).unwrap();
        prop_assert_eq!(omit.n_effective, data.num_complete_rows());
        let subset = data.complete_rows();
        let want = if subset.is_empty() { 0.0 } else { loglik_complete(&model, &subset).unwrap().loglik };
        prop_assert!(rel_close(omit.loglik, want, 1e-12));
    }

    #[test]
    fn likelihoods_are_nonpositive_and_observed_bounds_complete(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 4, 3);
        let model = random_model(&mut rng, &spec);
        let complete = sample_data(&model, 60, seed).unwrap();
        let partial = holes(&mut rng, &complete, 0.3);
        let g = group_counts(&model.tree, &partial).unwrap();
        for kind in LikKind::ALL.into_iter().filter(|&k| k != LikKind::Complete) {
            prop_assert!(loglik(kind, &model, &g).unwrap().loglik <= 0.0, "{kind:?}");
        }
        // hiding values can only raise each row's probability
        let full = loglik(LikKind::FullMissing, &model, &g).unwrap().loglik;
        prop_assert!(full >= loglik_complete(&model, &complete).unwrap().loglik - 1e-9);
    }

    #[test]
    fn mle_beats_nearby_parameters(seed in any::<u64>(), shift in prop_oneof![Just(1e-3f64), Just(-1e-3f64)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 4, 3);
        let generator = random_model(&mut rng, &spec);
        let data = sample_data(&generator, 200, seed).unwrap();
        let tree = &generator.tree;
        let staging = &generator.staging;
        let counts = complete_edge_counts_from_data(tree, staging, &data).unwrap();
        let mle = fit_mle(tree, staging, &counts, 0.0).unwrap();
        let best = loglik_complete(&StagedTreeModel::new(tree.clone(), staging.clone(), Some(mle.clone())).unwrap(), &data).unwrap().loglik;

        let s = rng.random_range(0..staging.num_stages());
        let mut probs = mle.as_slices().to_vec();
        let (i, j) = (0, probs[s].len() - 1);
        prop_assume!(probs[s][i] - shift.abs() > 0.0 && probs[s][j] - shift.abs() > 0.0);
        probs[s][i] += shift;
        probs[s][j] -= shift;
        let theta = Theta::new(tree, staging, probs, 1e-9).unwrap();
        let nearby = loglik_complete(&StagedTreeModel::new(tree.clone(), staging.clone(), Some(theta)).unwrap(), &data).unwrap().loglik;
        prop_assert!(nearby <= best + 1e-12);
    }
}

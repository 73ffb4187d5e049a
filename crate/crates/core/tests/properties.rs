use localrec::catalog::SimilarityGraph;
use localrec::eval::{run_experiment, ExperimentConfig, PopularityBin, RandomScorer};
use localrec::multvae::{predict, rank_candidates_vae, train_multvae};
use localrec::synth::{generate_catalog, SynthConfig};
use localrec::wrmf::{fold_in_user, rank_candidates, train_wrmf};
use localrec::{UserVector, VaeConfig, WrmfConfig};
use proptest::prelude::*;

fn graph_strategy() -> impl Strategy<Value = SimilarityGraph> {
    (3usize..25).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::btree_set(0..n, 0..n.min(6)), n).prop_map(|rows| {
            let rows = rows
                .into_iter()
                .enumerate()
                .map(|(i, r)| r.into_iter().filter(|&j| j != i).collect())
                .collect();
            SimilarityGraph::from_rows(rows)
        })
    })
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wrmf_ranking_is_a_permutation(
        graph in graph_strategy(),
        k in 1usize..6,
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..10),
    ) {
        let n = graph.len();
        let model = train_wrmf(&graph, &WrmfConfig { factors: k, sweeps: 2, seed, ..WrmfConfig::default() }).unwrap();
        let user = UserVector::new(n, [picks[0].index(n)]).unwrap();
        let u = fold_in_user(&model, &user).unwrap();
        let mut candidates: Vec<usize> = picks.iter().map(|p| p.index(n)).collect();
        candidates.sort_unstable();
        candidates.dedup();
        let ranked = rank_candidates(&model, &u, &candidates).unwrap();
        prop_assert_eq!(sorted(ranked.iter().map(|r| r.0).collect()), candidates);
        prop_assert!(ranked.iter().all(|r| r.1.is_finite()));
        prop_assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn vae_inference_is_pure(graph in graph_strategy(), seed in any::<u64>()) {
        let n = graph.len();
        let cfg = VaeConfig { hidden: 4, bottleneck: 2, epochs: 1, batch_size: 8, seed, ..VaeConfig::default() };
        let (model, _) = train_multvae(&graph, &cfg).unwrap();
        let user = UserVector::new(n, [0, n - 1]).unwrap();
        let a = predict(&model, &user).unwrap();
        prop_assert_eq!(&a, &predict(&model, &user).unwrap());
        prop_assert!(a.iter().all(|v| v.is_finite()));
        let candidates: Vec<usize> = (0..n).collect();
        let ranked = rank_candidates_vae(&model, &user, &candidates).unwrap();
        prop_assert_eq!(sorted(ranked.iter().map(|r| r.0).collect()), candidates);
    }

    #[test]
    fn report_stays_in_bounds(seed in any::<u64>(), trials in 1usize..8) {
        let cat = generate_catalog(&SynthConfig { seed, artists: 400, ..SynthConfig::default() }).unwrap();
        let cfg = ExperimentConfig {
            bins: vec![PopularityBin::new(0, 9).unwrap(), PopularityBin::new(60, 100).unwrap()],
            trials_per_bin: trials,
            seed,
            ..ExperimentConfig::default()
        };
        let r = run_experiment(&cat, &[&RandomScorer], &cfg).unwrap();
        prop_assert_eq!(r.summaries.len(), 2);
        for s in &r.summaries {
            prop_assert!(s.n_trials <= trials);
            if let (Some(m), Some(e)) = (s.mean_auc, s.stderr) {
                prop_assert!((0.0..=1.0).contains(&m));
                prop_assert!(e >= 0.0);
            } else {
                prop_assert_eq!(s.n_trials, 0);
            }
        }
    }
}

use localrec::eval::{run_experiment, run_experiment_with, ExperimentConfig, PopularityBin, RandomScorer, VaeScorer, WrmfScorer};
use localrec::multvae::train_multvae;
use localrec::synth::{generate_catalog, SynthConfig};
use localrec::wrmf::{train_wrmf, train_wrmf_with};
use localrec::{Catalog, Exec, SavedModel, VaeConfig, WrmfConfig};

fn catalog() -> Catalog {
    generate_catalog(&SynthConfig {
        seed: 31,
        artists: 600,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn wrmf_config() -> WrmfConfig {
    WrmfConfig {
        factors: 12,
        sweeps: 4,
        seed: 2,
        ..WrmfConfig::default()
    }
}

fn vae_config() -> VaeConfig {
    VaeConfig {
        hidden: 24,
        bottleneck: 6,
        epochs: 3,
        batch_size: 100,
        seed: 2,
        ..VaeConfig::default()
    }
}

fn experiment() -> ExperimentConfig {
    ExperimentConfig {
        bins: PopularityBin::default_bins()[..6].to_vec(),
        trials_per_bin: 15,
        seed: 5,
        ..ExperimentConfig::default()
    }
}

#[test]
fn saved_models_reproduce_the_report() {
    let cat = catalog();
    let wrmf = train_wrmf(cat.graph(), &wrmf_config()).unwrap();
    let (vae, _) = train_multvae(cat.graph(), &vae_config()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (wp, vp) = (dir.path().join("w.bin"), dir.path().join("v.bin"));
    SavedModel::Wrmf(wrmf.clone()).save(&wp, &cat).unwrap();
    SavedModel::Multvae(vae.clone()).save(&vp, &cat).unwrap();
    let SavedModel::Wrmf(wrmf2) = SavedModel::load(&wp, &cat).unwrap() else { panic!() };
    let SavedModel::Multvae(vae2) = SavedModel::load(&vp, &cat).unwrap() else { panic!() };

    let run = |w, v| {
        let w = WrmfScorer { name: "wrmf".into(), model: w };
        let v = VaeScorer { name: "multvae".into(), model: v };
        run_experiment(&cat, &[&w, &v], &experiment()).unwrap()
    };
    let a = run(&wrmf, &vae);
    let b = run(&wrmf2, &vae2);
    assert_eq!(a, b);

    for s in &a.summaries {
        let m = s.mean_auc.unwrap();
        assert!((0.0..=1.0).contains(&m));
        assert!(s.stderr.unwrap() >= 0.0);
        assert!(s.n_trials <= 15);
    }
}

#[test]
fn trials_are_paired_across_scorer_sets() {
    let cat = catalog();
    let wrmf = train_wrmf(cat.graph(), &wrmf_config()).unwrap();
    let w = WrmfScorer { name: "wrmf".into(), model: &wrmf };
    let alone = run_experiment(&cat, &[&w], &experiment()).unwrap();
    let with_random = run_experiment(&cat, &[&w, &RandomScorer], &experiment()).unwrap();
    let wrmf_trials = |r: &localrec::ExperimentReport| {
        r.trials
            .iter()
            .filter(|t| t.algorithm == "wrmf")
            .cloned()
            .collect::<Vec<_>>()
    };
    assert_eq!(wrmf_trials(&alone), wrmf_trials(&with_random));
}

#[test]
fn execution_mode_does_not_change_results() {
    let cat = catalog();
    let seq = train_wrmf_with(cat.graph(), &wrmf_config(), Exec::Sequential, |_, _| {}).unwrap();
    let par = train_wrmf_with(cat.graph(), &wrmf_config(), Exec::Parallel, |_, _| {}).unwrap();
    assert_eq!(seq.row_factors(), par.row_factors());
    assert_eq!(seq.col_factors(), par.col_factors());

    let w = WrmfScorer { name: "wrmf".into(), model: &seq };
    let a = run_experiment_with(&cat, &[&w, &RandomScorer], &experiment(), Exec::Sequential).unwrap();
    let b = run_experiment_with(&cat, &[&w, &RandomScorer], &experiment(), Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trained_models_beat_random_on_popular_bins() {
    let cat = catalog();
    let wrmf = train_wrmf(cat.graph(), &wrmf_config()).unwrap();
    let w = WrmfScorer { name: "wrmf".into(), model: &wrmf };
    let cfg = ExperimentConfig {
        bins: vec![PopularityBin::new(30, 60).unwrap()],
        trials_per_bin: 40,
        ..experiment()
    };
    let r = run_experiment(&cat, &[&w, &RandomScorer], &cfg).unwrap();
    let wrmf_mean = r.means("wrmf")[0].unwrap();
    let random_mean = r.means("random")[0].unwrap();
    assert!(wrmf_mean > random_mean + 0.1, "{wrmf_mean} vs {random_mean}");
}

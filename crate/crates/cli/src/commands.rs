use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use localrec::catalog::{PercentileReport, COMMON_GENRES};
use localrec::eval::{
    run_experiment, write_plot_data, BinSummary, ExperimentConfig, OracleScorer, PopularityBin, RandomScorer, Scorer,
    VaeScorer, WrmfScorer,
};
use localrec::multvae::train_multvae_with;
use localrec::synth::{generate_catalog, snowball_crawl, FixtureProvider, SynthConfig};
use localrec::wrmf::{objective, train_wrmf_with};
use localrec::{Catalog, Exec, SavedModel, VaeConfig, WrmfConfig};
use serde::Deserialize;

use crate::config::resolve;
use crate::{Baseline, EvalArgs, ModelArg, ReportArgs, SynthArgs, TrainArgs};

fn load_catalog(path: &Path) -> Result<Catalog> {
    let path = resolve(path);
    Catalog::load(&path).with_context(|| format!("loading catalog {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let path = resolve(path);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn print_percentiles(catalog: &Catalog, genres: &[String]) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{}", PercentileReport::header())?;
    writeln!(out, "{}", catalog.popularity_percentiles("all artists", |_| true)?)?;
    for g in genres {
        match catalog.popularity_percentiles(g, |a| a.has_genre(g)) {
            Ok(r) => writeln!(out, "{r}")?,
            Err(_) => writeln!(out, "{g:<32} {:>8}", 0)?,
        }
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let catalog = match &a.from_fixture {
        Some(fixture) => {
            if a.seeds.is_empty() {
                bail!("--from-fixture needs --seeds");
            }
            let fixture = resolve(fixture);
            let provider = FixtureProvider::open(&fixture).with_context(|| format!("reading {}", fixture.display()))?;
            let crawl = snowball_crawl(&provider, &a.seeds, a.limit)?;
            for w in &crawl.warnings {
                log::warn!("{w}");
            }
            crawl.catalog
        }
        None => generate_catalog(&SynthConfig {
            seed: a.seed,
            artists: a.artists,
            genres: a.genres,
            popularity_exponent: a.popularity_exponent,
            intra_genre_prob: a.intra_genre_prob,
            cross_genre_prob: a.cross_genre_prob,
            similar_len: a.similar_len,
            popularity_bias: a.popularity_bias,
        })?,
    };
    let mut out = create(&a.out)?;
    catalog.write(&mut out)?;
    out.flush()?;
    log::info!(
        "wrote {} artists, {} similarity entries, fingerprint {}",
        catalog.len(),
        catalog.graph().nnz(),
        catalog.fingerprint()
    );
    if catalog.is_empty() {
        return Ok(());
    }
    let pool: Vec<String> = COMMON_GENRES
        .iter()
        .filter(|g| !catalog.genre_members(g).is_empty())
        .map(|g| g.to_string())
        .collect();
    let mut out = io::stdout().lock();
    writeln!(out, "{}", PercentileReport::header())?;
    writeln!(out, "{}", catalog.popularity_percentiles("all artists", |_| true)?)?;
    if !pool.is_empty() {
        writeln!(
            out,
            "{}",
            catalog.popularity_percentiles("in common genres", |a| pool.iter().any(|g| a.has_genre(g)))?
        )?;
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    if catalog.is_empty() {
        bail!("catalog {} has no artists", a.catalog.display());
    }
    let graph = catalog.graph();
    let model = match a.model {
        ModelArg::Wrmf => {
            let config = WrmfConfig {
                factors: a.factors,
                lambda: a.lambda,
                alpha: a.alpha,
                sweeps: a.sweeps,
                seed: a.seed,
            };
            config.validate()?;
            let model = train_wrmf_with(graph, &config, Exec::default(), |s, m| match objective(m, graph) {
                Ok(obj) => println!("sweep {s:>3}  objective {obj:.6}"),
                Err(e) => log::warn!("sweep {s}: {e}"),
            })?;
            SavedModel::Wrmf(model)
        }
        ModelArg::Multvae => {
            let config = VaeConfig {
                input_dim: 0,
                hidden: a.hidden,
                bottleneck: a.bottleneck,
                dropout: a.dropout,
                batch_size: a.batch_size,
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                adam_beta1: a.adam_beta1,
                adam_beta2: a.adam_beta2,
                adam_epsilon: a.adam_epsilon,
                kl_weight: a.kl_weight,
                validation_fraction: a.validation_fraction,
                patience: a.patience,
                seed: a.seed,
            };
            let (model, trace) = train_multvae_with(graph, &config, |e, t| {
                let train = t.train_loss.last().copied().unwrap_or(f64::NAN);
                match t.validation_loss.last() {
                    Some(v) => println!("epoch {e:>3}  loss {train:.6}  validation {v:.6}"),
                    None => println!("epoch {e:>3}  loss {train:.6}"),
                }
            })?;
            if trace.stopped_early {
                println!("stopped early after {} epochs", trace.train_loss.len());
            }
            SavedModel::Multvae(model)
        }
    };
    let out = resolve(&a.out);
    model
        .save(&out, &catalog)
        .with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn model_name(kind: &str, taken: &[String]) -> String {
    if !taken.iter().any(|t| t == kind) {
        return kind.to_string();
    }
    (2..).map(|i| format!("{kind}-{i}")).find(|n| !taken.contains(n)).expect("unbounded")
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    if a.models.is_empty() && a.algorithms.is_empty() {
        bail!("nothing to evaluate: give --model and/or --algorithms");
    }
    let models: Vec<(PathBuf, SavedModel)> = a
        .models
        .iter()
        .map(|p| {
            let p = resolve(p);
            let m = SavedModel::load(&p, &catalog).with_context(|| format!("loading model {}", p.display()))?;
            Ok((p, m))
        })
        .collect::<Result<_>>()?;

    let mut names: Vec<String> = Vec::new();
    for (path, m) in &models {
        let kind = match m {
            SavedModel::Wrmf(_) => "wrmf",
            SavedModel::Multvae(_) => "multvae",
        };
        let name = model_name(kind, &names);
        log::info!("{name}: {}", path.display());
        names.push(name);
    }
    let scorers: Vec<Box<dyn Scorer + '_>> = models
        .iter()
        .zip(&names)
        .map(|((_, m), name)| -> Box<dyn Scorer + '_> {
            match m {
                SavedModel::Wrmf(model) => Box::new(WrmfScorer { name: name.clone(), model }),
                SavedModel::Multvae(model) => Box::new(VaeScorer { name: name.clone(), model }),
            }
        })
        .chain(a.algorithms.iter().map(|b| -> Box<dyn Scorer> {
            match b {
                Baseline::Random => Box::new(RandomScorer),
                Baseline::Oracle => Box::new(OracleScorer),
            }
        }))
        .collect();
    let refs: Vec<&dyn Scorer> = scorers.iter().map(|s| s.as_ref()).collect();

    let genre_pool = match (a.greedy_genres, a.genres.is_empty()) {
        (Some(n), _) => catalog.select_genres_greedy(n),
        (None, false) => a.genres.clone(),
        (None, true) => COMMON_GENRES.iter().map(|g| g.to_string()).collect(),
    };
    let config = ExperimentConfig {
        bins: a.bins.clone(),
        trials_per_bin: a.trials,
        scene_genres: a.scene_genres,
        seed_genres: a.seed_genres,
        candidates_per_genre: a.candidates_per_genre,
        seeds_per_genre: a.seeds_per_genre,
        seed_pool: a.seed_pool,
        genre_pool,
        seed: a.seed,
        max_attempts: a.max_attempts,
    };
    let report = run_experiment(&catalog, &refs, &config)?;
    for (bin, (failed, resamples)) in report.bins.iter().zip(report.failed_trials.iter().zip(&report.resamples)) {
        if *failed > 0 || *resamples > 0 {
            log::info!("bin {bin}: {failed} trials could not be sampled, {resamples} attempts resampled");
        }
    }

    let mut out = create(&a.out)?;
    report.write_summary_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &a.trials_out {
        let mut w = create(p)?;
        report.write_trials_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &a.plot_data {
        let mut w = create(p)?;
        write_plot_data(&report.summaries, &mut w)?;
        w.flush()?;
    }
    print_summary_table(&report.summaries)?;
    Ok(())
}

fn print_summary_table(summaries: &[BinSummary]) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{:<12} {:>7} {:>6} {:>9} {:>9}", "algorithm", "bin", "n", "mean_auc", "stderr")?;
    for s in summaries {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:<12} {:>7} {:>6} {:>9} {:>9}",
            s.algorithm,
            s.bin.to_string(),
            s.n_trials,
            f(s.mean_auc),
            f(s.stderr)
        )?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct SummaryRow {
    algorithm: String,
    bin_lo: u8,
    bin_hi: u8,
    n_trials: usize,
    mean_auc: Option<f64>,
    stderr: Option<f64>,
}

fn read_summary_csv(path: &Path) -> Result<Vec<BinSummary>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .map(|row| {
            let r: SummaryRow = row?;
            Ok(BinSummary {
                algorithm: r.algorithm,
                bin: PopularityBin::new(r.bin_lo, r.bin_hi)?,
                n_trials: r.n_trials,
                mean_auc: r.mean_auc,
                stderr: r.stderr,
            })
        })
        .collect()
}

pub fn report(a: ReportArgs) -> Result<()> {
    if let Some(path) = &a.catalog {
        let catalog = load_catalog(path)?;
        if catalog.is_empty() {
            bail!("catalog {} has no artists", path.display());
        }
        print_percentiles(&catalog, &catalog.select_genres_greedy(a.genres))?;
    }
    if let Some(path) = &a.results {
        let summaries = read_summary_csv(&resolve(path))?;
        match &a.plot_data {
            Some(p) => {
                let mut w = create(p)?;
                write_plot_data(&summaries, &mut w)?;
                w.flush()?;
            }
            None => write_plot_data(&summaries, io::stdout().lock())?,
        }
    }
    Ok(())
}

//! Popularity-binned ranking experiment.
//!
//! For every popularity bin and trial, a simulated music scene (candidates
//! from several genres, all within the bin) and a simulated user (popular
//! seed artists from a subset of those genres) are sampled. Every scorer
//! ranks the same candidates for the same user, and the ranking is scored
//! by AUC against "candidate shares a seed genre".

use std::fmt;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, COMMON_GENRES, MAX_POPULARITY};
use crate::exec::Exec;
use crate::multvae::{rank_candidates_vae, VaeModel};
use crate::ranking::{rank_by_score, UserVector};
use crate::wrmf::{fold_in_user, rank_candidates, FactorModel};

pub type TrialRng = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("AUC is undefined without both relevant and non-relevant items")]
    UndefinedAuc,
    #[error("no valid trial after {attempts} attempts")]
    TrialExhausted { attempts: usize },
    #[error("scorer `{name}` failed: {message}")]
    Scorer { name: String, message: String },
    #[error("scorer `{0}` returned a ranking that is not a permutation of the candidates")]
    BadRanking(String),
}

/// Inclusive popularity range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PopularityBin {
    pub lo: u8,
    pub hi: u8,
}

impl PopularityBin {
    pub fn new(lo: u8, hi: u8) -> Result<Self, EvalError> {
        if lo > hi || hi > MAX_POPULARITY {
            return Err(EvalError::InvalidConfig(format!("bad popularity bin {lo}-{hi}")));
        }
        Ok(PopularityBin { lo, hi })
    }

    /// `0-4, 5-9, ..., 75-79`.
    pub fn default_bins() -> Vec<PopularityBin> {
        (0..16).map(|b| PopularityBin { lo: b * 5, hi: b * 5 + 4 }).collect()
    }

    pub fn midpoint(&self) -> f64 {
        (f64::from(self.lo) + f64::from(self.hi)) / 2.0
    }
}

impl fmt::Display for PopularityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl std::str::FromStr for PopularityBin {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::InvalidConfig(format!("cannot parse popularity bin `{s}`"));
        let (lo, hi) = s.trim().split_once('-').ok_or_else(bad)?;
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        PopularityBin::new(lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub bins: Vec<PopularityBin>,
    pub trials_per_bin: usize,
    pub scene_genres: usize,
    pub seed_genres: usize,
    pub candidates_per_genre: usize,
    pub seeds_per_genre: usize,
    /// Seed artists are drawn from this many most popular artists of each seed genre.
    pub seed_pool: usize,
    pub genre_pool: Vec<String>,
    pub seed: u64,
    /// Resampling attempts before a trial is given up.
    pub max_attempts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            bins: PopularityBin::default_bins(),
            trials_per_bin: 100,
            scene_genres: 8,
            seed_genres: 2,
            candidates_per_genre: 10,
            seeds_per_genre: 10,
            seed_pool: 100,
            genre_pool: COMMON_GENRES.iter().map(|g| g.to_string()).collect(),
            seed: 0,
            max_attempts: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let err = |m: &str| Err(EvalError::InvalidConfig(m.to_string()));
        if self.seed_genres == 0 || self.seed_genres > self.scene_genres {
            return err("need 1 <= seed genres <= scene genres");
        }
        if self.scene_genres > self.genre_pool.len() {
            return err("scene genre count exceeds the genre pool");
        }
        if self.candidates_per_genre == 0 || self.seeds_per_genre == 0 || self.seed_pool == 0 {
            return err("per-genre counts must be >= 1");
        }
        if self.max_attempts == 0 {
            return err("max attempts must be >= 1");
        }
        Ok(())
    }
}

/// One simulated scene and user.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub bin: PopularityBin,
    pub scene_genres: Vec<String>,
    /// Subset of `scene_genres`.
    pub seed_genres: Vec<String>,
    pub candidates: Vec<usize>,
    /// `relevant[i]` iff `candidates[i]` carries a seed genre.
    pub relevant: Vec<bool>,
    pub seeds: Vec<usize>,
    /// Attempts discarded before this one succeeded.
    pub resamples: usize,
}

impl Trial {
    pub fn user_vector(&self, n_artists: usize) -> UserVector {
        UserVector::new(n_artists, self.seeds.iter().copied()).expect("seeds come from the catalog")
    }
}

fn pick<R: Rng>(rng: &mut R, pool: &[usize], amount: usize) -> Vec<usize> {
    let amount = amount.min(pool.len());
    sample(rng, pool.len(), amount).into_iter().map(|i| pool[i]).collect()
}

fn try_sample_trial<R: Rng>(
    catalog: &Catalog,
    config: &ExperimentConfig,
    bin: PopularityBin,
    rng: &mut R,
) -> Result<Option<Trial>, EvalError> {
    let scene: Vec<String> = sample(rng, config.genre_pool.len(), config.scene_genres)
        .into_iter()
        .map(|i| config.genre_pool[i].clone())
        .collect();
    let seed_genres: Vec<String> = sample(rng, scene.len(), config.seed_genres)
        .into_iter()
        .map(|i| scene[i].clone())
        .collect();

    let mut seeds = Vec::new();
    for g in &seed_genres {
        let mut pool = catalog.top_popular_in_genre(g, config.seed_pool);
        pool.retain(|a| !seeds.contains(a));
        if pool.is_empty() {
            return Ok(None);
        }
        seeds.extend(pick(rng, &pool, config.seeds_per_genre));
    }

    let mut candidates = Vec::new();
    for g in &scene {
        let mut pool = catalog
            .artists_in_range(g, bin.lo, bin.hi)
            .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        pool.retain(|a| !seeds.contains(a) && !candidates.contains(a));
        candidates.extend(pick(rng, &pool, config.candidates_per_genre));
    }

    let relevant: Vec<bool> = candidates
        .iter()
        .map(|&c| seed_genres.iter().any(|g| catalog.artist(c).has_genre(g)))
        .collect();
    if !relevant.contains(&true) || !relevant.contains(&false) {
        return Ok(None);
    }
    Ok(Some(Trial {
        bin,
        scene_genres: scene,
        seed_genres,
        candidates,
        relevant,
        seeds,
        resamples: 0,
    }))
}

/// Samples one trial. An attempt is discarded and redrawn when a seed genre
/// has no artists or the candidates are all relevant or all non-relevant.
pub fn sample_trial<R: Rng>(
    catalog: &Catalog,
    config: &ExperimentConfig,
    bin: PopularityBin,
    rng: &mut R,
) -> Result<Trial, EvalError> {
    config.validate()?;
    for attempt in 0..config.max_attempts {
        if let Some(mut trial) = try_sample_trial(catalog, config, bin, rng)? {
            trial.resamples = attempt;
            return Ok(trial);
        }
    }
    Err(EvalError::TrialExhausted {
        attempts: config.max_attempts,
    })
}

/// Fraction of (relevant, non-relevant) pairs in which the relevant item is
/// ranked first. `ranked[0]` is the top of the ranking.
pub fn auc(ranked: &[bool]) -> Result<f64, EvalError> {
    let positives = ranked.iter().filter(|&&r| r).count();
    let negatives = ranked.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::UndefinedAuc);
    }
    let mut negatives_above = 0u64;
    let mut misordered = 0u64;
    for &r in ranked {
        if r {
            misordered += negatives_above;
        } else {
            negatives_above += 1;
        }
    }
    let pairs = positives as u64 * negatives as u64;
    Ok((pairs - misordered) as f64 / pairs as f64)
}

/// Something that orders a trial's candidates, best first.
pub trait Scorer: Sync {
    fn name(&self) -> &str;
    /// Returns the candidates of `trial` reordered.
    fn rank(&self, trial: &Trial, rng: &mut TrialRng) -> Result<Vec<usize>, String>;
}

pub struct WrmfScorer<'m> {
    pub name: String,
    pub model: &'m FactorModel,
}

impl Scorer for WrmfScorer<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn rank(&self, trial: &Trial, _rng: &mut TrialRng) -> Result<Vec<usize>, String> {
        let user = fold_in_user(self.model, &trial.user_vector(self.model.n_artists())).map_err(|e| e.to_string())?;
        let ranked = rank_candidates(self.model, &user, &trial.candidates).map_err(|e| e.to_string())?;
        Ok(ranked.into_iter().map(|(c, _)| c).collect())
    }
}

pub struct VaeScorer<'m> {
    pub name: String,
    pub model: &'m VaeModel,
}

impl Scorer for VaeScorer<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn rank(&self, trial: &Trial, _rng: &mut TrialRng) -> Result<Vec<usize>, String> {
        let user = trial.user_vector(self.model.n_artists());
        let ranked = rank_candidates_vae(self.model, &user, &trial.candidates).map_err(|e| e.to_string())?;
        Ok(ranked.into_iter().map(|(c, _)| c).collect())
    }
}

/// Uniformly random order; expected AUC 0.5.
pub struct RandomScorer;

impl Scorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn rank(&self, trial: &Trial, rng: &mut TrialRng) -> Result<Vec<usize>, String> {
        let scored = trial.candidates.iter().map(|&c| (c, rng.random::<f64>())).collect();
        Ok(rank_by_score(scored).into_iter().map(|(c, _)| c).collect())
    }
}

/// Ranks by the true relevance labels; AUC is always 1.
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn rank(&self, trial: &Trial, _rng: &mut TrialRng) -> Result<Vec<usize>, String> {
        let scored = trial
            .candidates
            .iter()
            .zip(&trial.relevant)
            .map(|(&c, &r)| (c, if r { 1.0 } else { 0.0 }))
            .collect();
        Ok(rank_by_score(scored).into_iter().map(|(c, _)| c).collect())
    }
}

/// Independent stream for (bin, trial, slot); slot 0 samples the trial and
/// slot `a + 1` feeds scorer `a`.
pub fn trial_rng(master_seed: u64, bin: usize, trial: usize, slot: usize) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((bin as u64) << 40) | ((trial as u64) << 12) | slot as u64);
    rng
}

/// Scores one sampled trial with one scorer.
pub fn score_trial(scorer: &dyn Scorer, trial: &Trial, rng: &mut TrialRng) -> Result<f64, EvalError> {
    let ranked = scorer.rank(trial, rng).map_err(|message| EvalError::Scorer {
        name: scorer.name().to_string(),
        message,
    })?;
    let mut expected = trial.candidates.clone();
    let mut got = ranked.clone();
    expected.sort_unstable();
    got.sort_unstable();
    if expected != got {
        return Err(EvalError::BadRanking(scorer.name().to_string()));
    }
    let label = |c: usize| {
        let pos = trial.candidates.iter().position(|&x| x == c).expect("checked permutation");
        trial.relevant[pos]
    };
    auc(&ranked.iter().map(|&c| label(c)).collect::<Vec<_>>())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinSummary {
    pub algorithm: String,
    pub bin: PopularityBin,
    pub n_trials: usize,
    /// `None` when no trial in the bin completed.
    pub mean_auc: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialAuc {
    pub algorithm: String,
    pub bin: PopularityBin,
    pub trial: usize,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub algorithms: Vec<String>,
    pub bins: Vec<PopularityBin>,
    /// Algorithm-major: every bin of the first algorithm, then the next.
    pub summaries: Vec<BinSummary>,
    pub trials: Vec<TrialAuc>,
    /// Per bin, trials that could not be sampled.
    pub failed_trials: Vec<usize>,
    /// Per bin, discarded sampling attempts across all trials.
    pub resamples: Vec<usize>,
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_and_stderr(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl ExperimentReport {
    pub fn summary(&self, algorithm: &str, bin: PopularityBin) -> Option<&BinSummary> {
        self.summaries.iter().find(|s| s.algorithm == algorithm && s.bin == bin)
    }

    /// Means per bin for one algorithm, in bin order.
    pub fn means(&self, algorithm: &str) -> Vec<Option<f64>> {
        self.summaries
            .iter()
            .filter(|s| s.algorithm == algorithm)
            .map(|s| s.mean_auc)
            .collect()
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "algorithm,bin_lo,bin_hi,n_trials,mean_auc,stderr")?;
        for s in &self.summaries {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.algorithm,
                s.bin.lo,
                s.bin.hi,
                s.n_trials,
                fmt_opt(s.mean_auc),
                fmt_opt(s.stderr)
            )?;
        }
        Ok(())
    }

    pub fn write_trials_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "algorithm,bin_lo,bin_hi,trial,auc")?;
        for t in &self.trials {
            writeln!(w, "{},{},{},{},{:.6}", t.algorithm, t.bin.lo, t.bin.hi, t.trial, t.auc)?;
        }
        Ok(())
    }
}

/// Plot-ready rows (bin midpoint, mean, stderr) from summary rows; empty bins are skipped.
pub fn write_plot_data<W: Write>(summaries: &[BinSummary], mut w: W) -> std::io::Result<()> {
    writeln!(w, "algorithm,bin_mid,mean_auc,stderr")?;
    for s in summaries {
        if let (Some(m), Some(e)) = (s.mean_auc, s.stderr) {
            writeln!(w, "{},{},{:.6},{:.6}", s.algorithm, s.bin.midpoint(), m, e)?;
        }
    }
    Ok(())
}

pub fn run_experiment(
    catalog: &Catalog,
    scorers: &[&dyn Scorer],
    config: &ExperimentConfig,
) -> Result<ExperimentReport, EvalError> {
    run_experiment_with(catalog, scorers, config, Exec::default())
}

struct TrialOutcome {
    resamples: usize,
    sampled: bool,
    aucs: Vec<Option<f64>>,
}

/// Runs every (bin, trial) job, possibly in parallel; the result does not
/// depend on `exec` because every job draws from its own stream.
pub fn run_experiment_with(
    catalog: &Catalog,
    scorers: &[&dyn Scorer],
    config: &ExperimentConfig,
    exec: Exec,
) -> Result<ExperimentReport, EvalError> {
    config.validate()?;
    let n_trials = config.trials_per_bin;
    let outcomes = exec.map(config.bins.len() * n_trials, |job| {
        let (b, t) = (job / n_trials, job % n_trials);
        let bin = config.bins[b];
        let mut rng = trial_rng(config.seed, b, t, 0);
        let trial = match sample_trial(catalog, config, bin, &mut rng) {
            Ok(trial) => trial,
            Err(e) => {
                log::debug!("bin {bin} trial {t}: {e}");
                return TrialOutcome {
                    resamples: config.max_attempts,
                    sampled: false,
                    aucs: vec![None; scorers.len()],
                };
            }
        };
        let aucs = scorers
            .iter()
            .enumerate()
            .map(|(a, scorer)| {
                let mut rng = trial_rng(config.seed, b, t, a + 1);
                match score_trial(*scorer, &trial, &mut rng) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        log::warn!("bin {bin} trial {t}: {e}");
                        None
                    }
                }
            })
            .collect();
        TrialOutcome {
            resamples: trial.resamples,
            sampled: true,
            aucs,
        }
    });

    let algorithms: Vec<String> = scorers.iter().map(|s| s.name().to_string()).collect();
    let mut summaries = Vec::new();
    let mut trials = Vec::new();
    for (a, name) in algorithms.iter().enumerate() {
        for (b, &bin) in config.bins.iter().enumerate() {
            let values: Vec<f64> = outcomes[b * n_trials..(b + 1) * n_trials]
                .iter()
                .enumerate()
                .filter_map(|(t, o)| {
                    let v = o.aucs[a]?;
                    trials.push(TrialAuc {
                        algorithm: name.clone(),
                        bin,
                        trial: t,
                        auc: v,
                    });
                    Some(v)
                })
                .collect();
            let stats = mean_and_stderr(&values);
            summaries.push(BinSummary {
                algorithm: name.clone(),
                bin,
                n_trials: values.len(),
                mean_auc: stats.map(|s| s.0),
                stderr: stats.map(|s| s.1),
            });
        }
    }
    let per_bin = |f: &dyn Fn(&TrialOutcome) -> usize| -> Vec<usize> {
        (0..config.bins.len())
            .map(|b| outcomes[b * n_trials..(b + 1) * n_trials].iter().map(f).sum())
            .collect()
    };
    Ok(ExperimentReport {
        algorithms,
        bins: config.bins.clone(),
        summaries,
        trials,
        failed_trials: per_bin(&|o| usize::from(!o.sampled)),
        resamples: per_bin(&|o| o.resamples),
    })
}

//! `localrec`: generate catalogs, train recommenders, and run the
//! popularity-binned evaluation.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use localrec::eval::PopularityBin;

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "localrec", version, about)]
struct Cli {
    /// JSON object of flag values; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for training and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic catalog, or crawl one from a fixture file.
    Synth(SynthArgs),
    /// Train a recommender on a catalog.
    Train(TrainArgs),
    /// Run the popularity-binned AUC experiment.
    Eval(EvalArgs),
    /// Print catalog popularity percentiles or plot data from a results CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output catalog (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    artists: usize,
    #[arg(long, default_value_t = 20)]
    genres: usize,
    /// Popularity weights fall off as (v + 1)^-exponent.
    #[arg(long, default_value_t = 0.65)]
    popularity_exponent: f64,
    #[arg(long, default_value_t = 0.9)]
    intra_genre_prob: f64,
    #[arg(long, default_value_t = 0.1)]
    cross_genre_prob: f64,
    #[arg(long, default_value_t = 20)]
    similar_len: usize,
    /// Similar-list targets are weighted by (popularity + 1)^bias.
    #[arg(long, default_value_t = 1.0)]
    popularity_bias: f64,
    /// Crawl this JSON-lines catalog instead of generating one.
    #[arg(long, value_name = "FILE")]
    from_fixture: Option<PathBuf>,
    /// Crawl start ids, comma separated.
    #[arg(long, value_delimiter = ',', requires = "from_fixture")]
    seeds: Vec<String>,
    /// Maximum number of artists to crawl.
    #[arg(long, default_value_t = 5000, requires = "from_fixture")]
    limit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Wrmf,
    Multvae,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,

    /// [wrmf] latent factors.
    #[arg(long, default_value_t = 128, help_heading = "WRMF")]
    factors: usize,
    /// [wrmf] L2 regularization.
    #[arg(long, default_value_t = 0.1, help_heading = "WRMF")]
    lambda: f64,
    /// [wrmf] confidence scale: c = 1 + alpha * p.
    #[arg(long, default_value_t = 15.0, help_heading = "WRMF")]
    alpha: f64,
    /// [wrmf] ALS sweeps.
    #[arg(long, default_value_t = 15, help_heading = "WRMF")]
    sweeps: usize,

    #[arg(long, default_value_t = 600, help_heading = "Mult-VAE")]
    hidden: usize,
    #[arg(long, default_value_t = 200, help_heading = "Mult-VAE")]
    bottleneck: usize,
    #[arg(long, default_value_t = 0.2, help_heading = "Mult-VAE")]
    dropout: f64,
    #[arg(long, default_value_t = 250, help_heading = "Mult-VAE")]
    batch_size: usize,
    #[arg(long, default_value_t = 100, help_heading = "Mult-VAE")]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3, help_heading = "Mult-VAE")]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9, help_heading = "Mult-VAE")]
    adam_beta1: f64,
    #[arg(long, default_value_t = 0.999, help_heading = "Mult-VAE")]
    adam_beta2: f64,
    #[arg(long, default_value_t = 1e-8, help_heading = "Mult-VAE")]
    adam_epsilon: f64,
    /// Weight of the KL term.
    #[arg(long, default_value_t = 0.0, help_heading = "Mult-VAE")]
    kl_weight: f64,
    /// Fraction of rows held out for early stopping (0 disables it).
    #[arg(long, default_value_t = 0.0, help_heading = "Mult-VAE")]
    validation_fraction: f64,
    #[arg(long, default_value_t = 5, help_heading = "Mult-VAE")]
    patience: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    catalog: PathBuf,
    /// Trained model file; repeat for several models.
    #[arg(long = "model", value_name = "FILE")]
    models: Vec<PathBuf>,
    /// Baseline rankers to include: random, oracle.
    #[arg(long, value_delimiter = ',', value_enum)]
    algorithms: Vec<Baseline>,
    #[arg(long)]
    seed: u64,
    /// Summary CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-trial AUC CSV.
    #[arg(long, value_name = "FILE")]
    trials_out: Option<PathBuf>,
    /// Bin midpoint, mean and stderr per algorithm, for plotting.
    #[arg(long, value_name = "FILE")]
    plot_data: Option<PathBuf>,
    /// Popularity bins, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0-4,5-9,10-14,15-19,20-24,25-29,30-34,35-39,40-44,45-49,50-54,55-59,60-64,65-69,70-74,75-79"
    )]
    bins: Vec<PopularityBin>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    scene_genres: usize,
    #[arg(long, default_value_t = 2)]
    seed_genres: usize,
    #[arg(long, default_value_t = 10)]
    candidates_per_genre: usize,
    #[arg(long, default_value_t = 10)]
    seeds_per_genre: usize,
    /// Seeds come from this many most popular artists of each seed genre.
    #[arg(long, default_value_t = 100)]
    seed_pool: usize,
    /// Genre pool, comma separated (default: 20 common genres).
    #[arg(long, value_delimiter = ',', conflicts_with = "greedy_genres")]
    genres: Vec<String>,
    /// Use the N genres that greedily cover the most catalog artists as the pool.
    #[arg(long, value_name = "N")]
    greedy_genres: Option<usize>,
    #[arg(long, default_value_t = 20)]
    max_attempts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Random,
    Oracle,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(true))]
struct ReportArgs {
    /// Print popularity percentiles for this catalog.
    #[arg(long, group = "input")]
    catalog: Option<PathBuf>,
    /// Per-genre rows for the N greedily selected genres.
    #[arg(long, default_value_t = 0, requires = "catalog")]
    genres: usize,
    /// Summary CSV written by `eval`.
    #[arg(long, group = "input")]
    results: Option<PathBuf>,
    /// Write plot data derived from `--results` here instead of stdout.
    #[arg(long, value_name = "FILE", requires = "results")]
    plot_data: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let args = config::merge_config_file(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    if let Some(n) = cli.threads {
        set_threads(n)?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> Result<()> {
    log::warn!("built without the `parallel` feature; --threads is ignored");
    Ok(())
}

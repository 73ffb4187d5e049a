//! Catalog acquisition: breadth-first snowball crawl over a similarity
//! provider, and a seeded generator for long-tail synthetic catalogs.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{read_records, ArtistRecord, Catalog, CatalogError, COMMON_GENRES, MAX_POPULARITY};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("unknown artist `{0}`")]
    NotFound(String),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("lookup of seed artist `{id}` failed: {source}")]
    SeedLookup {
        id: String,
        #[source]
        source: ProviderError,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("{artists} artists cannot fill similar lists of length {similar_len}")]
    TooFewArtists { artists: usize, similar_len: usize },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Source of artist records: popularity, genres and an ordered similar-artist list.
/// Implementations must return identical results for repeated queries.
pub trait SimilarityProvider {
    fn fetch(&self, id: &str) -> Result<ArtistRecord, ProviderError>;
}

#[derive(Clone, Debug, Default)]
struct RecordTable(HashMap<String, ArtistRecord>);

impl RecordTable {
    fn get(&self, id: &str) -> Result<ArtistRecord, ProviderError> {
        self.0
            .get(id)
            .cloned()
            .ok_or_else(|| ProviderError::NotFound(id.to_string()))
    }
}

/// Serves records from an in-memory catalog, e.g. one made by [`generate_catalog`].
#[derive(Clone, Debug, Default)]
pub struct SyntheticProvider(RecordTable);

impl SyntheticProvider {
    pub fn new(catalog: &Catalog) -> Self {
        SyntheticProvider(RecordTable(
            catalog.to_records().into_iter().map(|r| (r.id.clone(), r)).collect(),
        ))
    }
}

impl SimilarityProvider for SyntheticProvider {
    fn fetch(&self, id: &str) -> Result<ArtistRecord, ProviderError> {
        self.0.get(id)
    }
}

/// Serves records from a JSON Lines fixture in catalog format. References to
/// artists missing from the file are allowed and surface as lookup failures.
#[derive(Clone, Debug, Default)]
pub struct FixtureProvider(RecordTable);

impl FixtureProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let records = read_records(BufReader::new(File::open(path)?))?;
        Ok(Self::from_records(records))
    }

    pub fn from_records(records: Vec<ArtistRecord>) -> Self {
        FixtureProvider(RecordTable(records.into_iter().map(|r| (r.id.clone(), r)).collect()))
    }
}

impl SimilarityProvider for FixtureProvider {
    fn fetch(&self, id: &str) -> Result<ArtistRecord, ProviderError> {
        self.0.get(id)
    }
}

#[derive(Debug)]
pub struct CrawlResult {
    pub catalog: Catalog,
    /// One entry per discovered artist whose lookup failed.
    pub warnings: Vec<String>,
}

/// Breadth-first snowball sampling from `seeds`, stopping after `limit`
/// successful fetches. Similarity entries pointing at artists that were never
/// fetched are dropped.
pub fn snowball_crawl<P: SimilarityProvider + ?Sized>(
    provider: &P,
    seeds: &[String],
    limit: usize,
) -> Result<CrawlResult, SynthError> {
    let seed_set: HashSet<&str> = seeds.iter().map(String::as_str).collect();
    let mut seen: HashSet<String> = HashSet::new();
    let mut queue = VecDeque::new();
    for s in seeds {
        if seen.insert(s.clone()) {
            queue.push_back(s.clone());
        }
    }

    let mut fetched = Vec::new();
    let mut warnings = Vec::new();
    while fetched.len() < limit {
        let Some(id) = queue.pop_front() else { break };
        match provider.fetch(&id) {
            Ok(rec) => {
                for sim in &rec.similar {
                    if seen.insert(sim.clone()) {
                        queue.push_back(sim.clone());
                    }
                }
                fetched.push(rec);
            }
            Err(source) if seed_set.contains(id.as_str()) => {
                return Err(SynthError::SeedLookup { id, source });
            }
            Err(e) => {
                log::warn!("skipping artist: {e}");
                warnings.push(e.to_string());
            }
        }
    }

    let kept: HashSet<String> = fetched.iter().map(|r| r.id.clone()).collect();
    for rec in &mut fetched {
        rec.similar.retain(|s| kept.contains(s));
    }
    Ok(CrawlResult {
        catalog: Catalog::from_records(fetched)?,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub artists: usize,
    /// The first 20 genres use the common genre names; extra ones are numbered.
    pub genres: usize,
    /// Popularity `v` in `0..=100` is drawn with weight `(v + 1)^-exponent`.
    pub popularity_exponent: f64,
    /// Relative propensity of a similar-list slot to pick a same-genre artist.
    pub intra_genre_prob: f64,
    /// Relative propensity of a slot to pick an artist sharing no genre.
    pub cross_genre_prob: f64,
    pub similar_len: usize,
    /// Similar-artist targets are drawn with weight `(popularity + 1)^popularity_bias`.
    pub popularity_bias: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            artists: 5000,
            genres: 20,
            popularity_exponent: 0.65,
            intra_genre_prob: 0.9,
            cross_genre_prob: 0.1,
            similar_len: 20,
            popularity_bias: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.intra_genre_prob) || !prob(self.cross_genre_prob) {
            return Err(SynthError::InvalidConfig("probabilities must be in [0, 1]"));
        }
        if self.intra_genre_prob + self.cross_genre_prob == 0.0 {
            return Err(SynthError::InvalidConfig("intra and cross probabilities cannot both be 0"));
        }
        if self.similar_len == 0 {
            return Err(SynthError::InvalidConfig("similar list length must be >= 1"));
        }
        if self.genres == 0 {
            return Err(SynthError::InvalidConfig("need at least one genre"));
        }
        if !self.popularity_exponent.is_finite() || !self.popularity_bias.is_finite() {
            return Err(SynthError::InvalidConfig("exponents must be finite"));
        }
        if self.artists > 0 && self.artists <= self.similar_len {
            return Err(SynthError::TooFewArtists {
                artists: self.artists,
                similar_len: self.similar_len,
            });
        }
        Ok(())
    }
}

pub fn genre_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match COMMON_GENRES.get(i) {
            Some(g) => g.to_string(),
            None => format!("genre {}", i + 1),
        })
        .collect()
}

/// Number of genres per artist: 1, 2 or 3 with these weights.
const GENRE_COUNT_WEIGHTS: [f64; 3] = [0.6, 0.3, 0.1];
const REJECTION_TRIES: usize = 64;

/// Generates a deterministic catalog with long-tail popularity and
/// genre-clustered, popularity-biased similar lists.
pub fn generate_catalog(config: &SynthConfig) -> Result<Catalog, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.artists;
    let names = genre_names(config.genres);

    let pop_dist = WeightedIndex::new(
        (0..=MAX_POPULARITY).map(|v| (f64::from(v) + 1.0).powf(-config.popularity_exponent)),
    )
    .map_err(|_| SynthError::InvalidConfig("popularity weights"))?;
    let count_dist = WeightedIndex::new(GENRE_COUNT_WEIGHTS).expect("static weights");

    let popularity: Vec<u8> = (0..n).map(|_| pop_dist.sample(&mut rng) as u8).collect();
    let genres: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let k = (count_dist.sample(&mut rng) + 1).min(config.genres);
            let mut gs = sample(&mut rng, config.genres, k).into_vec();
            gs.sort_unstable();
            gs
        })
        .collect();

    let mut members = vec![Vec::new(); config.genres];
    for (i, gs) in genres.iter().enumerate() {
        for &g in gs {
            members[g].push(i);
        }
    }
    let weight: Vec<f64> = popularity
        .iter()
        .map(|&p| (f64::from(p) + 1.0).powf(config.popularity_bias))
        .collect();
    let member_dist: Vec<Option<WeightedIndex<f64>>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&i| weight[i])).ok())
        .collect();
    let global_dist = WeightedIndex::new(&weight).ok();
    let p_intra = config.intra_genre_prob / (config.intra_genre_prob + config.cross_genre_prob);

    let shares_genre = |a: usize, b: usize| genres[a].iter().any(|g| genres[b].contains(g));

    let mut similar: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(config.similar_len);
        let mut intra_open = config.intra_genre_prob > 0.0;
        let mut cross_open = config.cross_genre_prob > 0.0;
        while chosen.len() < config.similar_len && (intra_open || cross_open) {
            let want_intra = match (intra_open, cross_open) {
                (true, true) => rng.random_bool(p_intra),
                (intra, _) => intra,
            };
            let usable = |j: usize, chosen: &[usize]| j != i && !chosen.contains(&j) && shares_genre(i, j) == want_intra;

            let mut pick = None;
            for _ in 0..REJECTION_TRIES {
                let j = if want_intra {
                    let g = genres[i][rng.random_range(0..genres[i].len())];
                    member_dist[g].as_ref().map(|d| members[g][d.sample(&mut rng)])
                } else {
                    global_dist.as_ref().map(|d| d.sample(&mut rng))
                };
                if let Some(j) = j.filter(|&j| usable(j, &chosen)) {
                    pick = Some(j);
                    break;
                }
            }
            if pick.is_none() {
                // Rejection kept failing: draw exactly from what is left of this pool.
                let pool: Vec<usize> = if want_intra {
                    let mut p: Vec<usize> = genres[i].iter().flat_map(|&g| members[g].iter().copied()).collect();
                    p.sort_unstable();
                    p.dedup();
                    p.retain(|&j| usable(j, &chosen));
                    p
                } else {
                    (0..n).filter(|&j| usable(j, &chosen)).collect()
                };
                pick = WeightedIndex::new(pool.iter().map(|&j| weight[j]))
                    .ok()
                    .map(|d| pool[d.sample(&mut rng)]);
            }
            match pick {
                Some(j) => chosen.push(j),
                None if want_intra => intra_open = false,
                None => cross_open = false,
            }
        }
        similar.push(chosen);
    }

    let width = n.max(1).to_string().len();
    let id = |i: usize| format!("ar{i:0width$}");
    let records = (0..n)
        .map(|i| ArtistRecord {
            id: id(i),
            name: format!("Artist {}", i + 1),
            popularity: i64::from(popularity[i]),
            genres: genres[i].iter().map(|&g| names[g].clone()).collect(),
            similar: similar[i].iter().map(|&j| id(j)).collect(),
        })
        .collect();
    Ok(Catalog::from_records(records)?)
}

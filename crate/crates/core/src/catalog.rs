//! Artists, genres, popularity and the directed artist-artist similarity matrix.
//!
//! A [`Catalog`] is immutable once built. Rows of the similarity graph are
//! ordered by artist id, so a dense index doubles as a stable id ordering.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAX_POPULARITY: u8 = 100;

/// Twenty common genres chosen by greedy artist coverage; the default genre pool.
pub const COMMON_GENRES: [&str; 20] = [
    "rock", "jazz", "punk", "reggae",
    "electronic", "metal", "indie r&b", "metalcore",
    "pop", "indie", "latin", "classical",
    "folk", "country", "dubstep", "indie pop",
    "rap", "tech house", "norteno", "house",
];

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("artist `{id}`: popularity {popularity} outside [0, 100]")]
    PopularityOutOfRange { id: String, popularity: i64 },
    #[error("duplicate artist id `{0}`")]
    DuplicateId(String),
    #[error("artist `{artist}` lists unknown similar artist `{missing}`")]
    DanglingReference { artist: String, missing: String },
    #[error("invalid popularity range {lo}..={hi}")]
    InvalidRange { lo: u8, hi: u8 },
    #[error("no artists match the filter")]
    EmptySubset,
}

/// One line of a catalog (or fixture) file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtistRecord {
    pub id: String,
    pub name: String,
    pub popularity: i64,
    #[serde(default)]
    pub genres: Vec<String>,
    #[serde(default)]
    pub similar: Vec<String>,
}

impl ArtistRecord {
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, CatalogError> {
        serde_json::from_str(line).map_err(|source| CatalogError::Parse {
            line: line_no,
            source,
        })
    }
}

/// Reads every non-blank line of a JSON Lines file as an [`ArtistRecord`].
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ArtistRecord>, CatalogError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(ArtistRecord::parse_line(&line, i + 1)?);
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artist {
    pub id: String,
    pub name: String,
    pub popularity: u8,
    pub genres: Vec<String>,
}

impl Artist {
    pub fn has_genre(&self, genre: &str) -> bool {
        self.genres.iter().any(|g| g == genre)
    }
}

/// Bijection between artist ids and dense row indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArtistIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl ArtistIndex {
    /// `ids` must already be sorted and unique.
    fn from_sorted(ids: Vec<String>) -> Self {
        let lookup = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        ArtistIndex { ids, lookup }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

}

/// Sparse binary artist-artist matrix. Row `i` holds the sorted column
/// indices of the artists listed as similar to artist `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimilarityGraph {
    index: ArtistIndex,
    rows: Vec<Vec<usize>>,
}

impl SimilarityGraph {
    /// Builds a graph from explicit rows; ids become `0..n` zero-padded.
    /// Intended for tests and small synthetic instances.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let width = n.max(1).to_string().len();
        let ids = (0..n).map(|i| format!("{i:0width$}")).collect();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let set: BTreeSet<usize> = row.into_iter().filter(|&j| j != i).collect();
                assert!(set.iter().all(|&j| j < n), "column index out of range");
                set.into_iter().collect()
            })
            .collect();
        SimilarityGraph {
            index: ArtistIndex::from_sorted(ids),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index(&self) -> &ArtistIndex {
        &self.index
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    /// Column-major view: entry `j` lists the rows that contain column `j`.
    pub fn transpose_rows(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                cols[j].push(i);
            }
        }
        cols
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.len()];
        for &j in self.rows.iter().flatten() {
            deg[j] += 1;
        }
        deg
    }
}

/// Popularity percentiles of a subset of artists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PercentileReport {
    pub label: String,
    pub count: usize,
    pub p25: u8,
    pub p50: u8,
    pub p75: u8,
    pub p95: u8,
}

impl PercentileReport {
    pub fn header() -> String {
        format!(
            "{:<32} {:>8} {:>5} {:>5} {:>5} {:>5}",
            "subset", "artists", "25%", "50%", "75%", "95%"
        )
    }
}

impl fmt::Display for PercentileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<32} {:>8} {:>5} {:>5} {:>5} {:>5}",
            self.label, self.count, self.p25, self.p50, self.p75, self.p95
        )
    }
}

/// Nearest-rank percentile of an ascending-sorted, nonempty slice.
pub fn nearest_rank(sorted: &[u8], percent: usize) -> u8 {
    let n = sorted.len();
    let rank = (percent * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

#[derive(Clone, Debug, Default)]
pub struct Catalog {
    artists: Vec<Artist>,
    graph: SimilarityGraph,
    by_genre: BTreeMap<String, Vec<usize>>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.artists == other.artists && self.graph == other.graph
    }
}

impl Catalog {
    /// Validates records and resolves similar-artist ids. Rows end up sorted
    /// by id; duplicate and self references in `similar` are dropped.
    pub fn from_records(mut records: Vec<ArtistRecord>) -> Result<Self, CatalogError> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in records.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CatalogError::DuplicateId(pair[0].id.clone()));
            }
        }
        let index = ArtistIndex::from_sorted(records.iter().map(|r| r.id.clone()).collect());

        let mut artists = Vec::with_capacity(records.len());
        let mut rows = Vec::with_capacity(records.len());
        for (i, rec) in records.into_iter().enumerate() {
            if !(0..=i64::from(MAX_POPULARITY)).contains(&rec.popularity) {
                return Err(CatalogError::PopularityOutOfRange {
                    id: rec.id,
                    popularity: rec.popularity,
                });
            }
            let mut row = BTreeSet::new();
            for sim in &rec.similar {
                let j = index
                    .index_of(sim)
                    .ok_or_else(|| CatalogError::DanglingReference {
                        artist: rec.id.clone(),
                        missing: sim.clone(),
                    })?;
                if j != i {
                    row.insert(j);
                }
            }
            rows.push(row.into_iter().collect());

            let mut seen = HashSet::new();
            let genres = rec
                .genres
                .into_iter()
                .filter(|g| seen.insert(g.clone()))
                .collect();
            artists.push(Artist {
                id: rec.id,
                name: rec.name,
                popularity: rec.popularity as u8,
                genres,
            });
        }

        let mut by_genre: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, a) in artists.iter().enumerate() {
            for g in &a.genres {
                by_genre.entry(g.clone()).or_default().push(i);
            }
        }

        Ok(Catalog {
            artists,
            graph: SimilarityGraph { index, rows },
            by_genre,
        })
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, CatalogError> {
        Self::from_records(read_records(reader)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn to_records(&self) -> Vec<ArtistRecord> {
        self.artists
            .iter()
            .enumerate()
            .map(|(i, a)| ArtistRecord {
                id: a.id.clone(),
                name: a.name.clone(),
                popularity: i64::from(a.popularity),
                genres: a.genres.clone(),
                similar: self
                    .graph
                    .row(i)
                    .iter()
                    .map(|&j| self.artists[j].id.clone())
                    .collect(),
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<(), CatalogError> {
        for rec in self.to_records() {
            serde_json::to_writer(&mut writer, &rec).map_err(std::io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CatalogError> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn len(&self) -> usize {
        self.artists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artists.is_empty()
    }

    pub fn artists(&self) -> &[Artist] {
        &self.artists
    }

    pub fn artist(&self, index: usize) -> &Artist {
        &self.artists[index]
    }

    pub fn graph(&self) -> &SimilarityGraph {
        &self.graph
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.graph.index.index_of(id)
    }

    /// SHA-256 over the canonical records (the bytes [`Catalog::write`]
    /// produces). Models store it to detect a catalog mismatch on load.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for rec in self.to_records() {
            hasher.update(serde_json::to_vec(&rec).expect("records serialize"));
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// All genre tags in lexicographic order.
    pub fn genres(&self) -> impl Iterator<Item = &str> {
        self.by_genre.keys().map(String::as_str)
    }

    /// Artist indices carrying `genre`, ascending.
    pub fn genre_members(&self, genre: &str) -> &[usize] {
        self.by_genre.get(genre).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn popularity_percentiles(
        &self,
        label: &str,
        filter: impl Fn(&Artist) -> bool,
    ) -> Result<PercentileReport, CatalogError> {
        let mut pops: Vec<u8> = self
            .artists
            .iter()
            .filter(|a| filter(a))
            .map(|a| a.popularity)
            .collect();
        if pops.is_empty() {
            return Err(CatalogError::EmptySubset);
        }
        pops.sort_unstable();
        Ok(PercentileReport {
            label: label.to_string(),
            count: pops.len(),
            p25: nearest_rank(&pops, 25),
            p50: nearest_rank(&pops, 50),
            p75: nearest_rank(&pops, 75),
            p95: nearest_rank(&pops, 95),
        })
    }

    /// Greedy maximum-coverage genre selection: repeatedly take the genre
    /// tagging the most still-uncovered artists, then mark those covered.
    /// Ties go to the lexicographically smallest genre name.
    pub fn select_genres_greedy(&self, n: usize) -> Vec<String> {
        let mut covered = vec![false; self.len()];
        let mut picked = Vec::new();
        while picked.len() < n {
            let mut best: Option<(&str, usize)> = None;
            for (genre, members) in &self.by_genre {
                let gain = members.iter().filter(|&&i| !covered[i]).count();
                // BTreeMap iterates in name order, so strict > keeps the first on ties.
                if gain > best.map_or(0, |(_, g)| g) {
                    best = Some((genre, gain));
                }
            }
            let Some((genre, _)) = best else { break };
            for &i in self.genre_members(genre) {
                covered[i] = true;
            }
            picked.push(genre.to_string());
        }
        picked
    }

    /// Artists tagged `genre` with popularity in `lo..=hi`, by id.
    pub fn artists_in_range(&self, genre: &str, lo: u8, hi: u8) -> Result<Vec<usize>, CatalogError> {
        if lo > hi || hi > MAX_POPULARITY {
            return Err(CatalogError::InvalidRange { lo, hi });
        }
        Ok(self
            .genre_members(genre)
            .iter()
            .copied()
            .filter(|&i| (lo..=hi).contains(&self.artists[i].popularity))
            .collect())
    }

    /// Up to `n` artists of `genre`, most popular first, ties by id.
    pub fn top_popular_in_genre(&self, genre: &str, n: usize) -> Vec<usize> {
        let mut members = self.genre_members(genre).to_vec();
        // members are ascending, so a stable sort keeps id order within ties
        members.sort_by(|&a, &b| self.artists[b].popularity.cmp(&self.artists[a].popularity));
        members.truncate(n);
        members
    }
}

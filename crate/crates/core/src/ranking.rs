//! Seed-artist vectors and score ordering shared by both recommenders.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UserVectorError {
    #[error("seed index {index} out of range for {dim} artists")]
    OutOfRange { index: usize, dim: usize },
}

/// Sparse binary preference vector over all artists: 1 at each seed artist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserVector {
    dim: usize,
    seeds: Vec<usize>,
}

impl UserVector {
    pub fn new(dim: usize, seeds: impl IntoIterator<Item = usize>) -> Result<Self, UserVectorError> {
        let seeds: BTreeSet<usize> = seeds.into_iter().collect();
        if let Some(&index) = seeds.iter().find(|&&i| i >= dim) {
            return Err(UserVectorError::OutOfRange { index, dim });
        }
        Ok(UserVector {
            dim,
            seeds: seeds.into_iter().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sorted, unique seed indices.
    pub fn seeds(&self) -> &[usize] {
        &self.seeds
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &i in &self.seeds {
            v[i] = 1.0;
        }
        v
    }
}

/// Sorts `(artist, score)` pairs by score descending, breaking ties by
/// artist index ascending (which is id order in a catalog).
pub fn rank_by_score(mut scored: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

//! Artist recommendation over artist-artist similarity data, and an
//! experiment harness that measures how ranking quality changes with
//! candidate popularity.
//!
//! Two recommenders share one [`catalog::SimilarityGraph`]:
//! [`wrmf`] (confidence-weighted matrix factorization trained with ALS) and
//! [`multvae`] (an MLP autoencoder with a stochastic latent layer). [`eval`]
//! samples simulated users and local scenes per popularity bin and reports
//! the mean AUC of each recommender.

pub mod catalog;
pub mod eval;
pub mod exec;
pub mod linalg;
pub mod model_io;
pub mod ranking;
pub mod synth;
pub mod multvae;
pub mod wrmf;

pub use catalog::{Artist, ArtistRecord, Catalog, CatalogError, PercentileReport, SimilarityGraph};
pub use eval::{ExperimentConfig, ExperimentReport, PopularityBin, Scorer, Trial};
pub use exec::Exec;
pub use model_io::{ModelKind, SavedModel};
pub use multvae::{VaeConfig, VaeModel};
pub use ranking::UserVector;
pub use wrmf::{FactorModel, WrmfConfig};

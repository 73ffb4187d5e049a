//! Model files.
//!
//! Layout: the magic line `LRMODEL1`, one JSON header line, then the
//! parameters as little-endian `f64`. The header records the model kind,
//! its config, and the fingerprint of the catalog it was trained on.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::multvae::{VaeConfig, VaeError, VaeModel};
use crate::wrmf::{FactorModel, WrmfConfig, WrmfError};

const MAGIC: &[u8] = b"LRMODEL1\n";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model file: {0}")]
    Format(String),
    #[error("bad model header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("model was trained on catalog {found}, but the catalog given has fingerprint {expected}")]
    CatalogMismatch { expected: String, found: String },
    #[error(transparent)]
    Wrmf(#[from] WrmfError),
    #[error(transparent)]
    Vae(#[from] VaeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Wrmf,
    Multvae,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ConfigHeader {
    Wrmf(WrmfConfig),
    Multvae(VaeConfig),
}

#[derive(Serialize, Deserialize)]
struct Header {
    catalog: String,
    n_artists: usize,
    model: ConfigHeader,
    values: usize,
}

#[derive(Debug)]
pub enum SavedModel {
    Wrmf(FactorModel),
    Multvae(VaeModel),
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Wrmf(_) => ModelKind::Wrmf,
            SavedModel::Multvae(_) => ModelKind::Multvae,
        }
    }

    pub fn n_artists(&self) -> usize {
        match self {
            SavedModel::Wrmf(m) => m.n_artists(),
            SavedModel::Multvae(m) => m.n_artists(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W, catalog_fingerprint: &str) -> Result<(), ModelIoError> {
        let (model, values): (ConfigHeader, Vec<f64>) = match self {
            SavedModel::Wrmf(m) => (
                ConfigHeader::Wrmf(m.config().clone()),
                m.row_factors().iter().chain(m.col_factors().iter()).copied().collect(),
            ),
            SavedModel::Multvae(m) => (ConfigHeader::Multvae(m.config().clone()), m.params().to_vec()),
        };
        let header = Header {
            catalog: catalog_fingerprint.to_string(),
            n_artists: self.n_artists(),
            model,
            values: values.len(),
        };
        w.write_all(MAGIC)?;
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Returns the model and the fingerprint of its training catalog.
    pub fn read<R: BufRead>(mut r: R) -> Result<(SavedModel, String), ModelIoError> {
        let mut magic = [0u8; MAGIC.len()];
        r.read_exact(&mut magic)
            .map_err(|_| ModelIoError::Format("file too short".into()))?;
        if magic != MAGIC {
            return Err(ModelIoError::Format("bad magic".into()));
        }
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line)?;

        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != header.values * 8 {
            return Err(ModelIoError::Format(format!(
                "expected {} values, found {} bytes",
                header.values,
                bytes.len()
            )));
        }
        let mut values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();

        let n = header.n_artists;
        let model = match header.model {
            ConfigHeader::Wrmf(config) => {
                let k = config.factors;
                if values.len() != 2 * n * k {
                    return Err(ModelIoError::Format("factor shapes do not match the header".into()));
                }
                let cols = values.split_off(n * k);
                let shape_err = |e: ndarray::ShapeError| ModelIoError::Format(e.to_string());
                let x = Array2::from_shape_vec((n, k), values).map_err(shape_err)?;
                let y = Array2::from_shape_vec((n, k), cols).map_err(shape_err)?;
                SavedModel::Wrmf(FactorModel::from_parts(config, x, y)?)
            }
            ConfigHeader::Multvae(config) => {
                let model = VaeModel::from_parts(config, values)?;
                if model.n_artists() != n {
                    return Err(ModelIoError::Format("input width does not match the header".into()));
                }
                SavedModel::Multvae(model)
            }
        };
        Ok((model, header.catalog))
    }

    pub fn save(&self, path: &Path, catalog: &Catalog) -> Result<(), ModelIoError> {
        self.write(BufWriter::new(File::create(path)?), &catalog.fingerprint())
    }

    /// Loads a model and checks that it was trained on `catalog`.
    pub fn load(path: &Path, catalog: &Catalog) -> Result<SavedModel, ModelIoError> {
        let (model, found) = Self::read(BufReader::new(File::open(path)?))?;
        let expected = catalog.fingerprint();
        if found != expected {
            return Err(ModelIoError::CatalogMismatch { expected, found });
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multvae::train_multvae;
    use crate::synth::{generate_catalog, SynthConfig};
    use crate::wrmf::train_wrmf;

    fn small_catalog(seed: u64) -> Catalog {
        generate_catalog(&SynthConfig {
            seed,
            artists: 60,
            genres: 4,
            similar_len: 5,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn round_trip(model: &SavedModel) -> (SavedModel, String) {
        let mut buf = Vec::new();
        model.write(&mut buf, "abc").unwrap();
        SavedModel::read(&buf[..]).unwrap()
    }

    #[test]
    fn wrmf_round_trip_is_exact() {
        let cat = small_catalog(1);
        let cfg = WrmfConfig { factors: 4, sweeps: 3, ..WrmfConfig::default() };
        let m = train_wrmf(cat.graph(), &cfg).unwrap();
        let (back, fp) = round_trip(&SavedModel::Wrmf(m.clone()));
        assert_eq!(fp, "abc");
        let SavedModel::Wrmf(back) = back else { panic!("wrong kind") };
        assert_eq!(back.row_factors(), m.row_factors());
        assert_eq!(back.col_factors(), m.col_factors());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn vae_round_trip_is_exact() {
        let cat = small_catalog(2);
        let cfg = VaeConfig { hidden: 8, bottleneck: 3, epochs: 2, batch_size: 16, ..VaeConfig::default() };
        let (m, _) = train_multvae(cat.graph(), &cfg).unwrap();
        let (back, _) = round_trip(&SavedModel::Multvae(m.clone()));
        let SavedModel::Multvae(back) = back else { panic!("wrong kind") };
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn catalog_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let a = small_catalog(3);
        let b = small_catalog(4);
        let cfg = WrmfConfig { factors: 2, sweeps: 1, ..WrmfConfig::default() };
        let m = SavedModel::Wrmf(train_wrmf(a.graph(), &cfg).unwrap());
        m.save(&path, &a).unwrap();
        assert!(SavedModel::load(&path, &a).is_ok());
        // same ids, different content
        assert!(matches!(
            SavedModel::load(&path, &b),
            Err(ModelIoError::CatalogMismatch { .. })
        ));
        let renamed: Vec<_> = b
            .to_records()
            .into_iter()
            .map(|mut r| {
                r.id = format!("x{}", r.id);
                r.similar = r.similar.iter().map(|s| format!("x{s}")).collect();
                r
            })
            .collect();
        let c = Catalog::from_records(renamed).unwrap();
        assert!(matches!(
            SavedModel::load(&path, &c),
            Err(ModelIoError::CatalogMismatch { .. })
        ));
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let cat = small_catalog(5);
        let cfg = WrmfConfig { factors: 2, sweeps: 1, ..WrmfConfig::default() };
        let mut buf = Vec::new();
        SavedModel::Wrmf(train_wrmf(cat.graph(), &cfg).unwrap())
            .write(&mut buf, "f")
            .unwrap();
        buf.pop();
        assert!(matches!(SavedModel::read(&buf[..]), Err(ModelIoError::Format(_))));
        assert!(matches!(SavedModel::read(&b"hello"[..]), Err(ModelIoError::Format(_))));
    }
}

//! On-disk knowledge base: the covered training rasters plus every published
//! model version.
//!
//! ```text
//! kb/
//!   rasters/<sha256>.rec     one raster record per file
//!   models/v<N>.model        text model files, never overwritten
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CageError, Result};
use crate::monitor::anomaly::{calibrate_threshold, train, AnomalyModel, Autoencoder, TrainParams};
use crate::raster::SceneRaster;
use crate::record;

pub const MODEL_MAGIC: &str = "# cage anomaly model, format 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterRecord {
    pub digest: String,
    pub raster: SceneRaster,
}

impl RasterRecord {
    pub fn new(raster: SceneRaster) -> Self {
        RasterRecord {
            digest: raster.digest(),
            raster,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    root: PathBuf,
}

impl KnowledgeBase {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let kb = KnowledgeBase { root: root.into() };
        for dir in [kb.rasters_dir(), kb.models_dir()] {
            fs::create_dir_all(&dir).map_err(|e| CageError::io(&dir, e))?;
        }
        Ok(kb)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rasters_dir(&self) -> PathBuf {
        self.root.join("rasters")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_path(&self, version: u32) -> PathBuf {
        self.models_dir().join(format!("v{version}.model"))
    }

    /// Stores rasters not already present; returns how many were new.
    pub fn add_rasters<'a>(&self, rasters: impl IntoIterator<Item = &'a SceneRaster>) -> Result<usize> {
        let mut added = 0;
        for r in rasters {
            let rec = RasterRecord::new(r.clone());
            let path = self.rasters_dir().join(format!("{}.rec", rec.digest));
            if path.exists() {
                continue;
            }
            record::write_lines(&path, [&rec])?;
            added += 1;
        }
        Ok(added)
    }

    /// All stored rasters, ordered by digest.
    pub fn rasters(&self) -> Result<Vec<SceneRaster>> {
        Ok(self.records()?.into_values().map(|r| r.raster).collect())
    }

    fn records(&self) -> Result<BTreeMap<String, RasterRecord>> {
        let dir = self.rasters_dir();
        let mut out = BTreeMap::new();
        let entries = fs::read_dir(&dir).map_err(|e| CageError::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CageError::io(&dir, e))?.path();
            if path.extension().is_none_or(|x| x != "rec") {
                continue;
            }
            for rec in record::read_lines::<RasterRecord>(&path)? {
                out.insert(rec.digest.clone(), rec);
            }
        }
        Ok(out)
    }

    /// Digest of the stored training set (order-independent).
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for d in self.records()?.keys() {
            h.update(d.as_bytes());
            h.update(b"\n");
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn versions(&self) -> Result<Vec<u32>> {
        let dir = self.models_dir();
        let mut v: Vec<u32> = fs::read_dir(&dir)
            .map_err(|e| CageError::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_prefix('v')?.strip_suffix(".model")?.parse().ok()
            })
            .collect();
        v.sort_unstable();
        Ok(v)
    }

    pub fn latest_model(&self) -> Result<Option<AnomalyModel>> {
        match self.versions()?.last() {
            Some(&v) => load_model(&self.model_path(v)).map(Some),
            None => Ok(None),
        }
    }

    /// Writes the model under its version; refuses to overwrite.
    pub fn publish(&self, model: &AnomalyModel) -> Result<PathBuf> {
        let path = self.model_path(model.version);
        if path.exists() {
            return Err(CageError::invalid(
                "model publish",
                format!("version {} already exists", model.version),
            ));
        }
        save_model(&path, model)?;
        Ok(path)
    }

    /// Trains and calibrates a new version on everything in the store.
    pub fn train_next(&self, params: &TrainParams, quantile: f64) -> Result<(AnomalyModel, Vec<f64>)> {
        let rasters = self.rasters()?;
        let outcome = train(&rasters, params)?;
        let threshold = calibrate_threshold(&outcome.autoencoder, &rasters, quantile)?;
        let version = self.versions()?.last().copied().unwrap_or(0) + 1;
        let model = AnomalyModel {
            autoencoder: outcome.autoencoder,
            threshold,
            calibration_quantile: quantile,
            training_set_digest: self.digest()?,
            version,
            train_params: *params,
        };
        self.publish(&model)?;
        Ok((model, outcome.loss_curve))
    }

    /// Fails when `model` was not trained on the current store contents.
    pub fn check_digest(&self, model: &AnomalyModel) -> Result<()> {
        let kb = self.digest()?;
        if kb != model.training_set_digest {
            return Err(CageError::DigestMismatch {
                model: model.training_set_digest.clone(),
                kb,
            });
        }
        Ok(())
    }
}

/// Extends the store with recorded rasters and publishes the next version,
/// trained with the previous model's hyperparameters. Older versions stay on disk.
pub fn retrain_with_recordings(
    model: &AnomalyModel,
    kb: &KnowledgeBase,
    recordings: &[SceneRaster],
) -> Result<AnomalyModel> {
    if recordings.is_empty() {
        return Err(CageError::invalid("retraining", "no recordings"));
    }
    kb.add_rasters(recordings)?;
    let rasters = kb.rasters()?;
    let outcome = train(&rasters, &model.train_params)?;
    let threshold = calibrate_threshold(&outcome.autoencoder, &rasters, model.calibration_quantile)?;
    let next = AnomalyModel {
        autoencoder: outcome.autoencoder,
        threshold,
        calibration_quantile: model.calibration_quantile,
        training_set_digest: kb.digest()?,
        version: model.version + 1,
        train_params: model.train_params,
    };
    kb.publish(&next)?;
    Ok(next)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    version: u32,
    input: usize,
    hidden: usize,
    epochs_trained: usize,
    threshold: f64,
    calibration_quantile: f64,
    training_set_digest: String,
    train_params: TrainParams,
    weights_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightArray {
    name: String,
    values: Vec<f64>,
}

fn weights_digest(ae: &Autoencoder) -> String {
    let mut h = Sha256::new();
    for v in [&ae.w1, &ae.b1, &ae.w2, &ae.b2] {
        h.update((v.len() as u64).to_le_bytes());
        for x in v.iter() {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Text model file: a magic line, a JSON header carrying the weight digest,
/// then one JSON line per weight array in decimal.
pub fn encode_model(model: &AnomalyModel) -> String {
    let ae = &model.autoencoder;
    let header = ModelHeader {
        version: model.version,
        input: ae.input,
        hidden: ae.hidden,
        epochs_trained: ae.epochs_trained,
        threshold: model.threshold,
        calibration_quantile: model.calibration_quantile,
        training_set_digest: model.training_set_digest.clone(),
        train_params: model.train_params,
        weights_digest: weights_digest(ae),
    };
    let mut out = String::new();
    out.push_str(MODEL_MAGIC);
    out.push('\n');
    out.push_str(&record::encode(&header));
    out.push('\n');
    for (name, values) in [("w1", &ae.w1), ("b1", &ae.b1), ("w2", &ae.w2), ("b2", &ae.b2)] {
        out.push_str(&record::encode(&WeightArray {
            name: name.into(),
            values: values.clone(),
        }));
        out.push('\n');
    }
    out
}

pub fn decode_model(path: &Path, text: &str) -> Result<AnomalyModel> {
    let parse_err = |line: usize, message: String| CageError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(MODEL_MAGIC) {
        return Err(parse_err(1, "missing model header line".into()));
    }
    let header: ModelHeader = record::decode_at(path, 2, lines.next().unwrap_or(""))?;
    let mut arrays: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let w: WeightArray = record::decode_at(path, i + 3, line)?;
        arrays.insert(w.name, w.values);
    }
    let mut take = |name: &str, len: usize| -> Result<Vec<f64>> {
        let v = arrays
            .remove(name)
            .ok_or_else(|| parse_err(0, format!("missing weight array {name}")))?;
        if v.len() != len {
            return Err(parse_err(0, format!("{name} has {} values, expected {len}", v.len())));
        }
        Ok(v)
    };
    let (d, h) = (header.input, header.hidden);
    let ae = Autoencoder {
        input: d,
        hidden: h,
        w1: take("w1", h * d)?,
        b1: take("b1", h)?,
        w2: take("w2", d * h)?,
        b2: take("b2", d)?,
        epochs_trained: header.epochs_trained,
    };
    if !ae.is_finite() {
        return Err(parse_err(0, "non-finite weight".into()));
    }
    if weights_digest(&ae) != header.weights_digest {
        return Err(parse_err(2, "weight digest does not match header".into()));
    }
    Ok(AnomalyModel {
        autoencoder: ae,
        threshold: header.threshold,
        calibration_quantile: header.calibration_quantile,
        training_set_digest: header.training_set_digest,
        version: header.version,
        train_params: header.train_params,
    })
}

/// Content digest of the model file encoding.
pub fn model_digest(model: &AnomalyModel) -> String {
    hex::encode(Sha256::digest(encode_model(model).as_bytes()))
}

pub fn save_model(path: &Path, model: &AnomalyModel) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CageError::io(dir, e))?;
    }
    record::write_atomic(path, encode_model(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<AnomalyModel> {
    let text = fs::read_to_string(path).map_err(|e| CageError::io(path, e))?;
    decode_model(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set(n: usize) -> Vec<SceneRaster> {
        (0..n)
            .map(|i| SceneRaster {
                size: 3,
                cells: (0..9).map(|c| ((i * 3 + c * c) % 17) as f64 / 17.0).collect(),
            })
            .collect()
    }

    fn quick() -> TrainParams {
        TrainParams {
            hidden: 3,
            epochs: 20,
            ..TrainParams::default()
        }
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::open(dir.path()).unwrap();
        kb.add_rasters(&sample_set(12)).unwrap();
        let (model, _) = kb.train_next(&quick(), 0.99).unwrap();
        let loaded = load_model(&kb.model_path(1)).unwrap();
        assert_eq!(loaded, model);
        kb.check_digest(&loaded).unwrap();
    }

    #[test]
    fn tampered_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::open(dir.path()).unwrap();
        kb.add_rasters(&sample_set(12)).unwrap();
        let (model, _) = kb.train_next(&quick(), 0.99).unwrap();
        let text = encode_model(&model);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut w: WeightArray = serde_json::from_str(&lines[2]).unwrap();
        w.values[0] += 1.0;
        lines[2] = serde_json::to_string(&w).unwrap();
        assert!(decode_model(Path::new("x"), &lines.join("\n")).is_err());
    }

    #[test]
    fn duplicates_are_stored_once() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::open(dir.path()).unwrap();
        let set = sample_set(12);
        let distinct = kb.add_rasters(&set).unwrap();
        assert_eq!(kb.add_rasters(&set).unwrap(), 0);
        assert_eq!(kb.rasters().unwrap().len(), distinct);
    }

    #[test]
    fn retrain_bumps_version_and_keeps_old() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::open(dir.path()).unwrap();
        kb.add_rasters(&sample_set(12)).unwrap();
        let (v1, _) = kb.train_next(&quick(), 0.99).unwrap();
        let before = kb.rasters().unwrap().len();
        let novel = vec![SceneRaster {
            size: 3,
            cells: vec![1.0; 9],
        }];
        let v2 = retrain_with_recordings(&v1, &kb, &novel).unwrap();
        assert_eq!(v2.version, v1.version + 1);
        assert_eq!(kb.rasters().unwrap().len(), before + 1);
        assert_eq!(kb.versions().unwrap(), vec![1, 2]);
        assert!(kb.check_digest(&v1).is_err());
        kb.check_digest(&v2).unwrap();
    }
}

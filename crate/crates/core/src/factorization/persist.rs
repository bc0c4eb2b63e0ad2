//! Model files.
//!
//! A model file is a single JSON object:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "dataset_digest": "<sha256 hex>",          // optional
//!   "split": { "fraction": 0.2, "seed": 42 },  // optional
//!   "model": { "kind": "nmf" | "svd" | "sgd_mf", ... }
//! }
//! ```
//!
//! Factor matrices are stored as `{"rows", "cols", "data"}` with `data`
//! row-major. Floats are written in shortest round-trip form, so a saved
//! model predicts bit-identically after loading.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::FactorModel;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Train/test split a model was fitted under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitParams>,
    pub model: FactorModel,
}

impl ModelFile {
    pub fn new(model: FactorModel) -> Self {
        Self { format_version: MODEL_FORMAT_VERSION, dataset_digest: None, split: None, model }
    }
}

pub fn save_model<W: Write>(file: &ModelFile, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, file)?;
    Ok(())
}

pub fn load_model<R: Read>(reader: R) -> Result<ModelFile> {
    let file: ModelFile = serde_json::from_reader(reader)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::invalid(format!("unsupported model format version {}", file.format_version)));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::factorization::{nmf_fit, sgd_mf_fit, svd_truncated, NmfParams, RatingModel, SgdParams};
    use crate::ratings::{build_matrix, impute_dense, DuplicatePolicy, FillStrategy, RatingScale, RatingTriple};

    fn fixture() -> (crate::ratings::SparseRatingMatrix, DenseMatrix) {
        let triples: Vec<_> = [(1, 1, 4.0), (1, 2, 3.5), (2, 1, 1.0), (2, 3, 5.0), (3, 2, 2.0), (3, 3, 3.0)]
            .iter()
            .map(|&(u, i, r)| RatingTriple::new(format!("u{u}"), format!("m{i}"), r))
            .collect();
        let m = build_matrix(&triples, RatingScale::new(1.0, 5.0).unwrap(), DuplicatePolicy::Error).unwrap();
        let dense = impute_dense(&m, FillStrategy::UserMean).unwrap();
        (m, dense)
    }

    fn round_trip(model: FactorModel) {
        let mut file = ModelFile::new(model);
        file.split = Some(SplitParams { fraction: 0.2, seed: 3 });
        file.dataset_digest = Some("abc".into());
        let mut buf = Vec::new();
        save_model(&file, &mut buf).unwrap();
        let back = load_model(buf.as_slice()).unwrap();
        assert_eq!(back, file);
        for u in 0..file.model.n_users() {
            for i in 0..file.model.n_items() {
                assert_eq!(back.model.raw_score(u, i).to_bits(), file.model.raw_score(u, i).to_bits());
            }
        }
    }

    #[test]
    fn every_kind_round_trips_bit_exact() {
        let (m, dense) = fixture();
        let mut nmf = nmf_fit(&dense, 2, NmfParams::default()).unwrap();
        nmf.fill = Some(FillStrategy::UserMean);
        round_trip(nmf.into());
        let mut svd = svd_truncated(&dense, 2).unwrap();
        svd.fill = Some(FillStrategy::Constant(2.5));
        round_trip(svd.into());
        round_trip(sgd_mf_fit(&m, 2, SgdParams { epochs: 5, ..SgdParams::default() }).unwrap().into());
    }

    #[test]
    fn kind_tag_is_present() {
        let (_, dense) = fixture();
        let file = ModelFile::new(svd_truncated(&dense, 1).unwrap().into());
        let value: serde_json::Value = serde_json::to_value(&file).unwrap();
        assert_eq!(value["model"]["kind"], "svd");
        assert_eq!(value["model"]["u"]["rows"], 3);
    }

    #[test]
    fn rejects_unknown_version() {
        let (_, dense) = fixture();
        let mut file = ModelFile::new(svd_truncated(&dense, 1).unwrap().into());
        file.format_version = 99;
        let json = serde_json::to_vec(&file).unwrap();
        assert!(load_model(json.as_slice()).is_err());
    }
}

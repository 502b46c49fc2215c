//! Model files.
//!
//! Layout: the 8 magic bytes `ILMODEL\n`, then one JSON document
//!
//! ```text
//! { "format_version": 1, "input_dim": n, "num_classes": C,
//!   "activation": "softplus" | "relu", "beta": 10.0 | null,
//!   "layers": [ {"kind": "dense", "in_dim": .., "out_dim": ..,
//!                "weights": "<base64>", "bias": "<base64>"},
//!               {"kind": "activation"},
//!               {"kind": "residual", "layers": [ ... ]} ] }
//! ```
//!
//! Weight and bias payloads are base64 of little-endian `f64`s, weights in
//! row-major `out_dim x in_dim` order. Loading is bit-exact.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Activation, Dense, Layer, Model};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"ILMODEL\n";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    input_dim: usize,
    num_classes: usize,
    activation: String,
    beta: Option<f64>,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerRecord {
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: String,
        bias: String,
    },
    Activation,
    Residual {
        layers: Vec<LayerRecord>,
    },
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Malformed(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Malformed(
            "payload length is not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn to_records(layers: &[Layer]) -> Vec<LayerRecord> {
    layers
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerRecord::Dense {
                in_dim: d.in_dim,
                out_dim: d.out_dim,
                weights: encode(&d.weights),
                bias: encode(&d.bias),
            },
            Layer::Activation => LayerRecord::Activation,
            Layer::Residual(inner) => LayerRecord::Residual {
                layers: to_records(inner),
            },
        })
        .collect()
}

fn from_records(records: Vec<LayerRecord>) -> Result<Vec<Layer>> {
    records
        .into_iter()
        .map(|r| match r {
            LayerRecord::Dense {
                in_dim,
                out_dim,
                weights,
                bias,
            } => Ok(Layer::Dense(
                Dense::new(in_dim, out_dim, decode(&weights)?, decode(&bias)?)
                    .map_err(|e| Error::Malformed(e.to_string()))?,
            )),
            LayerRecord::Activation => Ok(Layer::Activation),
            LayerRecord::Residual { layers } => Ok(Layer::Residual(from_records(layers)?)),
        })
        .collect()
}

pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let (activation, beta) = match model.activation() {
        Activation::Relu => ("relu", None),
        Activation::Softplus { beta } => ("softplus", Some(beta)),
    };
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        input_dim: model.input_dim(),
        num_classes: model.num_classes(),
        activation: activation.to_string(),
        beta,
        layers: to_records(model.layers()),
    };
    let mut out = MODEL_MAGIC.to_vec();
    out.extend(serde_json::to_vec(&file).expect("model header serialises"));
    out.push(b'\n');
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let body = bytes
        .strip_prefix(MODEL_MAGIC.as_slice())
        .ok_or_else(|| Error::Format("missing ILMODEL magic bytes".into()))?;
    let value: serde_json::Value = serde_json::from_slice(body)
        .map_err(|e| Error::Malformed(format!("header is not valid JSON: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Malformed("format_version missing".into()))?;
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(Error::Version {
            found: version as u32,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
    let activation = match (file.activation.as_str(), file.beta) {
        ("relu", _) => Activation::Relu,
        ("softplus", Some(beta)) => Activation::Softplus { beta },
        (other, _) => return Err(Error::Malformed(format!("unknown activation {other:?}"))),
    };
    Model::new(
        file.input_dim,
        file.num_classes,
        activation,
        from_records(file.layers)?,
    )
    .map_err(|e| Error::Malformed(e.to_string()))
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    fn sample_model() -> Model {
        Model::init(
            &Architecture::ResidualMlp {
                width: 5,
                blocks: 2,
            },
            4,
            3,
            Activation::default(),
            21,
        )
        .unwrap()
    }

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ilm");
        let model = sample_model();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        let relu = Model::init(
            &Architecture::Mlp { hidden: vec![3] },
            2,
            2,
            Activation::Relu,
            1,
        )
        .unwrap();
        assert_eq!(model_from_bytes(&model_to_bytes(&relu)).unwrap(), relu);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let bytes = model_to_bytes(&sample_model());
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(model_from_bytes(cut), Err(Error::Malformed(_))));
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = model_to_bytes(&sample_model());
        bytes[0] = b'X';
        assert!(matches!(model_from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let bytes = model_to_bytes(&sample_model());
        let text = String::from_utf8(bytes)
            .unwrap()
            .replace("\"format_version\":1", "\"format_version\":7");
        assert!(matches!(
            model_from_bytes(text.as_bytes()),
            Err(Error::Version { found: 7, .. })
        ));
    }
}

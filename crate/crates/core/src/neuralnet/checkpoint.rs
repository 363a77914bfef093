//! Versioned JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "hwdemand-lstm",
//!   "version": 1,
//!   "config": { "units": 50, "lookback": 60, ... },
//!   "scaler": { "min": 41.2, "max": 55.3 },
//!   "tensors": [ { "name": "W_i", "shape": [5, 50], "data": [ ... ] }, ... ]
//! }
//! ```
//!
//! Tensors appear in the order `W_i W_f W_g W_o U_i U_f U_g U_o b_i b_f b_g
//! b_o W_out b_out`, each row-major. `W_*` are `n_features x units`, `U_*`
//! are `units x units`, biases have length `units`, `W_out` is `units x 1`
//! and `b_out` has length 1. Numbers are written in shortest round-trip form,
//! so save → load → save is byte-identical.

use std::fs;
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{LstmConfig, LstmModel, LstmParams, ScalerParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "hwdemand-lstm";
pub const CHECKPOINT_VERSION: u32 = 1;

const GATES: [&str; 4] = ["i", "f", "g", "o"];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    config: LstmConfig,
    scaler: ScalerParams,
    tensors: Vec<Tensor>,
}

fn gate_block(m: &Array2<f64>, gate: usize, units: usize) -> Vec<f64> {
    m.slice(s![.., gate * units..(gate + 1) * units]).iter().copied().collect()
}

fn tensors_of(params: &LstmParams) -> Vec<Tensor> {
    let units = params.units();
    let n_features = params.n_features();
    let mut out = Vec::with_capacity(14);
    for (g, gate) in GATES.iter().enumerate() {
        out.push(Tensor {
            name: format!("W_{gate}"),
            shape: vec![n_features, units],
            data: gate_block(&params.w_input, g, units),
        });
    }
    for (g, gate) in GATES.iter().enumerate() {
        out.push(Tensor {
            name: format!("U_{gate}"),
            shape: vec![units, units],
            data: gate_block(&params.w_recurrent, g, units),
        });
    }
    for (g, gate) in GATES.iter().enumerate() {
        out.push(Tensor {
            name: format!("b_{gate}"),
            shape: vec![units],
            data: params.bias.slice(s![g * units..(g + 1) * units]).to_vec(),
        });
    }
    out.push(Tensor {
        name: "W_out".into(),
        shape: vec![units, 1],
        data: params.w_out.to_vec(),
    });
    out.push(Tensor {
        name: "b_out".into(),
        shape: vec![1],
        data: params.b_out.to_vec(),
    });
    out
}

fn params_of(tensors: &[Tensor], config: &LstmConfig) -> Result<LstmParams> {
    let units = config.units;
    let n_features = config.n_features;
    let expected = tensors_of(&LstmParams::zeros(n_features, units));
    if tensors.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            tensors.len()
        )));
    }
    for (got, want) in tensors.iter().zip(&expected) {
        if got.name != want.name {
            return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{}`", want.name, got.name)));
        }
        if got.shape != want.shape || got.data.len() != want.data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` has shape {:?} with {} values, expected {:?}",
                got.name,
                got.shape,
                got.data.len(),
                want.shape
            )));
        }
        if got.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("tensor `{}` holds a non-finite value", got.name)));
        }
    }

    let mut p = LstmParams::zeros(n_features, units);
    for g in 0..4 {
        let w = Array2::from_shape_vec((n_features, units), tensors[g].data.clone()).expect("checked length");
        p.w_input.slice_mut(s![.., g * units..(g + 1) * units]).assign(&w);
        let u = Array2::from_shape_vec((units, units), tensors[4 + g].data.clone()).expect("checked length");
        p.w_recurrent.slice_mut(s![.., g * units..(g + 1) * units]).assign(&u);
        p.bias
            .slice_mut(s![g * units..(g + 1) * units])
            .assign(&ndarray::ArrayView1::from(&tensors[8 + g].data[..]));
    }
    p.w_out.assign(&ndarray::ArrayView1::from(&tensors[12].data[..]));
    p.b_out[0] = tensors[13].data[0];
    Ok(p)
}

pub fn model_to_json(model: &LstmModel) -> Result<String> {
    model.check_shapes()?;
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        scaler: model.scaler,
        tensors: tensors_of(&model.params),
    };
    Ok(serde_json::to_string(&ckpt)?)
}

pub fn model_from_json(text: &str) -> Result<LstmModel> {
    // Read the header first so a newer version is reported as such rather
    // than as a schema error.
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format `{}`", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    ckpt.config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let scaler = ScalerParams::new(ckpt.scaler.min, ckpt.scaler.max).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let params = params_of(&ckpt.tensors, &ckpt.config)?;
    Ok(LstmModel {
        config: ckpt.config,
        scaler,
        params,
    })
}

pub fn save_model(model: &LstmModel, path: &Path) -> Result<()> {
    let text = model_to_json(model)?;
    let tmp = path.with_extension("json.partial");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LstmModel> {
    model_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::forward;

    fn model() -> LstmModel {
        let cfg = LstmConfig {
            units: 4,
            lookback: 5,
            seed: 17,
            ..LstmConfig::default()
        };
        let mut m = LstmModel::new(cfg, ScalerParams::new(41.123456789, 55.987654321).unwrap()).unwrap();
        m.params.b_out[0] = 0.1 + 0.2; // not exactly representable as a short decimal
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let text = model_to_json(&m).unwrap();
        let back = model_from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_json(&back).unwrap(), text);

        let window = ndarray::Array2::from_shape_fn((5, 5), |(i, j)| (i * 5 + j) as f64 / 25.0);
        assert_eq!(forward(&back, window.view()).unwrap(), forward(&m, window.view()).unwrap());
    }

    #[test]
    fn named_tensors_follow_gate_layout() {
        let m = model();
        let text = model_to_json(&m).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let tensors = v["tensors"].as_array().unwrap();
        let names: Vec<&str> = tensors.iter().map(|t| t["name"].as_str().unwrap()).collect();
        assert_eq!(
            names,
            ["W_i", "W_f", "W_g", "W_o", "U_i", "U_f", "U_g", "U_o", "b_i", "b_f", "b_g", "b_o", "W_out", "b_out"]
        );
        // W_f[2, 3] lives at column units + 3 of the concatenated matrix.
        let w_f = tensors[1]["data"].as_array().unwrap();
        assert_eq!(w_f[2 * 4 + 3].as_f64().unwrap(), m.params.w_input[[2, 4 + 3]]);
        assert_eq!(tensors[4]["shape"], serde_json::json!([4, 4]));
    }

    #[test]
    fn truncated_or_corrupt_files_fail() {
        let text = model_to_json(&model()).unwrap();
        assert!(model_from_json(&text[..text.len() / 2]).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["version"] = 2.into();
        assert!(matches!(
            model_from_json(&v.to_string()),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tensors"][5]["data"].as_array_mut().unwrap().pop();
        assert!(matches!(model_from_json(&v.to_string()), Err(Error::Checkpoint(_))));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["config"]["units"] = 5.into();
        assert!(model_from_json(&v.to_string()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = model();
        save_model(&m, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        save_model(&load_model(&path).unwrap(), &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}

//! JSON checkpoints: `{arch, input_width, layers: [{rows, cols, weights, bias}]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mlp::{Arch, Layer, MlpParams, HIDDEN};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    arch: Arch,
    input_width: usize,
    layers: Vec<LayerDoc>,
}

pub fn to_json(params: &MlpParams) -> String {
    let doc = CheckpointDoc {
        arch: params.arch,
        input_width: params.input_width(),
        layers: params
            .layers
            .iter()
            .map(|l| LayerDoc {
                rows: l.weight.rows,
                cols: l.weight.cols,
                weights: l.weight.data.clone(),
                bias: l.bias.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("checkpoint serialisation cannot fail")
}

pub fn from_json(text: &str) -> Result<MlpParams> {
    let doc: CheckpointDoc = serde_json::from_str(text)?;
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(k, l)| {
            let weight = Matrix::from_vec(l.rows, l.cols, l.weights).ok_or_else(|| {
                Error::shape(format!("layer {k}: weights do not fill {}x{}", l.rows, l.cols))
            })?;
            if l.bias.len() != l.rows {
                return Err(Error::shape(format!("layer {k}: bias length {} != {}", l.bias.len(), l.rows)));
            }
            Ok(Layer { weight, bias: l.bias })
        })
        .collect::<Result<Vec<_>>>()?;
    let params = MlpParams::from_layers(doc.arch, layers)?;
    if params.input_width() != doc.input_width {
        return Err(Error::shape(format!(
            "input_width {} does not match first layer ({} columns)",
            doc.input_width,
            params.input_width()
        )));
    }
    if params.layers[..2].iter().any(|l| l.weight.rows != HIDDEN) {
        return Err(Error::shape(format!("hidden layers must have width {HIDDEN}")));
    }
    if !params.is_finite() {
        return Err(Error::shape("checkpoint holds non-finite parameters"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Loads a checkpoint and insists on a particular architecture.
pub fn load_checkpoint_as(path: &Path, arch: Arch) -> Result<MlpParams> {
    let params = load_checkpoint(path)?;
    if params.arch != arch {
        return Err(Error::Arch { expected: arch.name().into(), found: params.arch.name().into() });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        for (arch, w) in [(Arch::Distributed, 14), (Arch::SingleComm, 9), (Arch::Colour, 2)] {
            let p = MlpParams::init(arch, w, 77).unwrap();
            assert_eq!(from_json(&to_json(&p)).unwrap(), p);
        }
    }

    #[test]
    fn truncated_document_fails() {
        let text = to_json(&MlpParams::init(Arch::Distributed, 7, 1).unwrap());
        assert!(from_json(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn broken_chain_fails() {
        let text = to_json(&MlpParams::init(Arch::Distributed, 7, 1).unwrap());
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["layers"][1]["cols"] = 9.into();
        doc["layers"][1]["weights"] = serde_json::Value::Array(vec![0.0.into(); 90]);
        assert!(from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn arch_tag_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        save_checkpoint(&MlpParams::init(Arch::Distributed, 14, 1).unwrap(), &path).unwrap();
        assert!(matches!(load_checkpoint_as(&path, Arch::SingleComm), Err(Error::Arch { .. })));
        assert!(load_checkpoint_as(&path, Arch::Distributed).is_ok());
    }
}

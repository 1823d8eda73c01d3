use std::path::Path;

use serde::{Deserialize, Serialize};
use umgnet_core::model::{ModelConfig, ModelDims, NamedParam, UpliftModel};
use umgnet_core::tensor::Matrix;

use crate::error::{AppError, AppResult};

pub const FORMAT: &str = "umgnet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredParam {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    dims: ModelDims,
    params: Vec<StoredParam>,
}

/// JSON checkpoint; `f32` values print in shortest round-trip form, so
/// loading restores every bit.
pub fn to_json(model: &UpliftModel<f32>) -> AppResult<String> {
    let ckpt = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        config: model.config().clone(),
        dims: model.dims(),
        params: model
            .params()
            .iter()
            .map(|p| StoredParam {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                data: p.value.as_slice().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&ckpt).map_err(|e| AppError::Format(format!("checkpoint: {e}")))
}

pub fn from_json(text: &str) -> AppResult<UpliftModel<f32>> {
    let ckpt: Checkpoint =
        serde_json::from_str(text).map_err(|e| AppError::Format(format!("checkpoint: {e}")))?;
    if ckpt.format != FORMAT || ckpt.version != VERSION {
        return Err(AppError::Format(format!(
            "unsupported checkpoint {} v{} (expected {FORMAT} v{VERSION})",
            ckpt.format, ckpt.version
        )));
    }
    let params = ckpt
        .params
        .into_iter()
        .map(|p| {
            Ok(NamedParam {
                value: Matrix::from_vec(p.rows, p.cols, p.data)?,
                name: p.name,
            })
        })
        .collect::<Result<Vec<_>, umgnet_core::Error>>()?;
    Ok(UpliftModel::from_params(ckpt.config, ckpt.dims, params)?)
}

pub fn save(model: &UpliftModel<f32>, path: &Path) -> AppResult<()> {
    super::write_file(path, to_json(model)?)
}

pub fn load(path: &Path) -> AppResult<UpliftModel<f32>> {
    from_json(&super::read_file(path)?)
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, TeVae};
use crate::error::{Error, Result};

const FORMAT: &str = "tevae-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Self-describing weight container. Floats are written in shortest
/// round-trip form so load(save(m)) is bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub epoch: usize,
    pub val_nll: f64,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &TeVae, epoch: usize, val_nll: f64) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            config: model.config.clone(),
            epoch,
            val_nll,
            tensors: model
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| TensorRecord {
                    name,
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<TeVae> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported container {} v{}",
                self.format, self.version
            )));
        }
        let mut model = TeVae::new(self.config.clone(), 0)?;
        let layout: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if layout.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for (((name, shape), rec), dst) in layout.iter().zip(&self.tensors).zip(model.tensors_mut()) {
            if *name != rec.name || *shape != rec.shape || dst.len() != rec.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    rec.name, rec.shape, name, shape
                )));
            }
            dst.copy_from_slice(&rec.data);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

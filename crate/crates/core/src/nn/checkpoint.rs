//! Parameter checkpoints: a versioned JSON document holding the network spec
//! and every tensor as `{name, shape, data}` (row-major, f64 values).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, NnError, ParamSet, Scalar, Tensor};

pub const CHECKPOINT_FORMAT: &str = "taskgrid-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_network<T: Scalar>(net: &Network<T>) -> Self {
        let tensors = net
            .params()
            .tensors
            .iter()
            .map(|t| TensorRecord {
                name: t.name.clone(),
                shape: t.shape.clone(),
                data: t.data.iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        Self { format: CHECKPOINT_FORMAT.to_string(), version: CHECKPOINT_VERSION, spec: *net.spec(), tensors }
    }

    pub fn into_network<T: Scalar>(self) -> Result<Network<T>, NnError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let expected = self.spec.param_shapes();
        if expected.len() != self.tensors.len() {
            return Err(NnError::Checkpoint("tensor count mismatch".into()));
        }
        let mut tensors = Vec::with_capacity(expected.len());
        for ((name, shape), rec) in expected.into_iter().zip(self.tensors) {
            let n: usize = shape.iter().product();
            if rec.name != name || rec.shape != shape || rec.data.len() != n {
                return Err(NnError::Checkpoint(format!("tensor `{}` does not match `{name}`", rec.name)));
            }
            tensors.push(Tensor { name, shape, data: rec.data.into_iter().map(T::lit).collect() });
        }
        Network::from_params(self.spec, ParamSet { tensors })
    }
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: &Path) -> Result<(), NnError> {
    let text = serde_json::to_string(&Checkpoint::from_network(net)).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    fs::write(path, text).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Network<T>, NnError> {
    let text = fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    ckpt.into_network()
}

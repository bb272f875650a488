//! Small convolutional function approximator with hand-written reverse-mode
//! gradients.
//!
//! Trunk: `conv 3×3 → ReLU → conv 3×3 → ReLU → flatten ⧺ scalars → dense → ReLU`
//! (valid convolutions, stride 1, so the 7×7 window shrinks to 5×5 then 3×3).
//! Two heads share the trunk: a 5-wide "vector" head (advantages or policy
//! logits) and a 1-wide "scalar" head (state value).

mod adam;
mod checkpoint;
mod gradcheck;
mod kernels;
mod network;

pub use adam::{Adam, AdamConfig, StepInfo};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use gradcheck::{gradient_check, gradient_check_with_fault, GradientReport, ParamCheck};
pub use network::{ForwardCache, HeadGrad, HeadOutput, LayerId, Network};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{N_ACTIONS, OBS_CHANNELS, OBS_SCALARS, OBS_SIDE};

/// Floating-point element type of a network (`f32` for training, `f64` for
/// gradient verification).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + AddAssign + SubAssign + MulAssign + Sum + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite output: {0}")]
    NonFiniteOutput(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Value stream (1) and advantage stream (5).
    Dueling,
    /// Policy logits (5) and value (1).
    ActorCritic,
}

/// Layer widths of the shared trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrunkSpec {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub hidden: usize,
}

impl Default for TrunkSpec {
    fn default() -> Self {
        Self { conv1_channels: 16, conv2_channels: 32, hidden: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub trunk: TrunkSpec,
    pub head: HeadKind,
}

pub(crate) const KERNEL: usize = 3;
pub(crate) const SIDE1: usize = OBS_SIDE - KERNEL + 1;
pub(crate) const SIDE2: usize = SIDE1 - KERNEL + 1;

impl NetworkSpec {
    pub fn new(trunk: TrunkSpec, head: HeadKind) -> Self {
        Self { trunk, head }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let t = &self.trunk;
        if t.conv1_channels == 0 || t.conv2_channels == 0 || t.hidden == 0 {
            return Err(NnError::Shape("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn dense_inputs(&self) -> usize {
        self.trunk.conv2_channels * SIDE2 * SIDE2 + OBS_SCALARS
    }

    /// `(name, shape)` of every parameter tensor, in storage order. Conv
    /// kernels are stored `[in_channel, ky, kx, out_channel]`.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let t = &self.trunk;
        let (vector_name, scalar_name) = match self.head {
            HeadKind::Dueling => ("advantage", "value"),
            HeadKind::ActorCritic => ("policy", "value"),
        };
        vec![
            ("conv1.weight".into(), vec![OBS_CHANNELS, KERNEL, KERNEL, t.conv1_channels]),
            ("conv1.bias".into(), vec![t.conv1_channels]),
            ("conv2.weight".into(), vec![t.conv1_channels, KERNEL, KERNEL, t.conv2_channels]),
            ("conv2.bias".into(), vec![t.conv2_channels]),
            ("dense.weight".into(), vec![t.hidden, self.dense_inputs()]),
            ("dense.bias".into(), vec![t.hidden]),
            (format!("{vector_name}.weight"), vec![N_ACTIONS, t.hidden]),
            (format!("{vector_name}.bias"), vec![N_ACTIONS]),
            (format!("{scalar_name}.weight"), vec![1, t.hidden]),
            (format!("{scalar_name}.bias"), vec![1]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// A named, shaped, flat parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// All parameter tensors of a network, or a gradient/moment set shaped like them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros_like_spec(spec: &NetworkSpec) -> Self {
        let tensors = spec
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                Tensor { name, shape, data: vec![T::zero(); n] }
            })
            .collect();
        Self { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        let tensors = self
            .tensors
            .iter()
            .map(|t| Tensor { name: t.name.clone(), shape: t.shape.clone(), data: vec![T::zero(); t.data.len()] })
            .collect();
        Self { tensors }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().map(|t| kernels::sum_sq(&t.data)).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

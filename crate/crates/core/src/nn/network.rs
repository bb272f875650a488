use rand::Rng;

use super::kernels::{axpy, dot};
use super::{NetworkSpec, NnError, ParamSet, Scalar, Tensor, KERNEL, SIDE1, SIDE2};
use crate::env::{Observation, N_ACTIONS, OBS_CELLS, OBS_CHANNELS, OBS_SIDE};

const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const DENSE_W: usize = 4;
const DENSE_B: usize = 5;
const VECTOR_W: usize = 6;
const VECTOR_B: usize = 7;
const SCALAR_W: usize = 8;
const SCALAR_B: usize = 9;

const P1: usize = SIDE1 * SIDE1;
const P2: usize = SIDE2 * SIDE2;
const TAPS: usize = KERNEL * KERNEL;

/// Parametrized layers, in forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerId {
    Conv1,
    Conv2,
    Dense,
    VectorHead,
    ScalarHead,
}

impl LayerId {
    pub const ALL: [LayerId; 5] =
        [LayerId::Conv1, LayerId::Conv2, LayerId::Dense, LayerId::VectorHead, LayerId::ScalarHead];

    /// Indices of this layer's (weight, bias) tensors.
    pub fn param_indices(self) -> [usize; 2] {
        match self {
            LayerId::Conv1 => [CONV1_W, CONV1_B],
            LayerId::Conv2 => [CONV2_W, CONV2_B],
            LayerId::Dense => [DENSE_W, DENSE_B],
            LayerId::VectorHead => [VECTOR_W, VECTOR_B],
            LayerId::ScalarHead => [SCALAR_W, SCALAR_B],
        }
    }
}

/// Raw head outputs: `vector` holds advantages or policy logits, `scalar` the
/// state value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutput<T> {
    pub scalar: T,
    pub vector: [T; N_ACTIONS],
}

/// Gradient of the loss with respect to [`HeadOutput`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadGrad<T> {
    pub scalar: T,
    pub vector: [T; N_ACTIONS],
}

impl<T: Scalar> HeadGrad<T> {
    pub fn zero() -> Self {
        Self { scalar: T::zero(), vector: [T::zero(); N_ACTIONS] }
    }
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    spec: NetworkSpec,
    col1: Vec<T>,
    h1: Vec<T>,
    col2: Vec<T>,
    features: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// ReLU on/off pattern of every rectified unit.
    pub fn relu_mask(&self) -> Vec<bool> {
        let conv2_len = self.spec.trunk.conv2_channels * P2;
        self.h1.iter().chain(&self.features[..conv2_len]).chain(&self.hidden).map(|&v| v > T::zero()).collect()
    }
}

/// Network parameters plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: ParamSet<T>,
}

impl<T: Scalar> Network<T> {
    pub fn zeros(spec: NetworkSpec) -> Self {
        Self { spec, params: ParamSet::zeros_like_spec(&spec) }
    }

    /// He-uniform weights for rectified layers, `±1/√fan_in` for the heads,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Self {
        let mut net = Self::zeros(spec);
        for (i, t) in net.params.tensors.iter_mut().enumerate() {
            if t.shape.len() == 1 {
                continue;
            }
            let fan_in: usize = match i {
                CONV1_W | CONV2_W => t.shape[..3].iter().product(),
                _ => t.shape[1..].iter().product(),
            };
            let bound = match i {
                VECTOR_W | SCALAR_W => (1.0 / fan_in as f64).sqrt(),
                _ => (6.0 / fan_in as f64).sqrt(),
            };
            for v in &mut t.data {
                *v = T::lit(rng.gen_range(-bound..bound));
            }
        }
        net
    }

    pub fn from_params(spec: NetworkSpec, params: ParamSet<T>) -> Result<Self, NnError> {
        let expected = ParamSet::<T>::zeros_like_spec(&spec);
        if !expected.same_shape(&params) {
            return Err(NnError::Shape("parameter shapes do not match the network spec".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn new_gradients(&self) -> ParamSet<T> {
        self.params.zeros_like()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut out = Network::<U>::zeros(self.spec);
        for (dst, src) in out.params.tensors.iter_mut().zip(&self.params.tensors) {
            for (d, s) in dst.data.iter_mut().zip(&src.data) {
                *d = U::lit(s.as_f64());
            }
        }
        out
    }

    pub fn evaluate(&self, obs: &Observation) -> Result<HeadOutput<T>, NnError> {
        self.forward(obs).map(|(out, _)| out)
    }

    pub fn forward(&self, obs: &Observation) -> Result<(HeadOutput<T>, ForwardCache<T>), NnError> {
        if obs.grid.len() != OBS_CHANNELS * OBS_CELLS {
            return Err(NnError::Shape(format!(
                "observation grid has {} values, expected {}",
                obs.grid.len(),
                OBS_CHANNELS * OBS_CELLS
            )));
        }
        let c1 = self.spec.trunk.conv1_channels;
        let c2 = self.spec.trunk.conv2_channels;
        let hid = self.spec.trunk.hidden;
        let p = &self.params.tensors;

        let input: Vec<T> = obs.grid.iter().map(|&v| T::lit(v as f64)).collect();
        let col1 = im2col(&input, OBS_CHANNELS, OBS_SIDE);
        let k1 = OBS_CHANNELS * TAPS;
        let mut h1 = vec![T::zero(); c1 * P1];
        conv_relu(&col1, &p[CONV1_W].data, &p[CONV1_B].data, k1, P1, &mut h1);

        let col2 = im2col(&h1, c1, SIDE1);
        let k2 = c1 * TAPS;
        let din = self.spec.dense_inputs();
        let mut features = vec![T::zero(); din];
        conv_relu(&col2, &p[CONV2_W].data, &p[CONV2_B].data, k2, P2, &mut features[..c2 * P2]);
        for (f, &s) in features[c2 * P2..].iter_mut().zip(&obs.scalars) {
            *f = T::lit(s as f64);
        }

        let mut hidden = vec![T::zero(); hid];
        let (wd, bd) = (&p[DENSE_W].data, &p[DENSE_B].data);
        for (o, h) in hidden.iter_mut().enumerate() {
            let z = bd[o] + dot(&wd[o * din..(o + 1) * din], &features);
            *h = z.max(T::zero());
        }

        let (wv, bv) = (&p[VECTOR_W].data, &p[VECTOR_B].data);
        let mut vector = [T::zero(); N_ACTIONS];
        for (j, v) in vector.iter_mut().enumerate() {
            *v = bv[j] + dot(&wv[j * hid..(j + 1) * hid], &hidden);
        }
        let scalar = p[SCALAR_B].data[0] + dot(&p[SCALAR_W].data, &hidden);

        let cache = ForwardCache { spec: self.spec, col1, h1, col2, features, hidden };
        Ok((HeadOutput { scalar, vector }, cache))
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂(head outputs)`.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad: &HeadGrad<T>,
        grads: &mut ParamSet<T>,
    ) -> Result<(), NnError> {
        self.backward_with_fault(cache, grad, grads, None)
    }

    /// Same as [`Network::backward`], but the parameter gradient of `fault`
    /// (if any) has its sign flipped. Used to prove the gradient check bites.
    #[doc(hidden)]
    pub fn backward_with_fault(
        &self,
        cache: &ForwardCache<T>,
        grad: &HeadGrad<T>,
        grads: &mut ParamSet<T>,
        fault: Option<LayerId>,
    ) -> Result<(), NnError> {
        if cache.spec != self.spec {
            return Err(NnError::Shape("forward cache belongs to a different network".into()));
        }
        if !grads.same_shape(&self.params) {
            return Err(NnError::Shape("gradient buffer does not match parameters".into()));
        }
        let sign = |layer: LayerId| if fault == Some(layer) { -T::one() } else { T::one() };
        let c1 = self.spec.trunk.conv1_channels;
        let c2 = self.spec.trunk.conv2_channels;
        let hid = self.spec.trunk.hidden;
        let din = self.spec.dense_inputs();
        let p = &self.params.tensors;
        let g = &mut grads.tensors;

        // heads
        let mut d_hidden = vec![T::zero(); hid];
        let s = sign(LayerId::VectorHead);
        for (j, &gj) in grad.vector.iter().enumerate() {
            if gj == T::zero() {
                continue;
            }
            axpy(gj * s, &cache.hidden, &mut g[VECTOR_W].data[j * hid..(j + 1) * hid]);
            g[VECTOR_B].data[j] += gj * s;
            axpy(gj, &p[VECTOR_W].data[j * hid..(j + 1) * hid], &mut d_hidden);
        }
        let s = sign(LayerId::ScalarHead);
        if grad.scalar != T::zero() {
            axpy(grad.scalar * s, &cache.hidden, &mut g[SCALAR_W].data);
            g[SCALAR_B].data[0] += grad.scalar * s;
            axpy(grad.scalar, &p[SCALAR_W].data, &mut d_hidden);
        }

        // dense
        let s = sign(LayerId::Dense);
        let mut d_features = vec![T::zero(); din];
        for (o, (&d, &h)) in d_hidden.iter().zip(&cache.hidden).enumerate() {
            if h <= T::zero() || d == T::zero() {
                continue;
            }
            axpy(d * s, &cache.features, &mut g[DENSE_W].data[o * din..(o + 1) * din]);
            g[DENSE_B].data[o] += d * s;
            axpy(d, &p[DENSE_W].data[o * din..(o + 1) * din], &mut d_features);
        }

        // conv2
        let k2 = c1 * TAPS;
        let mut d_col2 = vec![T::zero(); P2 * k2];
        conv_backward(
            &cache.col2,
            &p[CONV2_W].data,
            &cache.features[..c2 * P2],
            &d_features[..c2 * P2],
            k2,
            sign(LayerId::Conv2),
            weight_and_bias(g, CONV2_W),
            Some(&mut d_col2),
        );
        let d_h1 = col2im(&d_col2, c1, SIDE1);

        // conv1
        conv_backward(
            &cache.col1,
            &p[CONV1_W].data,
            &cache.h1,
            &d_h1,
            OBS_CHANNELS * TAPS,
            sign(LayerId::Conv1),
            weight_and_bias(g, CONV1_W),
            None,
        );
        Ok(())
    }
}

/// Unfolds a `channels × side × side` map into rows of 3×3 patches
/// (`[position][channel, ky, kx]`) for a valid, stride-1 convolution.
fn im2col<T: Scalar>(input: &[T], channels: usize, side: usize) -> Vec<T> {
    let out_side = side - KERNEL + 1;
    let k = channels * TAPS;
    let mut col = vec![T::zero(); out_side * out_side * k];
    for oy in 0..out_side {
        for ox in 0..out_side {
            let row = &mut col[(oy * out_side + ox) * k..][..k];
            for c in 0..channels {
                for ky in 0..KERNEL {
                    let src = &input[c * side * side + (oy + ky) * side + ox..][..KERNEL];
                    row[c * TAPS + ky * KERNEL..][..KERNEL].copy_from_slice(src);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`].
fn col2im<T: Scalar>(col: &[T], channels: usize, side: usize) -> Vec<T> {
    let out_side = side - KERNEL + 1;
    let k = channels * TAPS;
    let mut out = vec![T::zero(); channels * side * side];
    for oy in 0..out_side {
        for ox in 0..out_side {
            let row = &col[(oy * out_side + ox) * k..][..k];
            for c in 0..channels {
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        out[c * side * side + (oy + ky) * side + ox + kx] += row[c * TAPS + ky * KERNEL + kx];
                    }
                }
            }
        }
    }
    out
}

/// Valid 3×3 convolution plus ReLU on im2col rows. `w` is `[k][out_channel]`,
/// so each input tap updates a contiguous run of output channels; blocks of
/// channels stay in registers and zero inputs (common in sparse observations)
/// are skipped. `out` is `[out_channel][position]`.
fn conv_relu<T: Scalar>(col: &[T], w: &[T], b: &[T], k: usize, positions: usize, out: &mut [T]) {
    const BLOCK: usize = 16;
    let oc_n = b.len();
    let full = oc_n / BLOCK * BLOCK;
    for pos in 0..positions {
        let xs = &col[pos * k..(pos + 1) * k];
        for blk in (0..full).step_by(BLOCK) {
            let mut acc: [T; BLOCK] = b[blk..blk + BLOCK].try_into().unwrap();
            for (j, &x) in xs.iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                let wv: &[T; BLOCK] = w[j * oc_n + blk..][..BLOCK].try_into().unwrap();
                for i in 0..BLOCK {
                    acc[i] += x * wv[i];
                }
            }
            for (i, &z) in acc.iter().enumerate() {
                out[(blk + i) * positions + pos] = z.max(T::zero());
            }
        }
        for oc in full..oc_n {
            let mut z = b[oc];
            for (j, &x) in xs.iter().enumerate() {
                z += x * w[j * oc_n + oc];
            }
            out[oc * positions + pos] = z.max(T::zero());
        }
    }
}

/// Mutable (weight, bias) gradient pair; the bias tensor follows its weight.
fn weight_and_bias<T>(g: &mut [Tensor<T>], weight: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = g.split_at_mut(weight + 1);
    (&mut a[weight].data, &mut b[0].data)
}

/// Backward of [`conv_relu`]. `act`/`d_act` are the layer output and its
/// gradient (`[out_channel][position]`); parameter gradients are scaled by
/// `sign` and accumulated into `grads`. Input gradients go to `d_col` when given.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    col: &[T],
    w: &[T],
    act: &[T],
    d_act: &[T],
    k: usize,
    sign: T,
    grads: (&mut [T], &mut [T]),
    mut d_col: Option<&mut [T]>,
) {
    let (gw, gb) = grads;
    let oc_n = gb.len();
    let positions = act.len() / oc_n;
    let mut d_pos = vec![T::zero(); oc_n];
    for pos in 0..positions {
        let mut any = false;
        for (oc, d) in d_pos.iter_mut().enumerate() {
            let i = oc * positions + pos;
            *d = if act[i] > T::zero() { d_act[i] } else { T::zero() };
            any |= *d != T::zero();
        }
        if !any {
            continue;
        }
        axpy(sign, &d_pos, gb);
        let xs = &col[pos * k..(pos + 1) * k];
        for (j, &x) in xs.iter().enumerate() {
            if x != T::zero() {
                axpy(x * sign, &d_pos, &mut gw[j * oc_n..(j + 1) * oc_n]);
            }
        }
        if let Some(dc) = d_col.as_deref_mut() {
            for (j, v) in dc[pos * k..(pos + 1) * k].iter_mut().enumerate() {
                *v = dot(&w[j * oc_n..(j + 1) * oc_n], &d_pos);
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use super::kernels::sum_sq;
use super::{Network, NnError, ParamSet, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Result of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// ‖Δθ‖₂ of the applied update.
    pub delta_norm: f64,
    /// ‖g‖₂ before clipping.
    pub grad_norm: f64,
    /// ‖θ‖₂ after the update.
    pub param_norm: f64,
}

/// Adaptive-moment optimizer state (first/second moments + step count).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    cfg: AdamConfig,
    m: ParamSet<T>,
    v: ParamSet<T>,
    t: u64,
    delta: Vec<T>,
}

/// Moments decay geometrically; once subnormal they only cost time.
#[inline]
fn flush<T: Scalar>(x: T) -> T {
    if x.abs() >= T::min_positive_value() {
        x
    } else {
        T::zero()
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>, cfg: AdamConfig) -> Self {
        Self { cfg, m: net.new_gradients(), v: net.new_gradients(), t: 0, delta: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&ParamSet<T>, &ParamSet<T>) {
        (&self.m, &self.v)
    }

    /// Optional global-norm clipping followed by a bias-corrected Adam update.
    pub fn step(
        &mut self,
        net: &mut Network<T>,
        grads: &ParamSet<T>,
        lr: f64,
        clip_norm: Option<f64>,
    ) -> Result<StepInfo, NnError> {
        if !grads.same_shape(net.params()) || !self.m.same_shape(net.params()) {
            return Err(NnError::Shape("gradients do not match parameters".into()));
        }
        let grad_norm = grads.norm();
        if !grad_norm.is_finite() {
            let bad = grads.tensors.iter().find(|t| t.data.iter().any(|v| !v.is_finite()));
            let name = bad.map_or_else(|| "gradient norm".to_string(), |t| t.name.clone());
            return Err(NnError::NonFiniteGradient(name));
        }
        let scale = match clip_norm {
            Some(c) if grad_norm > c && grad_norm > 0.0 => c / grad_norm,
            _ => 1.0,
        };

        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let (b1t, b2t) = (T::lit(b1), T::lit(b2));
        let (one_b1, one_b2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
        let scale = T::lit(scale);
        let step_size = T::lit(lr / bc1);
        let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
        let eps = T::lit(self.cfg.epsilon);

        let mut delta_sq = 0.0f64;
        let mut param_sq = 0.0f64;
        let params = net.params_mut();
        for (((p, g), m), v) in
            params.tensors.iter_mut().zip(&grads.tensors).zip(&mut self.m.tensors).zip(&mut self.v.tensors)
        {
            // update pass without reductions so it vectorizes; norms after
            self.delta.clear();
            self.delta.resize(p.data.len(), T::zero());
            for ((((pi, &gi), mi), vi), di) in
                p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data).zip(&mut self.delta)
            {
                let g = gi * scale;
                *mi = flush(b1t * *mi + one_b1 * g);
                *vi = flush(b2t * *vi + one_b2 * g * g);
                *di = -step_size * *mi / ((*vi).sqrt() * inv_sqrt_bc2 + eps);
                *pi += *di;
            }
            delta_sq += sum_sq(&self.delta);
            param_sq += sum_sq(&p.data);
        }
        Ok(StepInfo { delta_norm: delta_sq.sqrt(), grad_norm, param_norm: param_sq.sqrt() })
    }
}

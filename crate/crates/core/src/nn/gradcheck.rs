//! Analytic-vs-central-difference gradient verification.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{HeadGrad, HeadKind, LayerId, Network, NetworkSpec, TrunkSpec};
use crate::env::{Observation, N_ACTIONS};

const STEP: f64 = 1e-5;
const BATCH: usize = 2;
const COORDS_PER_TENSOR: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    /// `head/tensor`, e.g. `dueling/conv2.weight`.
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the perturbation flipped a ReLU.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error < self.tolerance)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.params.iter().filter(|p| p.max_rel_error >= self.tolerance).map(|p| p.name.as_str()).collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn gradient_check(trunk: &TrunkSpec, seed: u64, tolerance: f64) -> GradientReport {
    gradient_check_with_fault(trunk, seed, tolerance, None)
}

/// Checks both heads on a seeded random instance (batch of 2 random
/// observations, loss = random linear functional of the head outputs).
/// `fault` flips the sign of one layer's parameter gradient.
pub fn gradient_check_with_fault(
    trunk: &TrunkSpec,
    seed: u64,
    tolerance: f64,
    fault: Option<LayerId>,
) -> GradientReport {
    let mut params = Vec::new();
    for (k, head) in [HeadKind::Dueling, HeadKind::ActorCritic].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        params.extend(check_head(NetworkSpec::new(*trunk, head), &mut rng, fault));
    }
    GradientReport { tolerance, params }
}

fn check_head(spec: NetworkSpec, rng: &mut ChaCha8Rng, fault: Option<LayerId>) -> Vec<ParamCheck> {
    let head_name = match spec.head {
        HeadKind::Dueling => "dueling",
        HeadKind::ActorCritic => "actor_critic",
    };
    let mut net = Network::<f64>::init(spec, rng);
    for t in &mut net.params_mut().tensors {
        if t.shape.len() == 1 {
            t.data.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
    }
    let batch: Vec<(Observation, HeadGrad<f64>)> = (0..BATCH)
        .map(|_| {
            let mut obs = Observation::zeros();
            obs.grid.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
            obs.scalars.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
            let mut coef = HeadGrad::zero();
            coef.scalar = rng.gen_range(-1.0..1.0);
            for c in coef.vector.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
            (obs, coef)
        })
        .collect();

    let mut analytic = net.new_gradients();
    for (obs, coef) in &batch {
        let (_, cache) = net.forward(obs).expect("well-formed instance");
        net.backward_with_fault(&cache, coef, &mut analytic, fault).expect("matching cache");
    }

    let loss_and_mask = |net: &Network<f64>| -> (f64, Vec<bool>) {
        let mut loss = 0.0;
        let mut mask = Vec::new();
        for (obs, coef) in &batch {
            let (out, cache) = net.forward(obs).expect("well-formed instance");
            loss += coef.scalar * out.scalar;
            loss += (0..N_ACTIONS).map(|j| coef.vector[j] * out.vector[j]).sum::<f64>();
            mask.extend(cache.relu_mask());
        }
        (loss, mask)
    };

    let mut out = Vec::new();
    for ti in 0..net.params().tensors.len() {
        let len = net.params().tensors[ti].data.len();
        let coords: Vec<usize> =
            if len <= COORDS_PER_TENSOR { (0..len).collect() } else { sample(rng, len, COORDS_PER_TENSOR).into_vec() };
        let mut check = ParamCheck {
            name: format!("{head_name}/{}", net.params().tensors[ti].name),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        for i in coords {
            let orig = net.params().tensors[ti].data[i];
            set(&mut net, ti, i, orig + STEP);
            let (lp, mp) = loss_and_mask(&net);
            set(&mut net, ti, i, orig - STEP);
            let (lm, mm) = loss_and_mask(&net);
            set(&mut net, ti, i, orig);
            if mp != mm {
                check.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * STEP);
            let err = relative_error(analytic.tensors[ti].data[i], numeric);
            check.max_rel_error = check.max_rel_error.max(err);
            check.checked += 1;
        }
        out.push(check);
    }
    out
}

fn set(net: &mut Network<f64>, tensor: usize, index: usize, value: f64) {
    net.params_mut().tensors[tensor].data[index] = value;
}

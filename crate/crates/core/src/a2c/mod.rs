//! Independent advantage actor-critic learner.
//!
//! Exploration comes only from sampling the softmax policy; the entropy bonus
//! in the loss keeps the policy from collapsing early.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Observation, N_ACTIONS};
use crate::nn::{
    Adam, AdamConfig, ForwardCache, HeadGrad, HeadKind, HeadOutput, Network, NetworkSpec, NnError, ParamSet, Scalar,
    TrunkSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum A2cError {
    #[error("invalid A2C config: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite policy logits")]
    NonFiniteLogits,
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("no pending action to attach feedback to")]
    NoPendingAction,
    #[error("empty rollout")]
    EmptyRollout,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2cConfig {
    pub gamma: f64,
    pub n_step: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self { gamma: 0.99, n_step: 5, lr: 7e-4, entropy_coef: 0.01, value_coef: 0.5, clip_norm: Some(0.5) }
    }
}

impl A2cConfig {
    pub fn validate(&self) -> Result<(), A2cError> {
        let bad = |m| Err(A2cError::InvalidConfig(m));
        if self.n_step == 0 {
            return bad("n_step ≥ 1");
        }
        if self.entropy_coef < 0.0 {
            return bad("entropy_coef ≥ 0");
        }
        if self.value_coef <= 0.0 {
            return bad("value_coef > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("0 ≤ gamma ≤ 1");
        }
        if self.lr < 0.0 || self.clip_norm.is_some_and(|c| c <= 0.0) {
            return bad("lr ≥ 0, clip_norm > 0");
        }
        Ok(())
    }
}

/// Numerically stable softmax, evaluated in f64.
pub fn softmax<T: Scalar>(logits: &[T; N_ACTIONS]) -> Result<[f64; N_ACTIONS], A2cError> {
    let z = logits.map(|v| v.as_f64());
    if z.iter().any(|v| !v.is_finite()) {
        return Err(A2cError::NonFiniteLogits);
    }
    let max = z.iter().copied().fold(f64::MIN, f64::max);
    let e = z.map(|v| (v - max).exp());
    let sum: f64 = e.iter().sum();
    Ok(e.map(|v| v / sum))
}

/// `H = −Σ p ln p` (natural log), with `0·ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Inverse-CDF draw from `probs` using a single uniform variate.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64; N_ACTIONS], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(N_ACTIONS - 1)
}

/// Discounted n-step returns, bootstrapped from `bootstrap_value` after the
/// last entry; a terminal entry cuts the bootstrap.
pub fn n_step_returns(rewards: &[f64], terminals: &[bool], bootstrap_value: f64, gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), terminals.len());
    let mut out = vec![0.0; rewards.len()];
    let mut next = bootstrap_value;
    for t in (0..rewards.len()).rev() {
        let carry = if terminals[t] { 0.0 } else { next };
        out[t] = rewards[t] + gamma * carry;
        next = out[t];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct A2cLosses {
    /// `mean[−log π(a|s)·Â]`
    pub actor: f64,
    /// `mean[(R − V)²]` (before `value_coef`).
    pub critic: f64,
    /// `mean[H(π(·|s))]`
    pub entropy: f64,
    /// `actor + c_V·critic − c_H·entropy`
    pub total: f64,
}

/// Loss terms and per-sample head gradients for a batch of forward outputs.
/// Advantages are constants: no gradient flows through them.
pub fn loss_and_head_grads<T: Scalar>(
    outputs: &[HeadOutput<T>],
    actions: &[usize],
    returns: &[f64],
    advantages: &[f64],
    cfg: &A2cConfig,
) -> Result<(A2cLosses, Vec<HeadGrad<T>>), A2cError> {
    let n = outputs.len();
    if n == 0 {
        return Err(A2cError::EmptyRollout);
    }
    let inv_n = 1.0 / n as f64;
    let mut losses = A2cLosses::default();
    let mut grads = Vec::with_capacity(n);
    for (((out, &a), &ret), &adv) in outputs.iter().zip(actions).zip(returns).zip(advantages) {
        let p = softmax(&out.vector)?;
        let h = entropy(&p);
        let v = out.scalar.as_f64();
        losses.actor -= p[a].ln() * adv * inv_n;
        losses.critic += (ret - v).powi(2) * inv_n;
        losses.entropy += h * inv_n;

        let mut g = HeadGrad::zero();
        for (j, (&pj, gj)) in p.iter().zip(g.vector.iter_mut()).enumerate() {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let actor = -adv * (onehot - pj);
            let ent = if pj > 0.0 { pj * (pj.ln() + h) } else { 0.0 };
            *gj = T::lit(inv_n * (actor + cfg.entropy_coef * ent));
        }
        g.scalar = T::lit(inv_n * cfg.value_coef * 2.0 * (v - ret));
        grads.push(g);
    }
    losses.total = losses.actor + cfg.value_coef * losses.critic - cfg.entropy_coef * losses.entropy;
    Ok((losses, grads))
}

/// Full forward + loss + parameter gradient for a batch of observations.
pub fn rollout_loss<T: Scalar>(
    net: &Network<T>,
    observations: &[Observation],
    actions: &[usize],
    returns: &[f64],
    advantages: &[f64],
    cfg: &A2cConfig,
) -> Result<(A2cLosses, ParamSet<T>), A2cError> {
    let mut outputs = Vec::with_capacity(observations.len());
    let mut caches = Vec::with_capacity(observations.len());
    for o in observations {
        let (out, cache) = net.forward(o)?;
        outputs.push(out);
        caches.push(cache);
    }
    let (losses, head_grads) = loss_and_head_grads(&outputs, actions, returns, advantages, cfg)?;
    let mut grads = net.new_gradients();
    for (cache, g) in caches.iter().zip(&head_grads) {
        net.backward(cache, g, &mut grads)?;
    }
    Ok((losses, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActOutcome {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2cLearnReport {
    pub losses: A2cLosses,
    pub delta_norm: f64,
    pub param_norm: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
struct RolloutEntry<T> {
    output: HeadOutput<T>,
    cache: ForwardCache<T>,
    action: usize,
    reward: f64,
    terminal: bool,
}

/// One independent actor-critic learner with its own n-step rollout.
#[derive(Debug, Clone)]
pub struct A2cAgent<T: Scalar> {
    cfg: A2cConfig,
    net: Network<T>,
    adam: Adam<T>,
    rollout: Vec<RolloutEntry<T>>,
    pending: Option<(HeadOutput<T>, ForwardCache<T>, usize)>,
}

impl<T: Scalar> A2cAgent<T> {
    pub fn new<R: Rng + ?Sized>(cfg: A2cConfig, trunk: TrunkSpec, init_rng: &mut R) -> Result<Self, A2cError> {
        let spec = NetworkSpec::new(trunk, HeadKind::ActorCritic);
        spec.validate()?;
        Self::from_network(cfg, Network::init(spec, init_rng))
    }

    pub fn from_network(cfg: A2cConfig, net: Network<T>) -> Result<Self, A2cError> {
        cfg.validate()?;
        let adam = Adam::new(&net, AdamConfig::default());
        Ok(Self { cfg, net, adam, rollout: Vec::new(), pending: None })
    }

    pub fn config(&self) -> &A2cConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn rollout_len(&self) -> usize {
        self.rollout.len()
    }

    /// Action probabilities and state value.
    pub fn policy(&self, obs: &Observation) -> Result<([f64; N_ACTIONS], f64), A2cError> {
        let out = self.net.evaluate(obs)?;
        Ok((softmax(&out.vector)?, out.scalar.as_f64()))
    }

    /// Samples an action; the forward pass is kept for the next update.
    pub fn act<R: Rng + ?Sized>(&mut self, obs: &Observation, rng: &mut R) -> Result<ActOutcome, A2cError> {
        let (out, cache) = self.net.forward(obs)?;
        let probs = softmax(&out.vector)?;
        let a = sample_action(&probs, rng);
        self.pending = Some((out, cache, a));
        Ok(ActOutcome {
            action: Action::ALL[a],
            log_prob: probs[a].ln(),
            value: out.scalar.as_f64(),
            entropy: entropy(&probs),
        })
    }

    /// Feedback for the last action. Flushes (and learns) when the rollout is
    /// full, on `terminal`, or when the episode was cut at `truncated`.
    /// Terminal flushes bootstrap from 0, others from `V(next_obs)`.
    pub fn observe(
        &mut self,
        reward: f64,
        next_obs: &Observation,
        terminal: bool,
        truncated: bool,
    ) -> Result<Option<A2cLearnReport>, A2cError> {
        let (output, cache, action) = self.pending.take().ok_or(A2cError::NoPendingAction)?;
        self.rollout.push(RolloutEntry { output, cache, action, reward, terminal });
        if !(terminal || truncated || self.rollout.len() >= self.cfg.n_step) {
            return Ok(None);
        }
        let bootstrap = if terminal { 0.0 } else { self.net.evaluate(next_obs)?.scalar.as_f64() };
        self.flush(bootstrap).map(Some)
    }

    fn flush(&mut self, bootstrap: f64) -> Result<A2cLearnReport, A2cError> {
        let rollout = std::mem::take(&mut self.rollout);
        let rewards: Vec<f64> = rollout.iter().map(|e| e.reward).collect();
        let terminals: Vec<bool> = rollout.iter().map(|e| e.terminal).collect();
        let returns = n_step_returns(&rewards, &terminals, bootstrap, self.cfg.gamma);
        let advantages: Vec<f64> = rollout.iter().zip(&returns).map(|(e, r)| r - e.output.scalar.as_f64()).collect();
        let outputs: Vec<HeadOutput<T>> = rollout.iter().map(|e| e.output).collect();
        let actions: Vec<usize> = rollout.iter().map(|e| e.action).collect();
        let (losses, head_grads) = loss_and_head_grads(&outputs, &actions, &returns, &advantages, &self.cfg)?;
        let mut grads = self.net.new_gradients();
        for (e, g) in rollout.iter().zip(&head_grads) {
            self.net.backward(&e.cache, g, &mut grads)?;
        }
        self.apply(losses, &grads, rollout.len())
    }

    /// One update from explicit returns and advantages (advantages held
    /// constant), e.g. to drive the entropy term alone.
    pub fn update(
        &mut self,
        observations: &[Observation],
        actions: &[usize],
        returns: &[f64],
        advantages: &[f64],
    ) -> Result<A2cLearnReport, A2cError> {
        let (losses, grads) = rollout_loss(&self.net, observations, actions, returns, advantages, &self.cfg)?;
        self.apply(losses, &grads, observations.len())
    }

    fn apply(&mut self, losses: A2cLosses, grads: &ParamSet<T>, steps: usize) -> Result<A2cLearnReport, A2cError> {
        if !losses.total.is_finite() {
            return Err(A2cError::NonFiniteLoss(losses.total));
        }
        let info = self.adam.step(&mut self.net, grads, self.cfg.lr, self.cfg.clip_norm)?;
        Ok(A2cLearnReport { losses, delta_norm: info.delta_norm, param_norm: info.param_norm, steps })
    }
}

//! Group sampling, group-relative advantages and the KL-regularised GRPO
//! objective with its exact gradient.

use crate::aspect::NUM_ASPECTS;
use crate::error::{Error, Result};
use crate::parser::ParsedCompletion;
use crate::policy::{
    actions_counts, actions_style, kl_from_log_probs, log_softmax, Actions, PolicyParameters, NUM_TOKENS,
};
use crate::rewards::RewardBreakdown;
use crate::synth::render_structured_completion;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `(r_i - mean) / std` with the population standard deviation. Groups whose
/// standard deviation is below `epsilon_std` get all-zero advantages.
pub fn normalize_advantages(rewards: &[f64], epsilon_std: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= epsilon_std) || std == 0.0 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCompletion {
    pub actions: Actions,
    pub text: String,
    /// Per-token log-probabilities under the sampling policy.
    pub old_log_probs: [f64; NUM_TOKENS],
}

/// One prompt's group, filled in stage by stage during a training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub prompt_id: String,
    pub features: Vec<f64>,
    pub completions: Vec<SampledCompletion>,
    pub parsed: Vec<ParsedCompletion>,
    pub rewards: Vec<RewardBreakdown>,
    pub raw_advantages: Vec<f64>,
    pub gamma: Option<f64>,
    pub scale_factors: Vec<f64>,
    pub scaled_advantages: Vec<f64>,
}

impl GroupRecord {
    pub fn size(&self) -> usize {
        self.completions.len()
    }

    pub fn predicted_scores(&self) -> Vec<[Option<f64>; NUM_ASPECTS]> {
        self.parsed.iter().map(|p| p.scores).collect()
    }
}

/// Samples `g` completions under `theta_old` and renders each to text.
pub fn sample_group<R: Rng + ?Sized>(
    theta_old: &PolicyParameters,
    prompt_id: &str,
    features: &[f64],
    g: usize,
    rng: &mut R,
) -> Result<GroupRecord> {
    theta_old.check_features(features)?;
    if g < 2 {
        return Err(Error::Config(format!("group size must be at least 2, got {g}")));
    }
    let completions = (0..g)
        .map(|_| {
            let (actions, old_log_probs) = theta_old.sample_actions(features, rng);
            SampledCompletion {
                text: render_structured_completion(&actions_counts(&actions), actions_style(&actions)),
                actions,
                old_log_probs,
            }
        })
        .collect();
    Ok(GroupRecord {
        prompt_id: prompt_id.to_string(),
        features: features.to_vec(),
        completions,
        parsed: Vec::new(),
        rewards: Vec::new(),
        raw_advantages: Vec::new(),
        gamma: None,
        scale_factors: Vec::new(),
        scaled_advantages: Vec::new(),
    })
}

/// Loss value, its gradient and the mean per-token KL to the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: PolicyParameters,
    pub token_kl: [f64; NUM_TOKENS],
}

/// ```text
/// L = -(1/G) sum_i sum_t [ ratio_{i,t} A'_i - kl_coeff * KL_t ]
/// ratio_{i,t} = pi_theta(o_{i,t}) / pi_old(o_{i,t})
/// ```
/// `pi_old` enters through the log-probabilities stored at sampling time and
/// `KL_t` is the exact categorical KL between `pi_theta` and `pi_ref` at
/// position `t`. Tokens depend only on the prompt features, so `KL_t` is
/// shared by all completions of the group.
pub fn grpo_loss_and_gradient(
    group: &GroupRecord,
    theta: &PolicyParameters,
    theta_ref: &PolicyParameters,
    kl_coeff: f64,
) -> Result<LossOutput> {
    let g = group.size();
    if g == 0 || group.scaled_advantages.len() != g {
        return Err(Error::State(format!(
            "group has {g} completions but {} scaled advantages",
            group.scaled_advantages.len()
        )));
    }
    if !theta.same_shape(theta_ref) {
        return Err(Error::Config("policy and reference shapes differ".into()));
    }
    let x = &group.features;
    theta.check_features(x)?;
    let inv_g = 1.0 / g as f64;

    let mut grad = PolicyParameters::zeros(theta.dim(), theta.count_max());
    let mut loss = 0.0;
    let mut token_kl = [0.0; NUM_TOKENS];

    for t in 0..NUM_TOKENS {
        let lp = log_softmax(&theta.logits(t, x));
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let mut dz = vec![0.0; p.len()];

        for (c, adv) in group.completions.iter().zip(&group.scaled_advantages) {
            let a = c.actions[t];
            let ratio = (lp[a] - c.old_log_probs[t]).exp();
            loss -= inv_g * ratio * adv;
            // d ratio / d z_k = ratio * (1[k == a] - p_k)
            let coeff = -inv_g * adv * ratio;
            for (k, pk) in p.iter().enumerate() {
                dz[k] -= coeff * pk;
            }
            dz[a] += coeff;
        }

        let lq = log_softmax(&theta_ref.logits(t, x));
        let kl = kl_from_log_probs(&lp, &lq);
        token_kl[t] = kl;
        // The penalty appears once per completion and is scaled by 1/G.
        loss += kl_coeff * kl;
        if kl_coeff != 0.0 {
            for k in 0..p.len() {
                dz[k] += kl_coeff * p[k] * (lp[k] - lq[k] - kl);
            }
        }
        grad.accumulate_logit_grad(t, x, &dz);
    }

    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            detail: format!("loss = {loss}, prompt {}", group.prompt_id),
        });
    }
    Ok(LossOutput { loss, grad, token_kl })
}

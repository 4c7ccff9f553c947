//! Reasoning, format and accuracy rewards for a single completion.

use crate::aspect::{SubScoreVector, NUM_ASPECTS};
use crate::error::{Error, Result};
use crate::parser::ParsedCompletion;
use crate::sdw::AspectWeights;
use serde::{Deserialize, Serialize};

/// Tolerances of the Gaussian accuracy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Width of the per-aspect Gaussian.
    pub sigma: f64,
    /// Width of the total-score Gaussian.
    pub sigma_total: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            sigma_total: 0.5,
        }
    }
}

impl RewardParams {
    pub fn shared(sigma: f64) -> Self {
        Self {
            sigma,
            sigma_total: sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        check_sigma(self.sigma_total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_reasoning: f64,
    pub r_format: f64,
    pub per_aspect: [f64; NUM_ASPECTS],
    pub r_sub_dyn: f64,
    pub r_total: f64,
    pub r_acc: f64,
    pub r_final: f64,
}

/// Output of [`accuracy_reward`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReward {
    pub per_aspect: [f64; NUM_ASPECTS],
    pub r_sub_dyn: f64,
    pub r_total: f64,
    pub r_acc: f64,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sigma must be positive and finite, got {sigma}")))
    }
}

#[inline]
fn gaussian(pred: f64, gt: f64, sigma: f64) -> f64 {
    let d = pred - gt;
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Fraction of aspects whose reasoning step was found.
pub fn reasoning_reward(p: &ParsedCompletion) -> f64 {
    p.covered_count() as f64 / NUM_ASPECTS as f64
}

pub fn format_reward(p: &ParsedCompletion) -> f64 {
    if p.format_valid {
        1.0
    } else {
        0.0
    }
}

/// `exp(-(pred - gt)^2 / (2 sigma^2))`.
pub fn gaussian_subscore_reward(pred: f64, gt: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(gaussian(pred, gt, sigma))
}

/// Per-aspect Gaussian rewards, their weighted mean and the total-score term.
///
/// An absent score earns 0 for its aspect and forces the total-score term to 0.
pub fn accuracy_reward(
    p: &ParsedCompletion,
    gt: &SubScoreVector,
    w: &AspectWeights,
    sigma: f64,
) -> Result<AccuracyReward> {
    accuracy_reward_with(p, gt, w, &RewardParams::shared(sigma))
}

pub fn accuracy_reward_with(
    p: &ParsedCompletion,
    gt: &SubScoreVector,
    w: &AspectWeights,
    params: &RewardParams,
) -> Result<AccuracyReward> {
    params.validate()?;
    let gt = gt.as_f64();
    let mut per_aspect = [0.0; NUM_ASPECTS];
    for (j, score) in p.scores.iter().enumerate() {
        if let Some(pred) = score {
            per_aspect[j] = gaussian(*pred, gt[j], params.sigma);
        }
    }
    let r_sub_dyn = per_aspect
        .iter()
        .zip(w.w.iter())
        .map(|(r, wj)| wj * r)
        .sum::<f64>()
        / NUM_ASPECTS as f64;
    let r_total = if p.all_scores_present() {
        let predicted: f64 = p.scores.iter().flatten().sum();
        gaussian(predicted, gt.iter().sum(), params.sigma_total)
    } else {
        0.0
    };
    Ok(AccuracyReward {
        per_aspect,
        r_sub_dyn,
        r_total,
        r_acc: r_sub_dyn + r_total,
    })
}

pub fn final_reward(
    p: &ParsedCompletion,
    gt: &SubScoreVector,
    w: &AspectWeights,
    sigma: f64,
) -> Result<RewardBreakdown> {
    final_reward_with(p, gt, w, &RewardParams::shared(sigma))
}

pub fn final_reward_with(
    p: &ParsedCompletion,
    gt: &SubScoreVector,
    w: &AspectWeights,
    params: &RewardParams,
) -> Result<RewardBreakdown> {
    let acc = accuracy_reward_with(p, gt, w, params)?;
    let r_reasoning = reasoning_reward(p);
    let r_format = format_reward(p);
    Ok(RewardBreakdown {
        r_reasoning,
        r_format,
        per_aspect: acc.per_aspect,
        r_sub_dyn: acc.r_sub_dyn,
        r_total: acc.r_total,
        r_acc: acc.r_acc,
        r_final: r_reasoning + r_format + acc.r_acc,
    })
}

//! Seven-token linear-softmax policy.
//!
//! Token 0 picks a [`RenderStyle`]; tokens 1..=6 pick the error count of each
//! aspect. Every token is a categorical distribution whose logits are an
//! affine function of the prompt features, so log-probabilities and their
//! derivatives are available in closed form.

use crate::aspect::{SubScoreVector, NUM_ASPECTS};
use crate::error::{Error, Result};
use crate::synth::RenderStyle;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const NUM_TOKENS: usize = 1 + NUM_ASPECTS;
pub const STYLE_TOKEN: usize = 0;

pub type Actions = [usize; NUM_TOKENS];

/// Weight matrices of all heads, stored row-major in one flat buffer. Each
/// head has `dim + 1` columns; the last one is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    dim: usize,
    count_max: u32,
    data: Vec<f64>,
}

impl PolicyParameters {
    pub fn zeros(dim: usize, count_max: u32) -> Self {
        let mut p = Self {
            dim,
            count_max,
            data: Vec::new(),
        };
        p.data = vec![0.0; p.head_offset(NUM_TOKENS)];
        p
    }

    /// Entries drawn i.i.d. from `N(0, scale^2)`.
    pub fn random<R: Rng + ?Sized>(dim: usize, count_max: u32, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim, count_max);
        if scale > 0.0 {
            let normal = Normal::new(0.0, scale).unwrap();
            p.data.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count_max(&self) -> u32 {
        self.count_max
    }

    /// Vocabulary size of token `t`.
    pub fn vocab(&self, t: usize) -> usize {
        if t == STYLE_TOKEN {
            RenderStyle::ALL.len()
        } else {
            self.count_max as usize + 1
        }
    }

    fn cols(&self) -> usize {
        self.dim + 1
    }

    fn head_offset(&self, t: usize) -> usize {
        (0..t).map(|k| self.vocab(k) * self.cols()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.count_max == other.count_max
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn logits(&self, t: usize, features: &[f64]) -> Vec<f64> {
        let cols = self.cols();
        let base = self.head_offset(t);
        (0..self.vocab(t))
            .map(|k| {
                let row = &self.data[base + k * cols..base + (k + 1) * cols];
                row[..self.dim]
                    .iter()
                    .zip(features)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + row[self.dim]
            })
            .collect()
    }

    pub fn log_probs(&self, t: usize, features: &[f64]) -> Vec<f64> {
        log_softmax(&self.logits(t, features))
    }

    pub fn probs(&self, t: usize, features: &[f64]) -> Vec<f64> {
        self.log_probs(t, features).into_iter().map(f64::exp).collect()
    }

    /// Adds `coeff * g ⊗ [features, 1]` to head `t`, where `g` is a gradient
    /// with respect to that head's logits.
    pub(crate) fn accumulate_logit_grad(&mut self, t: usize, features: &[f64], g: &[f64]) {
        let cols = self.cols();
        let base = self.head_offset(t);
        for (k, gk) in g.iter().enumerate() {
            if *gk == 0.0 {
                continue;
            }
            let row = &mut self.data[base + k * cols..base + (k + 1) * cols];
            for (w, x) in row[..self.dim].iter_mut().zip(features) {
                *w += gk * x;
            }
            row[self.dim] += gk;
        }
    }

    pub fn sample_actions<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> (Actions, [f64; NUM_TOKENS]) {
        let mut actions = [0; NUM_TOKENS];
        let mut logps = [0.0; NUM_TOKENS];
        for t in 0..NUM_TOKENS {
            let lp = self.log_probs(t, features);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = lp.len() - 1;
            for (k, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    pick = k;
                    break;
                }
            }
            actions[t] = pick;
            logps[t] = lp[pick];
        }
        (actions, logps)
    }

    /// Most likely token at every position (lowest index on ties).
    pub fn greedy_actions(&self, features: &[f64]) -> Actions {
        std::array::from_fn(|t| argmax(&self.logits(t, features)))
    }

    /// Greedy count prediction, ignoring the style token.
    pub fn predict_counts(&self, features: &[f64]) -> SubScoreVector {
        let a = self.greedy_actions(features);
        SubScoreVector(std::array::from_fn(|j| a[1 + j] as u32))
    }

    pub fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::Config(format!(
                "policy expects {} features, got {}",
                self.dim,
                features.len()
            )));
        }
        Ok(())
    }
}

pub fn actions_style(a: &Actions) -> RenderStyle {
    RenderStyle::from_index(a[STYLE_TOKEN]).unwrap_or(RenderStyle::Malformed)
}

pub fn actions_counts(a: &Actions) -> SubScoreVector {
    SubScoreVector(std::array::from_fn(|j| a[1 + j] as u32))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Exact `KL(p || q) = sum p log(p / q)` for strictly positive distributions.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
        .sum::<f64>()
        .max(0.0))
}

/// KL from log-probabilities; avoids `exp`/`ln` round trips.
pub(crate) fn kl_from_log_probs(lp: &[f64], lq: &[f64]) -> f64 {
    lp.iter()
        .zip(lq)
        .map(|(a, b)| a.exp() * (a - b))
        .sum::<f64>()
}

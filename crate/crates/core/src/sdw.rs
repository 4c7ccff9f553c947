//! Sub-score dynamic weighting.
//!
//! A sliding window of recent (prediction, ground truth) pairs is reduced to a
//! per-aspect detection F1 every `interval` steps. Each aspect's gap to the
//! mean F1 is pushed through a softmax with temperature `alpha`, and the weight
//! of aspect `j` becomes `1 + softmax_j`.

use crate::aspect::{SubScoreVector, NUM_ASPECTS};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Per-aspect reward weights together with the statistics that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectWeights {
    pub w: [f64; NUM_ASPECTS],
    pub f1_snapshot: [f64; NUM_ASPECTS],
    pub gaps: [f64; NUM_ASPECTS],
    pub step_of_update: u64,
}

impl AspectWeights {
    /// All weights 1: the state before the first refresh, and the plain-mean
    /// reward used when dynamic weighting is disabled.
    pub fn unit() -> Self {
        Self {
            w: [1.0; NUM_ASPECTS],
            f1_snapshot: [0.0; NUM_ASPECTS],
            gaps: [0.0; NUM_ASPECTS],
            step_of_update: 0,
        }
    }

    pub fn from_weights(w: [f64; NUM_ASPECTS]) -> Self {
        Self { w, ..Self::unit() }
    }
}

impl Default for AspectWeights {
    fn default() -> Self {
        Self::unit()
    }
}

/// Softmax-of-gaps weights from a per-aspect F1 vector.
pub fn update_weights(f1: &[f64; NUM_ASPECTS], alpha: f64, step: u64) -> Result<AspectWeights> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let mean = f1.iter().sum::<f64>() / NUM_ASPECTS as f64;
    let gaps = f1.map(|f| mean - f);
    let logits = gaps.map(|g| alpha * g);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|z| (z - max).exp());
    let norm: f64 = exps.iter().sum();
    Ok(AspectWeights {
        w: exps.map(|e| 1.0 + e / norm),
        f1_snapshot: *f1,
        gaps,
        step_of_update: step,
    })
}

/// One scored completion: parsed scores (absent when the tag was unusable) and
/// the ground truth it was scored against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub pred: [Option<f64>; NUM_ASPECTS],
    pub gt: SubScoreVector,
}

/// Bounded FIFO of recent predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWindow {
    capacity: usize,
    entries: VecDeque<WindowEntry>,
}

impl PredictionWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn record(&mut self, pred: [Option<f64>; NUM_ASPECTS], gt: SubScoreVector) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(WindowEntry { pred, gt });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }
}

/// Whether a parsed score predicts at least one error. Absent predictions
/// count as "no error predicted".
fn predicts_error(score: Option<f64>) -> bool {
    score.is_some_and(|v| v.round() > 0.0)
}

/// Detection F1 per aspect over the window, with error presence (count > 0)
/// as the positive class. An aspect with no positives on either side scores 1.
pub fn aspect_f1(window: &PredictionWindow) -> Result<[f64; NUM_ASPECTS]> {
    if window.is_empty() {
        return Err(Error::State("cannot compute F1 over an empty window".into()));
    }
    let mut tp = [0u64; NUM_ASPECTS];
    let mut fp = [0u64; NUM_ASPECTS];
    let mut fnn = [0u64; NUM_ASPECTS];
    for e in window.iter() {
        for j in 0..NUM_ASPECTS {
            match (predicts_error(e.pred[j]), e.gt.0[j] > 0) {
                (true, true) => tp[j] += 1,
                (true, false) => fp[j] += 1,
                (false, true) => fnn[j] += 1,
                (false, false) => {}
            }
        }
    }
    Ok(std::array::from_fn(|j| {
        let denom = 2 * tp[j] + fp[j] + fnn[j];
        if denom == 0 {
            1.0
        } else {
            (2 * tp[j]) as f64 / denom as f64
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdwConfig {
    pub enabled: bool,
    /// Refresh interval M, in steps.
    pub interval: u64,
    pub alpha: f64,
    pub window: usize,
}

impl Default for SdwConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval: 64,
            alpha: 2.0,
            window: 256,
        }
    }
}

/// Window plus current weights. When disabled, weights stay at 1 forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdwController {
    config: SdwConfig,
    window: PredictionWindow,
    weights: AspectWeights,
}

impl SdwController {
    pub fn new(config: SdwConfig) -> Self {
        Self {
            config,
            window: PredictionWindow::new(config.window),
            weights: AspectWeights::unit(),
        }
    }

    pub fn config(&self) -> &SdwConfig {
        &self.config
    }

    pub fn record(&mut self, pred: [Option<f64>; NUM_ASPECTS], gt: SubScoreVector) {
        self.window.record(pred, gt);
    }

    pub fn window(&self) -> &PredictionWindow {
        &self.window
    }

    /// Snapshot of the weights in force.
    pub fn weights(&self) -> AspectWeights {
        self.weights
    }

    /// Called once at the end of every 1-based step `step`; refreshes the
    /// weights when `step` is a multiple of the interval. An empty window
    /// keeps the previous weights.
    pub fn on_step_end(&mut self, step: u64) -> Option<AspectWeights> {
        if !self.config.enabled || self.config.interval == 0 || step % self.config.interval != 0 {
            return None;
        }
        let f1 = aspect_f1(&self.window).ok()?;
        let w = update_weights(&f1, self.config.alpha, step).ok()?;
        self.weights = w;
        Some(w)
    }
}

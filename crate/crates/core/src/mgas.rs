//! Majority-guided advantage scaling.
//!
//! The group's per-aspect majority prediction is compared with the ground
//! truth; the fraction of matching aspects (`gamma`) measures how easy the
//! prompt is. Positive advantages are scaled through `psi = gamma`, negative
//! ones through `psi = 1 - gamma`, with
//! `s = phi_minus + (phi_plus - phi_minus) * (1 + psi - c)^(-beta)`.

use crate::aspect::{SubScoreVector, NUM_ASPECTS};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgasParams {
    pub phi_minus: f64,
    pub phi_plus: f64,
    /// Difficulty threshold.
    pub c: f64,
    /// Modulation sharpness. Unrelated to the KL coefficient.
    pub beta: f64,
    /// Clip the factor into `[phi_minus, phi_plus]`.
    pub clamp: bool,
}

impl Default for MgasParams {
    fn default() -> Self {
        Self {
            phi_minus: 0.8,
            phi_plus: 1.2,
            c: 0.5,
            beta: 1.0,
            clamp: true,
        }
    }
}

impl MgasParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.phi_minus.is_finite() && self.phi_minus > 0.0) {
            problems.push(format!("phi_minus must be positive, got {}", self.phi_minus));
        }
        if !(self.phi_plus.is_finite() && self.phi_minus < self.phi_plus) {
            problems.push(format!(
                "phi_minus ({}) must be below phi_plus ({})",
                self.phi_minus, self.phi_plus
            ));
        }
        if !(0.0..=1.0).contains(&self.c) {
            problems.push(format!("c must lie in [0, 1], got {}", self.c));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            problems.push(format!("mgas beta must be positive, got {}", self.beta));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvantageSign {
    Positive,
    Negative,
    Zero,
}

impl AdvantageSign {
    pub fn of(a: f64) -> Self {
        if a > 0.0 {
            AdvantageSign::Positive
        } else if a < 0.0 {
            AdvantageSign::Negative
        } else {
            AdvantageSign::Zero
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    /// Majority value per aspect; `None` when every prediction was absent.
    pub modes: [Option<i64>; NUM_ASPECTS],
    pub per_aspect_match: [bool; NUM_ASPECTS],
    pub gamma: f64,
}

/// Most frequent value; ties go to the smallest value.
fn mode<I: IntoIterator<Item = i64>>(values: I) -> Option<i64> {
    let mut counts = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    // max_by_key returns the last maximum, so iterate in descending order.
    counts
        .into_iter()
        .rev()
        .max_by_key(|&(_, n)| n)
        .map(|(v, _)| v)
}

/// Per-aspect majority vote over the group's parsed predictions, compared with
/// the ground truth. Predictions are rounded to the nearest integer; absent
/// predictions do not vote.
pub fn agreement(group_preds: &[[Option<f64>; NUM_ASPECTS]], gt: &SubScoreVector) -> AgreementResult {
    let mut modes = [None; NUM_ASPECTS];
    let mut per_aspect_match = [false; NUM_ASPECTS];
    for j in 0..NUM_ASPECTS {
        modes[j] = mode(group_preds.iter().filter_map(|p| p[j]).map(|v| v.round() as i64));
        per_aspect_match[j] = modes[j] == Some(i64::from(gt.0[j]));
    }
    let matches = per_aspect_match.iter().filter(|m| **m).count();
    AgreementResult {
        modes,
        per_aspect_match,
        gamma: matches as f64 / NUM_ASPECTS as f64,
    }
}

/// Formula value before any clamping.
pub fn raw_scale_factor(gamma: f64, sign: AdvantageSign, p: &MgasParams) -> Result<f64> {
    let psi = match sign {
        AdvantageSign::Positive => gamma,
        AdvantageSign::Negative => 1.0 - gamma,
        AdvantageSign::Zero => return Ok(1.0),
    };
    let base = 1.0 + (psi - p.c);
    if base <= 0.0 {
        return Err(Error::Domain(format!(
            "1 + psi - c must be positive (psi = {psi}, c = {})",
            p.c
        )));
    }
    Ok(p.phi_minus + (p.phi_plus - p.phi_minus) * base.powf(-p.beta))
}

pub fn scale_factor(gamma: f64, sign: AdvantageSign, p: &MgasParams) -> Result<f64> {
    let s = raw_scale_factor(gamma, sign, p)?;
    if p.clamp && sign != AdvantageSign::Zero {
        Ok(s.clamp(p.phi_minus, p.phi_plus))
    } else {
        Ok(s)
    }
}

/// Scale factors `s_i` for a group of advantages.
pub fn scale_factors(advantages: &[f64], gamma: f64, p: &MgasParams) -> Result<Vec<f64>> {
    advantages
        .iter()
        .map(|&a| scale_factor(gamma, AdvantageSign::of(a), p))
        .collect()
}

pub fn scale_advantages(advantages: &[f64], gamma: f64, p: &MgasParams) -> Result<Vec<f64>> {
    Ok(scale_factors(advantages, gamma, p)?
        .into_iter()
        .zip(advantages)
        .map(|(s, a)| s * a)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn preds(col: &[u32], gt_len_fill: u32) -> Vec<[Option<f64>; 6]> {
        col.iter()
            .map(|&v| {
                let mut row = [Some(gt_len_fill as f64); 6];
                row[0] = Some(v as f64);
                row
            })
            .collect()
    }

    #[test]
    fn strict_majority() {
        let r = agreement(&preds(&[1, 1, 0, 2], 0), &SubScoreVector::new([1, 0, 0, 0, 0, 0]));
        assert_eq!(r.modes[0], Some(1));
        assert!(r.per_aspect_match[0]);
        assert_eq!(r.gamma, 1.0);
    }

    #[test]
    fn tie_breaks_to_smallest() {
        let r = agreement(&preds(&[1, 0, 1, 0], 0), &SubScoreVector::new([0; 6]));
        assert_eq!(r.modes[0], Some(0));
        assert!(r.per_aspect_match[0]);
        assert_eq!(mode([3, 2, 3, 2, 5]), Some(2));
        assert_eq!(mode([] as [i64; 0]), None);
    }

    #[test]
    fn half_agreement() {
        let group = vec![[Some(1.0), Some(1.0), Some(1.0), Some(0.0), Some(0.0), Some(0.0)]; 3];
        let r = agreement(&group, &SubScoreVector::new([1, 1, 1, 1, 1, 1]));
        assert_eq!(r.gamma, 0.5);
    }

    #[test]
    fn absent_predictions_do_not_vote() {
        let group = vec![
            [None, Some(2.0), Some(0.0), Some(0.0), Some(0.0), Some(0.0)],
            [None, None, Some(0.0), Some(0.0), Some(0.0), Some(0.0)],
            [None, None, Some(0.0), Some(0.0), Some(0.0), Some(0.0)],
        ];
        let r = agreement(&group, &SubScoreVector::new([0, 2, 0, 0, 0, 0]));
        assert_eq!(r.modes[0], None);
        assert!(!r.per_aspect_match[0]);
        assert_eq!(r.modes[1], Some(2));
        assert!((r.gamma - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn decimal_payloads_are_rounded() {
        let group = vec![[Some(1.0), Some(0.9), Some(0.2), Some(0.0), Some(0.0), Some(0.0)]];
        let r = agreement(&group, &SubScoreVector::new([1, 1, 0, 0, 0, 0]));
        assert_eq!(r.gamma, 1.0);
    }

    #[test]
    fn factor_examples() {
        let p = MgasParams::default();
        assert!((scale_factor(0.5, AdvantageSign::Positive, &p).unwrap() - 1.2).abs() < 1e-15);
        let s = scale_factor(1.0, AdvantageSign::Positive, &p).unwrap();
        assert!((s - 1.0666666666666667).abs() < 1e-12);
        assert!((raw_scale_factor(0.0, AdvantageSign::Positive, &p).unwrap() - 1.6).abs() < 1e-12);
        assert_eq!(scale_factor(0.0, AdvantageSign::Positive, &p).unwrap(), 1.2);
        let unclamped = MgasParams { clamp: false, ..p };
        assert!((scale_factor(0.0, AdvantageSign::Positive, &unclamped).unwrap() - 1.6).abs() < 1e-12);
        assert_eq!(scale_factor(0.3, AdvantageSign::Zero, &p).unwrap(), 1.0);
    }

    #[test]
    fn domain_error_when_base_nonpositive() {
        let p = MgasParams { c: 1.0, ..Default::default() };
        // psi = 0 with c = 1 gives a zero base.
        assert!(matches!(
            raw_scale_factor(0.0, AdvantageSign::Positive, &p),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn scaled_advantage_examples() {
        let p = MgasParams::default();
        let out = scale_advantages(&[0.0, 1.0, -1.0], 1.0, &p).unwrap();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 1.0666666666666667).abs() < 1e-12);
        assert!((out[2] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(MgasParams::default().validate().is_ok());
        assert!(MgasParams { phi_minus: 1.3, ..Default::default() }.validate().is_err());
        assert!(MgasParams { c: 1.5, ..Default::default() }.validate().is_err());
        assert!(MgasParams { beta: 0.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn sign_preserved(a in -5.0..5.0f64, k in 0u32..=6, clamp: bool) {
            let p = MgasParams { clamp, ..Default::default() };
            let out = scale_advantages(&[a], k as f64 / 6.0, &p).unwrap();
            prop_assert_eq!(AdvantageSign::of(out[0]), AdvantageSign::of(a));
        }
    }
}

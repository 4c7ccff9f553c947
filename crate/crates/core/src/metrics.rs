//! Rank correlation between predicted and annotated scores.

use crate::aspect::{ErrorAspect, SubScoreVector, NUM_ASPECTS};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::Write as _;

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedStatistic(format!(
            "need at least 2 observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN in correlation input".into()));
    }
    Ok(())
}

fn tie_pairs<T, F: Fn(&T, &T) -> bool>(sorted: &[T], eq: F) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that returns the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b, `(C - D) / sqrt((C + D + Tx) (C + D + Ty))`, in
/// `O(n log n)` (Knight's algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let tied_x = tie_pairs(&pairs, |a, b| a.0 == b.0);
    let tied_xy = tie_pairs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let tied_y = tie_pairs(&ys, |a, b| a == b);

    // C + D + Tx and C + D + Ty.
    let not_tied_y = n0 - tied_y;
    let not_tied_x = n0 - tied_x;
    if not_tied_x == 0 || not_tied_y == 0 {
        return Err(Error::UndefinedStatistic("tau-b denominator is zero (constant input)".into()));
    }
    let concordant_minus_discordant = (n0 + tied_xy) as i64 - (tied_x + tied_y) as i64 - 2 * swaps as i64;
    Ok(concordant_minus_discordant as f64 / (not_tied_y as f64 * not_tied_x as f64).sqrt())
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let mean_rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = mean_rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedStatistic("Spearman rho undefined for constant input".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// Aspect tag, or `"total"`.
    pub label: String,
    /// `None` when the statistic is undefined (a constant column).
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub n: usize,
}

impl CorrelationRow {
    pub fn is_defined(&self) -> bool {
        self.kendall_tau.is_some() && self.spearman_rho.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub corpus_id: Option<String>,
    pub checkpoint_id: Option<String>,
}

fn row(label: &str, x: &[f64], y: &[f64]) -> Result<CorrelationRow> {
    let keep_undefined = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedStatistic(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(CorrelationRow {
        label: label.to_string(),
        kendall_tau: keep_undefined(kendall_tau_b(x, y))?,
        spearman_rho: keep_undefined(spearman_rho(x, y))?,
        n: x.len(),
    })
}

/// One row per aspect plus a `total` row over summed counts.
pub fn correlation_report(preds: &[SubScoreVector], annots: &[SubScoreVector]) -> Result<CorrelationReport> {
    if preds.len() != annots.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: annots.len(),
        });
    }
    if preds.len() < 2 {
        return Err(Error::UndefinedStatistic(format!(
            "need at least 2 observations, got {}",
            preds.len()
        )));
    }
    let column = |v: &[SubScoreVector], j: usize| v.iter().map(|s| f64::from(s.0[j])).collect::<Vec<_>>();
    let mut rows = Vec::with_capacity(NUM_ASPECTS + 1);
    for aspect in ErrorAspect::ALL {
        let j = aspect.index();
        rows.push(row(aspect.canonical_tag(), &column(preds, j), &column(annots, j))?);
    }
    let totals = |v: &[SubScoreVector]| v.iter().map(|s| f64::from(s.total())).collect::<Vec<_>>();
    rows.push(row("total", &totals(preds), &totals(annots))?);
    Ok(CorrelationReport {
        rows,
        corpus_id: None,
        checkpoint_id: None,
    })
}

impl CorrelationReport {
    pub fn total(&self) -> &CorrelationRow {
        self.rows.last().expect("report always has a total row")
    }

    /// Plain-text table with Kendall and Spearman columns.
    pub fn render_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.3}"));
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(8).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>6}", "criteria", "kendall", "spearman", "n");
        let _ = writeln!(out, "{}", "-".repeat(width + 32));
        for r in &self.rows {
            if r.label == "total" {
                let _ = writeln!(out, "{}", "-".repeat(width + 32));
            }
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>9}  {:>6}",
                r.label,
                fmt(r.kendall_tau),
                fmt(r.spearman_rho),
                r.n
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_concordance_and_discordance() {
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman_rho(&[1.0, 5.0, 9.0], &[0.1, 0.2, 100.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap(), -1.0);
    }

    #[test]
    fn tied_example() {
        // Pairs: 4 concordant, 1 tied only in x, 1 tied only in y.
        let tau = kendall_tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 3.0]).unwrap();
        assert!((tau - 0.8).abs() < 1e-15);
        let rho = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 3.0]).unwrap();
        assert!((rho - 0.8333333333333335).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(kendall_tau_b(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::UndefinedStatistic(_))));
        assert!(matches!(kendall_tau_b(&[1.0, 2.0], &[1.0, 1.0]), Err(Error::UndefinedStatistic(_))));
        assert!(matches!(spearman_rho(&[1.0], &[1.0]), Err(Error::UndefinedStatistic(_))));
        assert!(matches!(kendall_tau_b(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn average_rank_values() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn report_identity_and_undefined_rows() {
        let preds: Vec<SubScoreVector> = (0..10u32)
            .map(|i| SubScoreVector::new([i % 3, i % 4, (i * 7) % 5, i % 2, 0, (i + 1) % 3]))
            .collect();
        let report = correlation_report(&preds, &preds).unwrap();
        assert_eq!(report.rows.len(), 7);
        for r in &report.rows {
            if r.label == "absence_of_comparison" {
                assert!(!r.is_defined());
            } else {
                assert_eq!(r.kendall_tau, Some(1.0), "{}", r.label);
                assert!((r.spearman_rho.unwrap() - 1.0).abs() < 1e-12);
            }
        }
        let table = report.render_table();
        assert!(table.contains("undefined"));
        assert!(table.contains("total"));
        assert!(correlation_report(&preds[..1], &preds[..1]).is_err());
        assert!(correlation_report(&preds[..3], &preds[..4]).is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// `(threshold, fpr, tpr)`, starting at `(+inf, 0, 0)` and ending at
    /// `(min score, 1, 1)`.
    pub points: Vec<(f64, f64, f64)>,
    pub auc: f64,
}

fn check(known: &[f64], novel: &[f64]) -> Result<()> {
    if known.is_empty() || novel.is_empty() {
        return Err(Error::Evaluation(format!(
            "AUC needs both known ({}) and novel ({}) scores",
            known.len(),
            novel.len()
        )));
    }
    if known.iter().chain(novel).any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite score".into()));
    }
    Ok(())
}

/// ROC of "score >= t means known" over every distinct threshold, with the
/// area by the trapezoid rule.
pub fn roc_auc(known: &[f64], novel: &[f64]) -> Result<RocResult> {
    check(known, novel)?;
    let mut tagged: Vec<(f64, bool)> = known
        .iter()
        .map(|&s| (s, true))
        .chain(novel.iter().map(|&s| (s, false)))
        .collect();
    tagged.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (nk, nn) = (known.len() as f64, novel.len() as f64);
    let mut points = vec![(f64::INFINITY, 0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < tagged.len() {
        let t = tagged[i].0;
        while i < tagged.len() && tagged[i].0 == t {
            if tagged[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (_, fpr0, tpr0) = *points.last().expect("non-empty");
        let (fpr, tpr) = (fp as f64 / nn, tp as f64 / nk);
        auc += (fpr - fpr0) * (tpr + tpr0) * 0.5;
        points.push((t, fpr, tpr));
    }
    Ok(RocResult { points, auc })
}

/// `(#{known > novel} + #{ties} / 2) / (n_known * n_novel)` by direct
/// enumeration of all pairs.
pub fn auc_pairwise_oracle(known: &[f64], novel: &[f64]) -> Result<f64> {
    check(known, novel)?;
    let mut twice_wins = 0u64;
    for &k in known {
        for &n in novel {
            twice_wins += if k > n {
                2
            } else if k == n {
                1
            } else {
                0
            };
        }
    }
    Ok(twice_wins as f64 / (2.0 * known.len() as f64 * novel.len() as f64))
}

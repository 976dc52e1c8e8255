use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ScoreRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Known,
    Novel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyThreshold {
    pub gamma: f64,
    /// Lower-tail fraction of matched scores the threshold was set at (the
    /// accepted false-negative rate).
    pub quantile: f64,
    pub sample_count: usize,
    /// False-negative rate the threshold produces on the calibration scores.
    pub realized_fnr: f64,
}

/// Novel iff `score < gamma`; a score equal to the threshold is known.
pub fn decide(record: &ScoreRecord, gamma: f64) -> Decision {
    if record.score < gamma {
        Decision::Novel
    } else {
        Decision::Known
    }
}

/// Fraction of `scores` strictly below `gamma`.
pub fn realized_fnr(scores: &[f64], gamma: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s < gamma).count() as f64 / scores.len() as f64
}

/// Sets `gamma` to the `ceil(target_fnr * n)`-th smallest matched score, so
/// that at most `ceil(target_fnr * n) - 1` calibration samples fall below it.
pub fn calibrate_threshold(matched: &[f64], target_fnr: f64) -> Result<NoveltyThreshold> {
    if matched.is_empty() {
        return Err(Error::Calibration("no matched scores to calibrate on".into()));
    }
    if !(target_fnr > 0.0 && target_fnr < 1.0) {
        return Err(Error::Config(format!("target FNR {target_fnr} outside (0, 1)")));
    }
    if matched.iter().any(|s| !s.is_finite()) {
        return Err(Error::Calibration("non-finite matched score".into()));
    }
    let n = matched.len();
    let mut sorted = matched.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Relative slack absorbs representation error such as 0.07 * 100 = 7.000000000000001.
    let product = target_fnr * n as f64;
    let rank = ((product * (1.0 - 1e-12)).ceil() as usize).clamp(1, n);
    let gamma = sorted[rank - 1];
    Ok(NoveltyThreshold {
        gamma,
        quantile: target_fnr,
        sample_count: n,
        realized_fnr: realized_fnr(matched, gamma),
    })
}

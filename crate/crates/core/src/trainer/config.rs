use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{MembershipParams, DEFAULT_LAMBDA};
use crate::nn::{DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM};

/// Which losses and branches take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingMode {
    /// Single branch, cross-entropy on the known set.
    #[serde(rename = "ce-only")]
    CeOnly,
    /// Single branch, cross-entropy plus membership loss.
    #[serde(rename = "ce+membership")]
    CeMembership,
    /// Both branches, cross-entropy on each.
    #[serde(rename = "dual-ce")]
    DualCe,
    /// Both branches; known branch also carries the membership loss.
    #[serde(rename = "dual-full")]
    DualFull,
    /// Single head over known plus reference classes, cross-entropy only.
    #[serde(rename = "finetune-cC")]
    FinetuneCc,
}

impl TrainingMode {
    pub const ABLATION: [TrainingMode; 4] = [
        TrainingMode::CeOnly,
        TrainingMode::CeMembership,
        TrainingMode::DualCe,
        TrainingMode::DualFull,
    ];

    pub const ALL: [TrainingMode; 5] = [
        TrainingMode::CeOnly,
        TrainingMode::CeMembership,
        TrainingMode::DualCe,
        TrainingMode::DualFull,
        TrainingMode::FinetuneCc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::CeOnly => "ce-only",
            TrainingMode::CeMembership => "ce+membership",
            TrainingMode::DualCe => "dual-ce",
            TrainingMode::DualFull => "dual-full",
            TrainingMode::FinetuneCc => "finetune-cC",
        }
    }

    /// Position in [`TrainingMode::ALL`].
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).expect("listed")
    }

    /// Whether training consumes a reference dataset.
    pub fn needs_reference(self) -> bool {
        matches!(
            self,
            TrainingMode::DualCe | TrainingMode::DualFull | TrainingMode::FinetuneCc
        )
    }

    /// Whether the model carries a separate reference head.
    pub fn has_reference_branch(self) -> bool {
        matches!(self, TrainingMode::DualCe | TrainingMode::DualFull)
    }

    pub fn uses_membership(self) -> bool {
        matches!(self, TrainingMode::CeMembership | TrainingMode::DualFull)
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode `{s}` (expected one of ce-only, ce+membership, dual-ce, dual-full, finetune-cC)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda: f64,
    /// Weight of the known-set cross-entropy.
    pub alpha1: f64,
    /// Weight of the known-set membership loss.
    pub alpha2: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size_known: usize,
    pub batch_size_reference: usize,
    pub seed: u64,
    pub mode: TrainingMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            alpha1: 1.0,
            alpha2: 1.0,
            learning_rate: DEFAULT_LEARNING_RATE,
            momentum: DEFAULT_MOMENTUM,
            epochs: 20,
            batch_size_known: 32,
            batch_size_reference: 32,
            seed: 0,
            mode: TrainingMode::DualFull,
        }
    }
}

/// Loss weights actually applied in a given mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub reference_ce: f64,
    pub known_ce: f64,
    pub known_membership: f64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        MembershipParams::new(self.lambda)?;
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0 && self.alpha1.is_finite() && self.alpha2.is_finite()) {
            return Err(Error::Config("alpha1 and alpha2 must be finite and >= 0".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size_known == 0 || self.batch_size_reference == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn membership(&self) -> MembershipParams {
        MembershipParams { lambda: self.lambda }
    }

    pub fn loss_weights(&self) -> LossWeights {
        let m = self.mode;
        LossWeights {
            reference_ce: if m.has_reference_branch() { 1.0 } else { 0.0 },
            known_ce: self.alpha1,
            known_membership: if m.uses_membership() { self.alpha2 } else { 0.0 },
        }
    }
}

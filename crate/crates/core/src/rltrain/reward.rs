//! Per-path rewards computed from the relation head's scores.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationId;
use crate::error::{ReicError, Result};
use crate::rehead::HeadVariant;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda_positive: f64,
    pub lambda_na: f64,
    pub variant: HeadVariant,
    pub clip_negative: bool,
}

impl RewardConfig {
    /// Clipping is on for the end-to-end head and off for the threshold head.
    pub fn new(variant: HeadVariant) -> Self {
        RewardConfig {
            lambda_positive: 10.0,
            lambda_na: 1.0,
            variant,
            clip_negative: variant == HeadVariant::EndToEnd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_positive > 0.0 && self.lambda_na > 0.0) {
            return Err(ReicError::Config(format!(
                "reward scales must be positive (got {} and {})",
                self.lambda_positive, self.lambda_na
            )));
        }
        Ok(())
    }

    pub fn lambda_for(&self, label: Option<RelationId>) -> f64 {
        match label {
            Some(_) => self.lambda_positive,
            None => self.lambda_na,
        }
    }

    fn clip(&self, r: f64) -> f64 {
        if self.clip_negative {
            r.max(0.0)
        } else {
            r
        }
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig::new(HeadVariant::EndToEnd)
    }
}

/// `lambda * (y_r - max_{i != r} y_i) / y_r` over scores whose last entry is
/// the N/A class. A zero true-class score yields zero reward.
pub fn reward_end2end(scores: ArrayView1<f64>, label: Option<RelationId>, cfg: &RewardConfig) -> Result<f64> {
    let n = scores.len();
    if n < 2 {
        return Err(ReicError::Data(
            "end-to-end scores need at least one relation plus N/A".into(),
        ));
    }
    let k = match label {
        None => n - 1,
        Some(r) if r + 1 < n => r,
        Some(r) => {
            return Err(ReicError::Data(format!(
                "relation {r} out of range for {} relations",
                n - 1
            )))
        }
    };
    let own = scores[k];
    if own == 0.0 {
        log::debug!("true-class score is exactly zero; reward set to 0");
        return Ok(0.0);
    }
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(cfg.clip(cfg.lambda_for(label) * ((own - runner_up) / own)))
}

/// `lambda * (y_r - theta)` for a positive label and
/// `lambda_na * (theta - max_r y_r)` for N/A.
pub fn reward_threshold(
    scores: ArrayView1<f64>,
    label: Option<RelationId>,
    theta: f64,
    cfg: &RewardConfig,
) -> Result<f64> {
    let raw = match label {
        Some(r) => {
            let y = *scores
                .get(r)
                .ok_or_else(|| ReicError::Data(format!("relation {r} out of range for {} relations", scores.len())))?;
            y - theta
        }
        None => theta - scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(cfg.clip(cfg.lambda_for(label) * raw))
}

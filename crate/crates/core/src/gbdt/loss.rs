use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberParams {
    pub delta: f64,
}

impl HuberParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || delta.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "Huber delta must be positive, got {delta}"
            )));
        }
        Ok(HuberParams { delta })
    }
}

fn check(y: f64, yhat: f64) -> Result<()> {
    if y.is_finite() && yhat.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "non-finite Huber input (y={y}, yhat={yhat})"
        )))
    }
}

/// `0.5 r^2` for `|r| <= delta`, `delta |r| - 0.5 delta^2` beyond.
pub fn huber_loss(y: f64, yhat: f64, params: HuberParams) -> Result<f64> {
    check(y, yhat)?;
    Ok(huber_loss_unchecked(y - yhat, params.delta))
}

pub(crate) fn huber_loss_unchecked(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * a - 0.5 * delta * delta
    }
}

/// Derivative with respect to the prediction.
pub fn huber_gradient(y: f64, yhat: f64, params: HuberParams) -> Result<f64> {
    check(y, yhat)?;
    Ok(-pseudo_residual(y - yhat, params.delta))
}

/// Negative gradient: the residual clipped to `[-delta, delta]`.
#[inline]
pub(crate) fn pseudo_residual(residual: f64, delta: f64) -> f64 {
    if residual.abs() <= delta {
        residual
    } else {
        delta.copysign(residual)
    }
}

/// Regression targets of one boosting round.
pub fn pseudo_residuals(labels: &[f64], predictions: &[f64], params: HuberParams) -> Vec<f64> {
    labels
        .iter()
        .zip(predictions)
        .map(|(y, p)| pseudo_residual(y - p, params.delta))
        .collect()
}

pub fn mean_huber_loss(labels: &[f64], predictions: &[f64], params: HuberParams) -> f64 {
    let total: f64 = labels
        .iter()
        .zip(predictions)
        .map(|(y, p)| huber_loss_unchecked(y - p, params.delta))
        .sum();
    total / labels.len().max(1) as f64
}

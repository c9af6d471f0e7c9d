//! Log-linear least-squares fits of exponential decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FIT_SAMPLES: usize = 8;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay exponent: `value ~ amplitude * exp(-rate * t)`.
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fits `log(value) = log(amplitude) - rate * t` on the last
/// `window_fraction` of the samples.
pub fn fit_decay_rate(series: &[(f64, f64)], window_fraction: f64) -> Result<DecayFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let take = ((series.len() as f64) * window_fraction).ceil() as usize;
    let tail = &series[series.len() - take.min(series.len())..];
    if tail.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in the fit window, need {MIN_FIT_SAMPLES}",
            tail.len()
        )));
    }
    if let Some((t, v)) = tail.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InsufficientData(format!(
            "non-positive value {v} at t = {t}"
        )));
    }

    let n = tail.len() as f64;
    let tm = tail.iter().map(|(t, _)| t).sum::<f64>() / n;
    let lm = tail.iter().map(|(_, v)| v.ln()).sum::<f64>() / n;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for (t, v) in tail {
        let dt = t - tm;
        let dl = v.ln() - lm;
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    if stt == 0.0 {
        return Err(Error::InsufficientData("fit window spans zero time".into()));
    }
    let slope = stl / stt;
    let intercept = lm - slope * tm;
    let sse: f64 = tail
        .iter()
        .map(|(t, v)| {
            let r = v.ln() - (intercept + slope * t);
            r * r
        })
        .sum();
    // a flat series has only rounding noise in log space
    let flat = sll <= n * (64.0 * f64::EPSILON * (1.0 + lm.abs())).powi(2);
    let r_squared = if !flat {
        (1.0 - sse / sll).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(DecayFit {
        rate: -slope,
        amplitude: intercept.exp(),
        r_squared,
        window: (tail[0].0, tail[tail.len() - 1].0),
        samples: tail.len(),
    })
}

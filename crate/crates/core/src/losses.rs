//! Training-style objectives for the synthesis pipeline: L1 reconstruction,
//! cycle consistency over re-encoded views, least-squares adversarial terms,
//! and their weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::Projection;
use crate::synthesis::TextureCode;

/// Weights of the combined objective. Defaults follow the usual convention of
/// emphasizing reconstruction over the cycle and adversarial terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_rec: f64,
    pub lambda_adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cyc: 1.0,
            lambda_rec: 10.0,
            lambda_adv: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_rec", self.lambda_rec),
            ("lambda_adv", self.lambda_adv),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Discriminator outputs for one scale of a multi-scale critic.
#[derive(Clone, Debug)]
pub struct ScaleScores {
    pub real: Vec<f64>,
    pub fake: Vec<f64>,
}

fn check_same_shape(a: &Projection, b: &Projection) -> Result<()> {
    if a.rows != b.rows || a.cols != b.cols || a.channels != b.channels {
        return Err(Error::ShapeMismatch(format!(
            "projections are {}x{}x{} vs {}x{}x{}",
            a.channels, a.rows, a.cols, b.channels, b.rows, b.cols
        )));
    }
    Ok(())
}

fn mean_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum::<f64>()
        / a.len() as f64
}

/// Mean absolute difference between a synthesized view and its reference.
pub fn reconstruction_loss(pred: &Projection, reference: &Projection) -> Result<f64> {
    check_same_shape(pred, reference)?;
    Ok(mean_abs_diff(&pred.data, &reference.data))
}

/// Cycle consistency: mean absolute difference of the re-encoded geometry
/// features and of the texture codes, averaged with equal weight.
pub fn cycle_loss(
    pred_geometry: &Projection,
    ref_geometry: &Projection,
    pred_texture: &TextureCode,
    ref_texture: &TextureCode,
) -> Result<f64> {
    check_same_shape(pred_geometry, ref_geometry)?;
    if pred_texture.len() != ref_texture.len() {
        return Err(Error::ShapeMismatch(format!(
            "texture codes have lengths {} vs {}",
            pred_texture.len(),
            ref_texture.len()
        )));
    }
    if pred_texture.is_empty() {
        return Err(Error::InvalidArgument("texture codes are empty".into()));
    }
    let geo = mean_abs_diff(&pred_geometry.data, &ref_geometry.data);
    let tex = pred_texture
        .0
        .iter()
        .zip(&ref_texture.0)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / pred_texture.len() as f64;
    Ok(0.5 * (geo + tex))
}

fn mean_sq(values: &[f64], target: f64) -> f64 {
    values.iter().map(|v| (v - target).powi(2)).sum::<f64>() / values.len() as f64
}

/// Least-squares generator objective: fake scores are pushed toward 1,
/// averaged over scales.
pub fn generator_adversarial_loss(scales: &[ScaleScores]) -> Result<f64> {
    if scales.is_empty() {
        return Err(Error::InvalidArgument("no discriminator scales".into()));
    }
    let mut total = 0.0;
    for (i, s) in scales.iter().enumerate() {
        if s.fake.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "scale {i} has no fake scores"
            )));
        }
        total += mean_sq(&s.fake, 1.0);
    }
    Ok(total / scales.len() as f64)
}

/// Least-squares discriminator objective: real scores toward 1, fake scores
/// toward 0, each half-weighted, averaged over scales.
pub fn discriminator_adversarial_loss(scales: &[ScaleScores]) -> Result<f64> {
    if scales.is_empty() {
        return Err(Error::InvalidArgument("no discriminator scales".into()));
    }
    let mut total = 0.0;
    for (i, s) in scales.iter().enumerate() {
        if s.real.is_empty() || s.fake.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "scale {i} is missing scores"
            )));
        }
        total += 0.5 * mean_sq(&s.real, 1.0) + 0.5 * mean_sq(&s.fake, 0.0);
    }
    Ok(total / scales.len() as f64)
}

/// Weighted combination of the three loss components.
pub fn total_loss(
    cycle: f64,
    reconstruction: f64,
    adversarial: f64,
    weights: &LossWeights,
) -> Result<f64> {
    weights.validate()?;
    for (name, v) in [
        ("cycle", cycle),
        ("reconstruction", reconstruction),
        ("adversarial", adversarial),
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} loss must be finite, got {v}"
            )));
        }
    }
    Ok(weights.lambda_cyc * cycle
        + weights.lambda_rec * reconstruction
        + weights.lambda_adv * adversarial)
}

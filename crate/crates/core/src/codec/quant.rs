//! Element-wise pieces of the deployed chain: normalization, centered
//! quantization, scale-and-round, and the discretized Gaussian likelihood.

use crate::pointcloud::Rgb;
use crate::tensor::{gaussian_cdf, round_half_away, Tensor};

use super::{CodecError, Result};

/// Probability floor applied to every likelihood.
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;
pub const SIGMA_MIN: f64 = 1e-3;
pub const SIGMA_MAX: f64 = 1e3;

/// `(N, 3)` tensor of `c / 255`.
pub fn normalize(colors: &[Rgb]) -> Result<Tensor> {
    let data = colors.iter().flat_map(|c| c.map(|v| v as f64 / 255.0)).collect();
    Ok(Tensor::new(vec![colors.len(), 3], data)?)
}

/// `round(y - mu) + mu`, ties away from zero.
#[inline]
pub fn quantize_centered_value(y: f64, mu: f64) -> f64 {
    round_half_away(y - mu) + mu
}

pub fn quantize_centered(y: &Tensor, mu: &Tensor) -> Result<Tensor> {
    if y.shape() != mu.shape() {
        return Err(CodecError::Shape(format!(
            "quantize_centered: {:?} vs {:?}",
            y.shape(),
            mu.shape()
        )));
    }
    let data = y
        .data()
        .iter()
        .zip(mu.data())
        .map(|(&a, &m)| quantize_centered_value(a, m))
        .collect();
    Ok(Tensor::new(y.shape().to_vec(), data)?)
}

/// `round(clip(x, 0, 1) * 255)` for one value.
#[inline]
pub fn scale_round_value(x: f64) -> Result<u8> {
    if !x.is_finite() {
        return Err(CodecError::NonFinite("scale_round input".into()));
    }
    Ok(round_half_away(x.clamp(0.0, 1.0) * 255.0) as u8)
}

/// Maps an `(N, 3)` reconstruction back to 8-bit colors.
pub fn scale_round(x: &Tensor) -> Result<Vec<Rgb>> {
    if x.cols() != 3 {
        return Err(CodecError::Shape(format!("scale_round expects (N, 3), got {:?}", x.shape())));
    }
    x.data()
        .chunks_exact(3)
        .map(|c| Ok([scale_round_value(c[0])?, scale_round_value(c[1])?, scale_round_value(c[2])?]))
        .collect()
}

/// Discretized Gaussian mass of the unit bin around `d = value - mu`,
/// floored at [`LIKELIHOOD_FLOOR`].
#[inline]
pub fn likelihood_value(d: f64, sigma: f64) -> f64 {
    let p = gaussian_cdf((d + 0.5) / sigma) - gaussian_cdf((d - 0.5) / sigma);
    p.max(LIKELIHOOD_FLOOR)
}

/// Per-element probabilities of `values` under `N(mu, sigma)` discretized to unit bins.
pub fn likelihood(values: &Tensor, mu: &Tensor, sigma: &Tensor) -> Result<Tensor> {
    if values.shape() != mu.shape() || mu.shape() != sigma.shape() {
        return Err(CodecError::Shape(format!(
            "likelihood: {:?}, {:?}, {:?}",
            values.shape(),
            mu.shape(),
            sigma.shape()
        )));
    }
    let data = values
        .data()
        .iter()
        .zip(mu.data().iter().zip(sigma.data()))
        .map(|(&v, (&m, &s))| likelihood_value(v - m, s))
        .collect();
    Ok(Tensor::new(values.shape().to_vec(), data)?)
}

use crate::pointcloud::{y_value, PointCloud};

use super::{MultigenError, Result};

/// Value written for an infinite (lossless) PSNR.
pub const PSNR_CAP: f64 = 99.99;

/// Luma PSNR (peak 255) between two clouds with identical geometry and order.
pub fn psnr_y(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.positions() != b.positions() {
        return Err(MultigenError::Geometry(format!(
            "clouds differ in geometry ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(MultigenError::InvalidArgument("empty cloud".into()));
    }
    let se: f64 = a
        .colors()
        .iter()
        .zip(b.colors())
        .map(|(&ca, &cb)| {
            let d = y_value(ca) - y_value(cb);
            d * d
        })
        .sum();
    let mse = se / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Drop convergence rate `ln(delta / max_drop)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dcr {
    Value(f64),
    /// `delta == 0`: the chain has stopped losing quality.
    Converged,
    /// Negative delta or non-positive `max_drop`; the raw delta is kept.
    Undefined { delta: f64 },
}

pub fn drop_convergence_rate(delta: f64, max_drop: f64) -> Dcr {
    if max_drop.is_nan() || max_drop <= 0.0 || delta < 0.0 || !delta.is_finite() {
        Dcr::Undefined { delta }
    } else if delta == 0.0 {
        Dcr::Converged
    } else {
        Dcr::Value((delta / max_drop).ln())
    }
}

impl Dcr {
    pub fn value(self) -> Option<f64> {
        match self {
            Dcr::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl std::fmt::Display for Dcr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dcr::Value(v) => write!(f, "{v}"),
            Dcr::Converged => f.write_str("converged"),
            Dcr::Undefined { .. } => f.write_str("undefined"),
        }
    }
}

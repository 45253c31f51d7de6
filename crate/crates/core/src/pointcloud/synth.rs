use std::f64::consts::TAU;

use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CloudError, PointCloud, Position, Result, Rgb};

fn surface_count(side: u32) -> usize {
    let s = side as usize;
    if s < 2 {
        s
    } else {
        s * s * s - (s - 2) * (s - 2) * (s - 2)
    }
}

fn shade(p: Position, side: u32, rng: &mut ChaCha8Rng) -> Rgb {
    let s = side as f64;
    let (u, v, w) = (p[0] as f64 / s, p[1] as f64 / s, p[2] as f64 / s);
    let in_patch = p[2] == 0 && (0.3..0.7).contains(&u) && (0.3..0.7).contains(&v);
    let base = if in_patch {
        if (p[0] / 2 + p[1] / 2).is_multiple_of(2) {
            [230.0, 225.0, 40.0]
        } else {
            [30.0, 45.0, 200.0]
        }
    } else {
        [
            128.0 + 90.0 * libm::sin(TAU * (0.8 * u + 0.3 * w)) + 30.0 * libm::cos(TAU * 1.3 * v),
            128.0 + 80.0 * libm::sin(TAU * (0.5 * v + 0.6 * u) + 1.0) + 20.0 * w,
            128.0 + 100.0 * libm::cos(TAU * (0.7 * w - 0.4 * u)),
        ]
    };
    base.map(|c| (c + rng.gen_range(-3.0..3.0)).round().clamp(0.0, 255.0) as u8)
}

/// Synthetic test content: points sampled from the surface of a voxelized
/// cube, colored with smooth gradients plus a fine checkerboard patch on the
/// `z = 0` face. Deterministic in `seed`.
pub fn toy_cloud(points: usize, seed: u64) -> Result<PointCloud> {
    if points == 0 {
        return Err(CloudError::EmptyCloud);
    }
    let mut side = 1;
    while surface_count(side) < points {
        side += 1;
    }
    let mut surface = Vec::with_capacity(surface_count(side));
    for x in 0..side {
        for y in 0..side {
            for z in 0..side {
                let on_face = [x, y, z].iter().any(|&c| c == 0 || c == side - 1);
                if on_face {
                    surface.push([x, y, z]);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, surface.len(), points).into_vec();
    picked.sort_unstable();
    let positions: Vec<Position> = picked.iter().map(|&i| surface[i]).collect();
    let colors = positions.iter().map(|&p| shade(p, side, &mut rng)).collect();
    PointCloud::new(positions, colors)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::pointcloud::y_value;

    #[test]
    fn exact_count_and_determinism() {
        let a = toy_cloud(1000, 3).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a, toy_cloud(1000, 3).unwrap());
        assert_ne!(a, toy_cloud(1000, 4).unwrap());
    }

    #[test]
    fn wide_luma_histogram() {
        let c = toy_cloud(50_000, 1).unwrap();
        let distinct: BTreeSet<i64> = c.colors().iter().map(|&rgb| y_value(rgb).round() as i64).collect();
        assert!(distinct.len() >= 128, "{} distinct luma values", distinct.len());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CloudError, PointCloud, Result};

fn largest_variance_axis(cloud: &PointCloud, indices: &[usize]) -> usize {
    let n = indices.len() as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for axis in 0..3 {
        let mean = indices.iter().map(|&i| cloud.positions()[i][axis] as f64).sum::<f64>() / n;
        let var = indices
            .iter()
            .map(|&i| {
                let d = cloud.positions()[i][axis] as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        if var > best.1 {
            best = (axis, var);
        }
    }
    best.0
}

/// Random KD-tree crop: while the block holds at least `k` points, split it
/// at the median of its largest-variance axis and keep one half chosen by a
/// fair coin. The returned block keeps the original relative point order.
pub fn kdtree_crop(cloud: &PointCloud, k: usize, seed: u64) -> Result<PointCloud> {
    if k < 2 {
        return Err(CloudError::InvalidArgument(format!("crop size must be >= 2, got {k}")));
    }
    if cloud.len() < k {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..cloud.len()).collect();
    while indices.len() >= k {
        let axis = largest_variance_axis(cloud, &indices);
        // Stable sort: ties keep their original order.
        indices.sort_by_key(|&i| cloud.positions()[i][axis]);
        // Lower half holds the lower median.
        let cut = indices.len().div_ceil(2);
        if rng.gen_bool(0.5) {
            indices.truncate(cut);
        } else {
            indices.drain(..cut);
        }
        indices.sort_unstable();
    }
    cloud.select(&indices)
}

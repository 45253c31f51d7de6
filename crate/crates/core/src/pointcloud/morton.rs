use super::{CloudError, PointCloud, Result};

/// Coordinates up to this many bits interleave into 63-bit keys.
pub const MAX_MORTON_BITS: u32 = 21;

/// Spreads the low 21 bits of `v` so bit `i` lands on bit `3i`.
#[inline]
fn spread3(v: u32) -> u64 {
    let mut x = (v as u64) & 0x1f_ffff;
    x = (x | (x << 32)) & 0x001f_0000_0000_ffff;
    x = (x | (x << 16)) & 0x001f_0000_ff00_00ff;
    x = (x | (x << 8)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

/// Z-order key with `x` in the least-significant slot of each 3-bit group.
#[inline]
pub fn morton_key(p: [u32; 3]) -> u64 {
    spread3(p[0]) | (spread3(p[1]) << 1) | (spread3(p[2]) << 2)
}

/// Per-point keys (in original point order) and the stable sort order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MortonPermutation {
    pub keys: Vec<u64>,
    pub order: Vec<usize>,
}

impl MortonPermutation {
    /// `inverse()[i]` is the serialized position of point `i`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.order.len()];
        for (rank, &i) in self.order.iter().enumerate() {
            inv[i] = rank;
        }
        inv
    }
}

pub fn morton_order(cloud: &PointCloud) -> Result<MortonPermutation> {
    if cloud.resolution_bits() > MAX_MORTON_BITS {
        return Err(CloudError::ResolutionOverflow {
            bits: cloud.resolution_bits(),
            max: MAX_MORTON_BITS,
        });
    }
    let keys: Vec<u64> = cloud.positions().iter().map(|&p| morton_key(p)).collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| keys[i]);
    Ok(MortonPermutation { keys, order })
}

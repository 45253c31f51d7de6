//! Idempotent reference codec: colors pass through unchanged, coded as raw
//! bytes under a uniform 256-symbol model.

use crate::pointcloud::{PointCloud, Position};

use super::bitstream::Bitstream;
use super::range_coder::{range_decode, range_encode, TOTAL_FREQ};
use super::{Codec, CodecError, Result};

/// Lossless by construction; every generation reproduces its input exactly.
#[derive(Clone, Debug)]
pub struct IdempotentControlCodec {
    cdf: Vec<u32>,
}

impl Default for IdempotentControlCodec {
    fn default() -> Self {
        IdempotentControlCodec {
            cdf: (0..=256u32).map(|i| i * (TOTAL_FREQ / 256)).collect(),
        }
    }
}

impl IdempotentControlCodec {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Codec for IdempotentControlCodec {
    fn name(&self) -> &str {
        "control"
    }

    fn compress(&self, cloud: &PointCloud) -> Result<Vec<u8>> {
        if cloud.is_empty() {
            return Err(CodecError::EmptyInput);
        }
        let symbols: Vec<usize> = cloud.colors().iter().flatten().map(|&c| c as usize).collect();
        let tables = vec![self.cdf.as_slice(); symbols.len()];
        let payload = range_encode(&symbols, &tables)?;
        let n = u32::try_from(cloud.len()).map_err(|_| CodecError::Shape("too many points".into()))?;
        Ok(Bitstream::new(n, 0, Vec::new(), payload).to_bytes())
    }

    fn decompress(&self, bytes: &[u8], positions: &[Position]) -> Result<PointCloud> {
        let bs = Bitstream::from_bytes(bytes)?;
        let n = bs.header.num_points as usize;
        if positions.len() != n {
            return Err(CodecError::CountMismatch {
                expected: n,
                found: positions.len(),
            });
        }
        let tables = vec![self.cdf.as_slice(); 3 * n];
        let symbols = range_decode(&bs.main_payload, &tables, 3 * n)?;
        let colors = symbols.chunks_exact(3).map(|c| [c[0] as u8, c[1] as u8, c[2] as u8]).collect();
        Ok(PointCloud::new(positions.to_vec(), colors)?)
    }
}

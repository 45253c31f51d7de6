//! Voxelized point clouds with 8-bit RGB attributes: PLY I/O, Morton
//! serialization, KD-tree cropping, and luma conversion.

mod color;
mod kdtree;
mod morton;
mod ply;
mod synth;

pub use color::{y_channel, y_value};
pub use kdtree::kdtree_crop;
pub use morton::{morton_key, morton_order, MortonPermutation, MAX_MORTON_BITS};
pub use ply::{parse_ply, write_ply, PlyFormat};
pub use synth::toy_cloud;

use thiserror::Error;

pub type Position = [u32; 3];
pub type Rgb = [u8; 3];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CloudError {
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("missing required property `{0}`")]
    MissingProperty(&'static str),
    #[error("unsupported {kind} `{name}`")]
    Unsupported { kind: &'static str, name: String },
    #[error("element count mismatch: header declares {declared} vertices, body holds {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("negative coordinate at vertex {0}")]
    NegativeCoordinate(usize),
    #[error("invalid value at vertex {vertex}: {reason}")]
    InvalidValue { vertex: usize, reason: String },
    #[error("empty cloud not writable")]
    EmptyCloud,
    #[error("positions and colors differ in length ({positions} vs {colors})")]
    LengthMismatch { positions: usize, colors: usize },
    #[error("coordinate {coord} does not fit in {bits} bits")]
    CoordinateOverflow { coord: u32, bits: u32 },
    #[error("resolution of {bits} bits exceeds the {max}-bit limit")]
    ResolutionOverflow { bits: u32, max: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CloudError>;

/// Integer voxel positions plus per-point RGB colors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointCloud {
    positions: Vec<Position>,
    colors: Vec<Rgb>,
    resolution_bits: u32,
}

/// Smallest `b >= 1` with every coordinate `< 2^b`.
fn bits_needed(positions: &[Position]) -> u32 {
    let max = positions.iter().flat_map(|p| p.iter().copied()).max().unwrap_or(0);
    (u32::BITS - max.leading_zeros()).max(1)
}

impl PointCloud {
    /// Builds a cloud whose resolution is the smallest bit depth that holds
    /// every coordinate.
    pub fn new(positions: Vec<Position>, colors: Vec<Rgb>) -> Result<Self> {
        let bits = bits_needed(&positions);
        Self::with_resolution(positions, colors, bits)
    }

    pub fn with_resolution(positions: Vec<Position>, colors: Vec<Rgb>, resolution_bits: u32) -> Result<Self> {
        if positions.len() != colors.len() {
            return Err(CloudError::LengthMismatch {
                positions: positions.len(),
                colors: colors.len(),
            });
        }
        if positions.is_empty() {
            return Err(CloudError::EmptyCloud);
        }
        if resolution_bits == 0 || resolution_bits > 31 {
            return Err(CloudError::ResolutionOverflow {
                bits: resolution_bits,
                max: 31,
            });
        }
        if let Some(&coord) = positions
            .iter()
            .flat_map(|p| p.iter())
            .find(|&&c| c >> resolution_bits != 0)
        {
            return Err(CloudError::CoordinateOverflow {
                coord,
                bits: resolution_bits,
            });
        }
        Ok(PointCloud {
            positions,
            colors,
            resolution_bits,
        })
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn resolution_bits(&self) -> u32 {
        self.resolution_bits
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same geometry, new attributes.
    pub fn with_colors(&self, colors: Vec<Rgb>) -> Result<Self> {
        Self::with_resolution(self.positions.clone(), colors, self.resolution_bits)
    }

    /// Sub-cloud of the given point indices, in the order given.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let positions = indices.iter().map(|&i| self.positions[i]).collect();
        let colors = indices.iter().map(|&i| self.colors[i]).collect();
        Self::with_resolution(positions, colors, self.resolution_bits)
    }
}

//! Multi-generation compression: repeated compress/decompress chains and
//! their quality metrics.

mod metrics;
mod report;
mod trace;

use thiserror::Error;

use crate::codec::{bpp_from_bytes, Codec, CodecError};
use crate::pointcloud::PointCloud;

pub use metrics::{drop_convergence_rate, psnr_y, Dcr, PSNR_CAP};
pub use report::{average_dcr, drop_curves, summary_deltas, summary_endpoints, SUMMARY_KS};
pub use trace::{parse_trace_csv, trace_rows, write_trace_csv, TraceRow, TRACE_HEADER};

#[derive(Debug, Error)]
pub enum MultigenError {
    #[error("generation {generation}: {source}")]
    Generation {
        generation: usize,
        #[source]
        source: CodecError,
    },
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trace csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, MultigenError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Generation {
    pub k: usize,
    pub bpp: f64,
    /// `+inf` when lossless.
    pub psnr_y: f64,
}

/// Per-generation bpp and PSNR-Y against the original cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationTrace {
    pub generations: Vec<Generation>,
}

impl GenerationTrace {
    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }

    /// PSNR-Y with lossless generations capped at [`PSNR_CAP`].
    pub fn capped_psnr(&self, k: usize) -> Option<f64> {
        self.generations.get(k.checked_sub(1)?).map(|g| g.psnr_y.min(PSNR_CAP))
    }

    /// `PSNR_{k-1} - PSNR_k`, defined for `k >= 2`.
    pub fn delta(&self, k: usize) -> Option<f64> {
        if k < 2 {
            return None;
        }
        Some(self.capped_psnr(k - 1)? - self.capped_psnr(k)?)
    }

    /// `PSNR_1 - PSNR_k`.
    pub fn drop(&self, k: usize) -> Option<f64> {
        Some(self.capped_psnr(1)? - self.capped_psnr(k)?)
    }

    pub fn max_drop(&self) -> f64 {
        (1..=self.len()).filter_map(|k| self.drop(k)).fold(0.0, f64::max)
    }
}

/// Runs `generations` compress/decompress cycles, each on the previous
/// output. `observe(k, &x_k)` sees every reconstruction.
pub fn run_multigen_with(
    cloud: &PointCloud,
    codec: &dyn Codec,
    generations: usize,
    mut observe: impl FnMut(usize, &PointCloud),
) -> Result<GenerationTrace> {
    if generations == 0 {
        return Err(MultigenError::InvalidArgument("at least one generation is required".into()));
    }
    let mut current = cloud.clone();
    let mut out = Vec::with_capacity(generations);
    for k in 1..=generations {
        let wrap = |source| MultigenError::Generation { generation: k, source };
        let bytes = codec.compress(&current).map_err(wrap)?;
        let next = codec.decompress(&bytes, current.positions()).map_err(wrap)?;
        if next.positions() != cloud.positions() {
            return Err(MultigenError::Geometry(format!("generation {k} altered positions")));
        }
        let bpp = bpp_from_bytes(bytes.len(), cloud.len()).map_err(wrap)?;
        out.push(Generation {
            k,
            bpp,
            psnr_y: psnr_y(cloud, &next)?,
        });
        observe(k, &next);
        current = next;
    }
    Ok(GenerationTrace { generations: out })
}

pub fn run_multigen(cloud: &PointCloud, codec: &dyn Codec, generations: usize) -> Result<GenerationTrace> {
    run_multigen_with(cloud, codec, generations, |_, _| {})
}

//! Deployed compress/decompress chain.
//!
//! Points are serialized in Morton order, normalized, and edge-padded to a
//! multiple of 8 rows. The hyper-latent is coded first under the factorized
//! prior; the main latent is coded as integer offsets from the predicted
//! mean under per-element discretized Gaussians.

use crate::pointcloud::{morton_order, MortonPermutation, PointCloud, Position, Rgb};
use crate::tensor::{round_half_away, Tape, Tensor};

use super::bitstream::Bitstream;
use super::entropy::GaussianTable;
use super::model::{BoundModel, CodecModel};
use super::quant::{likelihood_value, normalize, scale_round};
use super::range_coder::{RangeDecoder, RangeEncoder};
use super::{Codec, CodecError, Result};

/// Row multiple required by the analysis/hyper-analysis strides.
pub const ROW_MULTIPLE: usize = 8;

/// Repeats the last row until the row count is a multiple of `multiple`.
pub fn pad_rows(x: &Tensor, multiple: usize) -> Result<Tensor> {
    let (rows, cols) = (x.rows(), x.cols());
    let padded = rows.div_ceil(multiple) * multiple;
    let mut data = x.data().to_vec();
    let last = data[(rows - 1) * cols..].to_vec();
    for _ in rows..padded {
        data.extend_from_slice(&last);
    }
    Ok(Tensor::new(vec![padded, cols], data)?)
}

/// Morton permutation and the padded, normalized `(N_pad, 3)` input.
pub fn prepare_input(cloud: &PointCloud) -> Result<(MortonPermutation, Tensor)> {
    if cloud.is_empty() {
        return Err(CodecError::EmptyInput);
    }
    let perm = morton_order(cloud)?;
    let sorted: Vec<Rgb> = perm.order.iter().map(|&i| cloud.colors()[i]).collect();
    let x = pad_rows(&normalize(&sorted)?, ROW_MULTIPLE)?;
    Ok((perm, x))
}

/// Every intermediate of one deployed encode.
#[derive(Clone, Debug)]
pub struct DeployedForward {
    pub y: Tensor,
    pub z_hat: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
    pub y_hat: Tensor,
    /// Unclipped reconstruction, `(N_pad, 3)`.
    pub x_hat: Tensor,
}

/// `(mu, sigma)` from `z_hat` on a fresh tape.
fn entropy_params(bound: &BoundModel, tape: &mut Tape, z_hat: &Tensor) -> Result<(Tensor, Tensor)> {
    let z = tape.constant(z_hat.clone());
    let (mu, sigma) = bound.hyper_synthesize(tape, z)?;
    Ok((tape.value(mu).clone(), tape.value(sigma).clone()))
}

pub fn forward_deployed(model: &CodecModel, x: &Tensor) -> Result<DeployedForward> {
    let mut tape = Tape::new();
    let m = model.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let y = m.analyze(&mut tape, xv)?;
    let z = m.hyper_analyze(&mut tape, y)?;
    let z_hat = tape.ste_round(z);
    let (mu, sigma) = m.hyper_synthesize(&mut tape, z_hat)?;
    let centered = tape.sub(y, mu)?;
    let d = tape.ste_round(centered);
    let y_hat = tape.add(d, mu)?;
    let x_hat = m.synthesize(&mut tape, y_hat)?;
    let out = DeployedForward {
        y: tape.value(y).clone(),
        z_hat: tape.value(z_hat).clone(),
        mu: tape.value(mu).clone(),
        sigma: tape.value(sigma).clone(),
        y_hat: tape.value(y_hat).clone(),
        x_hat: tape.value(x_hat).clone(),
    };
    if !out.x_hat.all_finite() || !out.y.all_finite() {
        return Err(CodecError::NonFinite("deployed forward pass".into()));
    }
    Ok(out)
}

/// Per-channel prior `(mean, scale)` and the integer anchor `round(mean)`.
fn prior_tables(model: &CodecModel) -> Result<Vec<(f64, GaussianTable)>> {
    let mut tape = Tape::new();
    let m = model.bind(&mut tape, false);
    let (mean, scale) = m.prior(&mut tape, 1)?;
    Ok(tape
        .value(mean)
        .data()
        .iter()
        .zip(tape.value(scale).data())
        .map(|(&mu, &s)| {
            let anchor = round_half_away(mu);
            (anchor, GaussianTable::new(s, anchor - mu))
        })
        .collect())
}

fn to_int(v: f64, what: &str) -> Result<i64> {
    if !v.is_finite() || v.abs() > 1e15 {
        return Err(CodecError::NonFinite(what.into()));
    }
    Ok(v as i64)
}

pub fn compress(model: &CodecModel, cloud: &PointCloud) -> Result<Bitstream> {
    let (_, x) = prepare_input(cloud)?;
    let f = forward_deployed(model, &x)?;

    let priors = prior_tables(model)?;
    let hyper = f.z_hat.cols();
    let mut enc = RangeEncoder::new();
    for (i, &z) in f.z_hat.data().iter().enumerate() {
        let (anchor, table) = &priors[i % hyper];
        table.encode(&mut enc, to_int(z - anchor, "hyper-latent")?);
    }
    let hyper_payload = enc.finish();

    let mut enc = RangeEncoder::new();
    for ((&yh, &mu), &s) in f.y_hat.data().iter().zip(f.mu.data()).zip(f.sigma.data()) {
        let d = to_int(round_half_away(yh - mu), "latent")?;
        GaussianTable::new(s, 0.0).encode(&mut enc, d);
    }
    let main_payload = enc.finish();

    let n = u32::try_from(cloud.len()).map_err(|_| CodecError::Shape("too many points".into()))?;
    Ok(Bitstream::new(n, model.lambda_id(), hyper_payload, main_payload))
}

/// Ideal code lengths `(latent_bits, hyper_bits)` of the quantized latents.
pub fn estimate_rate(model: &CodecModel, cloud: &PointCloud) -> Result<(f64, f64)> {
    let (_, x) = prepare_input(cloud)?;
    let f = forward_deployed(model, &x)?;
    let mut tape = Tape::new();
    let m = model.bind(&mut tape, false);
    let (mean, scale) = m.prior(&mut tape, 1)?;
    let (mean, scale) = (tape.value(mean).data().to_vec(), tape.value(scale).data().to_vec());
    let hyper = f.z_hat.cols();
    let z_bits: f64 = f
        .z_hat
        .data()
        .iter()
        .enumerate()
        .map(|(i, &z)| -likelihood_value(z - mean[i % hyper], scale[i % hyper]).log2())
        .sum();
    let y_bits: f64 = f
        .y_hat
        .data()
        .iter()
        .zip(f.mu.data().iter().zip(f.sigma.data()))
        .map(|(&yh, (&mu, &s))| -likelihood_value(yh - mu, s).log2())
        .sum();
    Ok((y_bits, z_bits))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    /// Any truncation, trailing data or malformed escape is an error.
    Strict,
    /// Reads past the end as zeros and tolerates malformed symbols, so a
    /// mismatched model still yields a deterministic (if meaningless) cloud.
    Lenient,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    pub cloud: PointCloud,
    pub warnings: Vec<String>,
}

fn decode_value(table: &GaussianTable, dec: &mut RangeDecoder<'_>, mode: DecodeMode) -> Result<i64> {
    match (table.decode(dec), mode) {
        (Ok(v), _) => Ok(v),
        (Err(_), DecodeMode::Lenient) => Ok(0),
        (Err(e), DecodeMode::Strict) => Err(e),
    }
}

fn end_of_payload(dec: &RangeDecoder<'_>, mode: DecodeMode, what: &str, warnings: &mut Vec<String>) -> Result<()> {
    match (dec.finish(), mode) {
        (Ok(()), _) => Ok(()),
        (Err(e), DecodeMode::Lenient) => {
            warnings.push(format!("{what} payload: {e}"));
            Ok(())
        }
        (Err(e), DecodeMode::Strict) => Err(e),
    }
}

/// Strict decode unless the stream's lambda id differs from the model's, in
/// which case decoding falls back to lenient mode with a warning.
pub fn decompress(model: &CodecModel, bytes: &[u8], positions: &[Position]) -> Result<Decoded> {
    let bs = Bitstream::from_bytes(bytes)?;
    let mut warnings = Vec::new();
    let mode = if bs.header.lambda_id != model.lambda_id() {
        warnings.push(format!(
            "bitstream lambda id {} does not match model lambda id {}; output is not a valid reconstruction",
            bs.header.lambda_id,
            model.lambda_id()
        ));
        DecodeMode::Lenient
    } else {
        DecodeMode::Strict
    };
    let mut out = decompress_with(model, &bs, positions, mode)?;
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}

pub fn decompress_with(model: &CodecModel, bs: &Bitstream, positions: &[Position], mode: DecodeMode) -> Result<Decoded> {
    let n = bs.header.num_points as usize;
    if positions.len() != n {
        return Err(CodecError::CountMismatch {
            expected: n,
            found: positions.len(),
        });
    }
    let geometry = PointCloud::new(positions.to_vec(), vec![[0; 3]; n])?;
    let perm = morton_order(&geometry)?;
    let n_pad = n.div_ceil(ROW_MULTIPLE) * ROW_MULTIPLE;
    let topo = model.topology();
    let (rows_y, rows_z) = (n_pad / 4, n_pad / 8);
    let mut warnings = Vec::new();

    let priors = prior_tables(model)?;
    let mut dec = RangeDecoder::new(&bs.hyper_payload);
    let mut z = Vec::with_capacity(rows_z * topo.hyper);
    for i in 0..rows_z * topo.hyper {
        let (anchor, table) = &priors[i % topo.hyper];
        z.push(anchor + decode_value(table, &mut dec, mode)? as f64);
    }
    end_of_payload(&dec, mode, "hyper", &mut warnings)?;
    let z_hat = Tensor::new(vec![rows_z, topo.hyper], z)?;

    let mut tape = Tape::new();
    let m = model.bind(&mut tape, false);
    let (mu, sigma) = entropy_params(&m, &mut tape, &z_hat)?;
    let mut dec = RangeDecoder::new(&bs.main_payload);
    let mut d = Vec::with_capacity(mu.len());
    for &s in sigma.data() {
        d.push(decode_value(&GaussianTable::new(s, 0.0), &mut dec, mode)? as f64);
    }
    end_of_payload(&dec, mode, "main", &mut warnings)?;
    if mu.rows() != rows_y {
        return Err(CodecError::Shape(format!("hyper-synthesis produced {} rows, expected {rows_y}", mu.rows())));
    }

    let dv = tape.constant(Tensor::new(mu.shape().to_vec(), d)?);
    let muv = tape.constant(mu);
    let y_hat = tape.add(dv, muv)?;
    let x_hat = m.synthesize(&mut tape, y_hat)?;
    let x_hat = tape.value(x_hat);
    let rows = Tensor::new(vec![n, 3], x_hat.data()[..3 * n].to_vec())?;
    let sorted = scale_round(&rows)?;
    let mut colors = vec![[0u8; 3]; n];
    for (rank, &i) in perm.order.iter().enumerate() {
        colors[i] = sorted[rank];
    }
    Ok(Decoded {
        cloud: geometry.with_colors(colors)?,
        warnings,
    })
}

/// A trained model wrapped as a [`Codec`].
#[derive(Clone, Debug)]
pub struct LearnedCodec {
    name: String,
    model: CodecModel,
}

impl LearnedCodec {
    pub fn new(name: impl Into<String>, model: CodecModel) -> Self {
        LearnedCodec {
            name: name.into(),
            model,
        }
    }

    pub fn model(&self) -> &CodecModel {
        &self.model
    }
}

impl Codec for LearnedCodec {
    fn name(&self) -> &str {
        &self.name
    }

    fn compress(&self, cloud: &PointCloud) -> Result<Vec<u8>> {
        Ok(compress(&self.model, cloud)?.to_bytes())
    }

    fn decompress(&self, bytes: &[u8], positions: &[Position]) -> Result<PointCloud> {
        Ok(decompress(&self.model, bytes, positions)?.cloud)
    }
}

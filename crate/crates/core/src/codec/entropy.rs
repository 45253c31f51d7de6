//! Discretized Gaussian tables for the range coder, with an escape symbol for
//! values beyond the table's support.

use crate::tensor::gaussian_cdf;

use super::range_coder::{find_symbol, RangeDecoder, RangeEncoder, TOTAL_FREQ};
use super::{CodecError, Result};

/// Table half-width in standard deviations.
const TAIL_SIGMAS: f64 = 8.0;
const MIN_HALF_WIDTH: i64 = 2;
const MAX_HALF_WIDTH: i64 = 256;
/// Longest Exp-Golomb prefix accepted when decoding an escape.
const MAX_ESCAPE_BITS: u32 = 40;

/// Quantized pmf over offsets `-T..=T` plus one escape symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTable {
    half_width: i64,
    cdf: Vec<u32>,
}

impl GaussianTable {
    /// Integer offsets `j` whose unit bin `[j + shift - 1/2, j + shift + 1/2]`
    /// is measured under `N(0, sigma)`.
    pub fn new(sigma: f64, shift: f64) -> Self {
        let t = ((TAIL_SIGMAS * sigma).ceil() as i64).clamp(MIN_HALF_WIDTH, MAX_HALF_WIDTH);
        let n = (2 * t + 2) as usize;
        let mut probs = Vec::with_capacity(n);
        let mut prev = gaussian_cdf((-t as f64 + shift - 0.5) / sigma);
        let lower_tail = prev;
        for j in -t..=t {
            let next = gaussian_cdf((j as f64 + shift + 0.5) / sigma);
            probs.push((next - prev).max(0.0));
            prev = next;
        }
        probs.push(lower_tail + (1.0 - prev));

        let budget = (TOTAL_FREQ as usize - n) as f64;
        let mut freqs: Vec<u32> = probs.iter().map(|&p| 1 + (p * budget).floor() as u32).collect();
        let used: u32 = freqs.iter().sum();
        let (peak, _) = freqs.iter().enumerate().fold((0, 0), |best, (i, &f)| if f > best.1 { (i, f) } else { best });
        freqs[peak] += TOTAL_FREQ - used;

        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0);
        let mut acc = 0;
        for f in freqs {
            acc += f;
            cdf.push(acc);
        }
        GaussianTable { half_width: t, cdf }
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    fn escape(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    fn interval(&self, sym: usize) -> (u32, u32) {
        (self.cdf[sym], self.cdf[sym + 1] - self.cdf[sym])
    }

    /// Ideal code length of `v` under the quantized table, escape bits included.
    pub fn cost_bits(&self, v: i64) -> f64 {
        let total = TOTAL_FREQ as f64;
        if v.abs() <= self.half_width {
            let (_, f) = self.interval((v + self.half_width) as usize);
            -(f as f64 / total).log2()
        } else {
            let (_, f) = self.interval(self.escape());
            let m = (v.unsigned_abs() - self.half_width as u64 - 1) + 1;
            let k = 63 - m.leading_zeros() as u64;
            -(f as f64 / total).log2() + 1.0 + (2 * k + 1) as f64
        }
    }

    pub fn encode(&self, enc: &mut RangeEncoder, v: i64) {
        if v.abs() <= self.half_width {
            let (start, f) = self.interval((v + self.half_width) as usize);
            enc.encode(start, f);
            return;
        }
        let (start, f) = self.interval(self.escape());
        enc.encode(start, f);
        enc.encode_bit(v < 0);
        // Exp-Golomb: k ones, a zero, then the low k bits of m.
        let m = v.unsigned_abs() - self.half_width as u64;
        let k = 63 - m.leading_zeros();
        for _ in 0..k {
            enc.encode_bit(true);
        }
        enc.encode_bit(false);
        for b in (0..k).rev() {
            enc.encode_bit((m >> b) & 1 == 1);
        }
    }

    pub fn decode(&self, dec: &mut RangeDecoder<'_>) -> Result<i64> {
        let sym = find_symbol(&self.cdf, dec.peek());
        let (start, f) = self.interval(sym);
        dec.consume(start, f);
        if sym != self.escape() {
            return Ok(sym as i64 - self.half_width);
        }
        let negative = dec.decode_bit();
        let mut k = 0;
        while dec.decode_bit() {
            k += 1;
            if k > MAX_ESCAPE_BITS {
                return Err(CodecError::Corrupt("escape code too long".into()));
            }
        }
        let mut m: u64 = 1;
        for _ in 0..k {
            m = (m << 1) | dec.decode_bit() as u64;
        }
        let mag = (m + self.half_width as u64) as i64;
        Ok(if negative { -mag } else { mag })
    }
}

//! Carry-propagating range coder (LZMA-style byte output) over 16-bit
//! cumulative frequency tables.
//!
//! The encoder's first output byte is always zero and is not emitted; the
//! flush writes exactly the bytes the decoder will read, so a well-formed
//! stream is consumed to the last byte.

use super::{CodecError, Result};

pub const PRECISION_BITS: u32 = 16;
pub const TOTAL_FREQ: u32 = 1 << PRECISION_BITS;
const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            first: true,
            out: Vec::new(),
        }
    }

    fn emit(&mut self, byte: u8) {
        if self.first {
            self.first = false;
        } else {
            self.out.push(byte);
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.emit(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Codes the interval `[start, start + freq)` out of [`TOTAL_FREQ`].
    pub fn encode(&mut self, start: u32, freq: u32) {
        debug_assert!(freq > 0 && start + freq <= TOTAL_FREQ);
        let r = self.range >> PRECISION_BITS;
        self.low += start as u64 * r as u64;
        self.range = freq * r;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// One equiprobable bit.
    pub fn encode_bit(&mut self, bit: bool) {
        let half = TOTAL_FREQ / 2;
        self.encode(if bit { half } else { 0 }, half);
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    /// Bytes requested past the end; zero-filled.
    overrun: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            bytes,
            pos: 0,
            code: 0,
            range: u32::MAX,
            overrun: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        match self.bytes.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                b
            }
            None => {
                self.overrun += 1;
                0
            }
        }
    }

    /// Cumulative frequency the next symbol falls in; follow with [`Self::consume`].
    pub fn peek(&self) -> u32 {
        let r = self.range >> PRECISION_BITS;
        (self.code / r).min(TOTAL_FREQ - 1)
    }

    pub fn consume(&mut self, start: u32, freq: u32) {
        let r = self.range >> PRECISION_BITS;
        self.code = self.code.wrapping_sub(start * r);
        self.range = freq * r;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
    }

    pub fn decode_bit(&mut self) -> bool {
        let half = TOTAL_FREQ / 2;
        let bit = self.peek() >= half;
        self.consume(if bit { half } else { 0 }, half);
        bit
    }

    /// True if the decoder had to read past the end of its input.
    pub fn overran(&self) -> bool {
        self.overrun > 0
    }

    /// Strict end-of-stream check: every byte consumed, none invented.
    pub fn finish(&self) -> Result<()> {
        if self.overrun > 0 {
            return Err(CodecError::Truncated);
        }
        if self.pos != self.bytes.len() {
            return Err(CodecError::Corrupt(format!(
                "{} trailing bytes after the last symbol",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Checks a cumulative table: starts at 0, ends at [`TOTAL_FREQ`], strictly increasing.
pub fn validate_cdf(cdf: &[u32]) -> Result<()> {
    let ok = cdf.len() >= 2
        && cdf[0] == 0
        && *cdf.last().unwrap() == TOTAL_FREQ
        && cdf.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(CodecError::InvalidCdf)
    }
}

/// Finds `s` with `cdf[s] <= target < cdf[s + 1]`.
#[inline]
pub fn find_symbol(cdf: &[u32], target: u32) -> usize {
    cdf.partition_point(|&c| c <= target) - 1
}

/// Encodes `symbols[i]` with table `cdfs[i]` (symbol `s` owns `[cdf[s], cdf[s+1])`).
pub fn range_encode(symbols: &[usize], cdfs: &[&[u32]]) -> Result<Vec<u8>> {
    if symbols.len() != cdfs.len() {
        return Err(CodecError::Shape(format!("{} symbols, {} tables", symbols.len(), cdfs.len())));
    }
    if symbols.is_empty() {
        return Ok(Vec::new());
    }
    let mut enc = RangeEncoder::new();
    for (i, (&s, cdf)) in symbols.iter().zip(cdfs).enumerate() {
        validate_cdf(cdf)?;
        if s + 1 >= cdf.len() {
            return Err(CodecError::SymbolOutOfRange {
                index: i,
                symbol: s as i64,
            });
        }
        enc.encode(cdf[s], cdf[s + 1] - cdf[s]);
    }
    Ok(enc.finish())
}

pub fn range_decode(bytes: &[u8], cdfs: &[&[u32]], count: usize) -> Result<Vec<usize>> {
    if cdfs.len() != count {
        return Err(CodecError::Shape(format!("{count} symbols requested, {} tables", cdfs.len())));
    }
    if count == 0 {
        return if bytes.is_empty() {
            Ok(Vec::new())
        } else {
            Err(CodecError::Corrupt("payload present for an empty symbol list".into()))
        };
    }
    let mut dec = RangeDecoder::new(bytes);
    let mut out = Vec::with_capacity(count);
    for cdf in cdfs {
        validate_cdf(cdf)?;
        let s = find_symbol(cdf, dec.peek());
        dec.consume(cdf[s], cdf[s + 1] - cdf[s]);
        if dec.overran() {
            return Err(CodecError::Truncated);
        }
        out.push(s);
    }
    dec.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn uniform_cdf(n: u32) -> Vec<u32> {
        (0..=n).map(|i| i * TOTAL_FREQ / n).collect()
    }

    #[test]
    fn empty_roundtrip() {
        let bytes = range_encode(&[], &[]).unwrap();
        assert!(bytes.is_empty());
        assert!(range_decode(&bytes, &[], 0).unwrap().is_empty());
    }

    #[test]
    fn uniform_bytes_cost_one_byte_each() {
        let cdf = uniform_cdf(256);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let symbols: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..256)).collect();
        let tables = vec![cdf.as_slice(); symbols.len()];
        let bytes = range_encode(&symbols, &tables).unwrap();
        // 8000 bits of information plus at most 8 bytes of flush/rounding overhead.
        assert!(bytes.len() as f64 <= 1000.0 * 1.005 + 8.0, "{}", bytes.len());
        assert_eq!(range_decode(&bytes, &tables, symbols.len()).unwrap(), symbols);
    }

    #[test]
    fn skewed_tables_and_carries() {
        // Heavily skewed tables push `low` toward carries.
        let cdf = vec![0, 1, 2, TOTAL_FREQ - 1, TOTAL_FREQ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let symbols: Vec<usize> = (0..500)
                .map(|_| if rng.gen_bool(0.97) { 2 } else { rng.gen_range(0..4) })
                .collect();
            let tables = vec![cdf.as_slice(); symbols.len()];
            let bytes = range_encode(&symbols, &tables).unwrap();
            assert_eq!(range_decode(&bytes, &tables, symbols.len()).unwrap(), symbols);
        }
    }

    #[test]
    fn truncation_detected() {
        let cdf = uniform_cdf(7);
        let symbols: Vec<usize> = (0..300).map(|i| i % 7).collect();
        let tables = vec![cdf.as_slice(); symbols.len()];
        let bytes = range_encode(&symbols, &tables).unwrap();
        for cut in 1..=4 {
            let res = range_decode(&bytes[..bytes.len() - cut], &tables, symbols.len());
            assert!(matches!(res, Err(CodecError::Truncated)), "cut {cut}: {res:?}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(range_decode(&longer, &tables, symbols.len()).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let cdf = uniform_cdf(4);
        assert!(matches!(
            range_encode(&[4], &[cdf.as_slice()]),
            Err(CodecError::SymbolOutOfRange { index: 0, symbol: 4 })
        ));
        let flat = [0, 10, 10, TOTAL_FREQ];
        assert!(matches!(range_encode(&[0], &[&flat[..]]), Err(CodecError::InvalidCdf)));
    }

    #[test]
    fn find_symbol_boundaries() {
        let cdf = [0, 5, 9, TOTAL_FREQ];
        assert_eq!(find_symbol(&cdf, 0), 0);
        assert_eq!(find_symbol(&cdf, 4), 0);
        assert_eq!(find_symbol(&cdf, 5), 1);
        assert_eq!(find_symbol(&cdf, TOTAL_FREQ - 1), 2);
    }
}

//! Container format.
//!
//! ```text
//! offset  size  field
//!  0      4     magic "MGPC"
//!  4      1     version (0x01)
//!  5      4     num_points (u32 LE)
//!  9      4     original length before padding (u32 LE)
//! 13      1     lambda id
//! 14      4     hyper payload length (u32 LE)
//! 18      ..    hyper payload, then main payload to end of stream
//! ```

use super::{CodecError, Result};

pub const MAGIC: &[u8; 4] = b"MGPC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitstreamHeader {
    pub version: u8,
    pub num_points: u32,
    pub original_length: u32,
    pub lambda_id: u8,
    pub hyper_payload_len: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: BitstreamHeader,
    pub hyper_payload: Vec<u8>,
    pub main_payload: Vec<u8>,
}

impl Bitstream {
    pub fn new(num_points: u32, lambda_id: u8, hyper_payload: Vec<u8>, main_payload: Vec<u8>) -> Self {
        Bitstream {
            header: BitstreamHeader {
                version: VERSION,
                num_points,
                original_length: num_points,
                lambda_id,
                hyper_payload_len: hyper_payload.len() as u32,
            },
            hyper_payload,
            main_payload,
        }
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.hyper_payload.len() + self.main_payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        out.push(h.version);
        out.extend_from_slice(&h.num_points.to_le_bytes());
        out.extend_from_slice(&h.original_length.to_le_bytes());
        out.push(h.lambda_id);
        out.extend_from_slice(&(self.hyper_payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.hyper_payload);
        out.extend_from_slice(&self.main_payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(CodecError::Corrupt("bad magic".into()));
        }
        let version = bytes[4];
        if version != VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let header = BitstreamHeader {
            version,
            num_points: u32_at(5),
            original_length: u32_at(9),
            lambda_id: bytes[13],
            hyper_payload_len: u32_at(14),
        };
        if header.num_points == 0 || header.original_length != header.num_points {
            return Err(CodecError::Corrupt(format!(
                "inconsistent lengths: {} points, original length {}",
                header.num_points, header.original_length
            )));
        }
        let hyper_end = HEADER_LEN + header.hyper_payload_len as usize;
        if bytes.len() < hyper_end {
            return Err(CodecError::Truncated);
        }
        Ok(Bitstream {
            header,
            hyper_payload: bytes[HEADER_LEN..hyper_end].to_vec(),
            main_payload: bytes[hyper_end..].to_vec(),
        })
    }
}

/// Bits per point of the whole stream, header included.
pub fn bpp(bitstream: &Bitstream, num_points: usize) -> Result<f64> {
    bpp_from_bytes(bitstream.byte_len(), num_points)
}

pub fn bpp_from_bytes(total_bytes: usize, num_points: usize) -> Result<f64> {
    if num_points == 0 {
        return Err(CodecError::EmptyInput);
    }
    Ok(8.0 * total_bytes as f64 / num_points as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_roundtrip() {
        let bs = Bitstream::new(100, 3, vec![1, 2, 3], vec![9; 10]);
        let bytes = bs.to_bytes();
        assert_eq!(&bytes[..5], b"MGPC\x01");
        assert_eq!(bytes.len(), HEADER_LEN + 13);
        assert_eq!(&bytes[14..18], &3u32.to_le_bytes());
        assert_eq!(Bitstream::from_bytes(&bytes).unwrap(), bs);
    }

    #[test]
    fn rejects_damage() {
        let bytes = Bitstream::new(5, 0, vec![7; 20], vec![]).to_bytes();
        assert!(matches!(Bitstream::from_bytes(&bytes[..30]), Err(CodecError::Truncated)));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(Bitstream::from_bytes(&v2), Err(CodecError::UnsupportedVersion(2))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Bitstream::from_bytes(&bad), Err(CodecError::Corrupt(_))));
    }

    #[test]
    fn bpp_arithmetic() {
        assert_eq!(bpp_from_bytes(1000, 800_000).unwrap(), 0.01);
        assert_eq!(bpp_from_bytes(16, 128).unwrap(), 1.0);
        assert!(bpp_from_bytes(16, 0).is_err());
    }
}

//! Little-endian framing of [`TransferBatch`].
//!
//! ```text
//! u32 from_rank | u32 to_rank | u64 sequence_id | u32 region_count | u16 dim
//! region_count x (dim x (f64 lo, f64 hi))
//! f64 attached_error_bound | f64 attached_integral_bound
//! ```

use super::TransferBatch;
use crate::error::{QuadError, Result};

const HEADER: usize = 4 + 4 + 8 + 4 + 2;

pub fn encoded_len(regions: usize, dim: usize) -> usize {
    HEADER + regions * dim * 16 + 16
}

pub fn encode(batch: &TransferBatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(batch.len(), batch.dim()));
    out.extend_from_slice(&(batch.from_rank as u32).to_le_bytes());
    out.extend_from_slice(&(batch.to_rank as u32).to_le_bytes());
    out.extend_from_slice(&batch.sequence_id.to_le_bytes());
    out.extend_from_slice(&(batch.len() as u32).to_le_bytes());
    out.extend_from_slice(&(batch.dim() as u16).to_le_bytes());
    for v in batch.bounds() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&batch.attached_error_bound.to_le_bytes());
    out.extend_from_slice(&batch.attached_integral_bound.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| QuadError::Wire(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().unwrap())
    }

    fn u16(&mut self) -> Result<u16> {
        self.take().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take().map(f64::from_le_bytes)
    }
}

pub fn decode(buf: &[u8]) -> Result<TransferBatch> {
    let mut r = Reader { buf, pos: 0 };
    let from = r.u32()? as usize;
    let to = r.u32()? as usize;
    let seq = r.u64()?;
    let count = r.u32()? as usize;
    let dim = r.u16()? as usize;
    if dim == 0 {
        return Err(QuadError::Wire("dimension 0".into()));
    }
    let expected = encoded_len(count, dim);
    if buf.len() != expected {
        return Err(QuadError::Wire(format!(
            "{count} regions in {dim} dimensions need {expected} bytes, got {}",
            buf.len()
        )));
    }
    let mut bounds = Vec::with_capacity(count * dim * 2);
    for _ in 0..count * dim * 2 {
        bounds.push(r.f64()?);
    }
    for (k, pair) in bounds.chunks_exact(2).enumerate() {
        if !(pair[0] < pair[1]) {
            return Err(QuadError::Wire(format!(
                "region {} axis {}: lo {} >= hi {}",
                k / dim,
                k % dim,
                pair[0],
                pair[1]
            )));
        }
    }
    let error_bound = r.f64()?;
    let integral_bound = r.f64()?;
    Ok(TransferBatch {
        from_rank: from,
        to_rank: to,
        sequence_id: seq,
        dim,
        bounds,
        attached_error_bound: error_bound,
        attached_integral_bound: integral_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TransferBatch {
        TransferBatch {
            from_rank: 3,
            to_rank: 1,
            sequence_id: 0x0102_0304_0506_0708,
            dim: 2,
            bounds: vec![0.0, 0.5, 0.25, 1.0, 0.5, 1.0, 0.0, 0.125],
            attached_error_bound: 1e-3,
            attached_integral_bound: 2.5,
        }
    }

    #[test]
    fn round_trip() {
        let b = sample();
        let bytes = encode(&b);
        assert_eq!(bytes.len(), encoded_len(2, 2));
        assert_eq!(decode(&bytes).unwrap(), b);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[0..4], &[3, 0, 0, 0]);
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&bytes[16..20], &[2, 0, 0, 0]);
        assert_eq!(&bytes[20..22], &[2, 0]);
        // first bound: lo of axis 0 of region 0, then its hi
        assert_eq!(&bytes[22..30], &0.0f64.to_le_bytes());
        assert_eq!(&bytes[30..38], &0.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_malformed_frames() {
        let bytes = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(&bytes[..10]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut inverted = bytes.clone();
        inverted[22..30].copy_from_slice(&0.75f64.to_le_bytes());
        assert!(matches!(decode(&inverted), Err(QuadError::Wire(_))));
    }
}

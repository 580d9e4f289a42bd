//! Zero value compression: a sparsity bitmap plus the nonzero values packed in
//! row-major scan order.
//!
//! Bit `i` of the bitmap lives in byte `i / 8` at position `i % 8` (LSB first).
//! Padding bits past the last element are always zero. Both `0.0` and `-0.0`
//! count as zero, so a compressed `-0.0` decodes as `+0.0`.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XambaError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueWidth {
    W16,
    W32,
}

impl ValueWidth {
    pub fn bytes(self) -> usize {
        match self {
            ValueWidth::W16 => 2,
            ValueWidth::W32 => 4,
        }
    }

    pub fn bits(self) -> u8 {
        (self.bytes() * 8) as u8
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        match bits {
            16 => Ok(ValueWidth::W16),
            32 => Ok(ValueWidth::W32),
            other => Err(XambaError::Format(format!("unsupported ZVC value width {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZvcTensor {
    pub shape: Vec<usize>,
    pub bitmap: Vec<u8>,
    /// Nonzero values; already rounded to half precision in 16-bit mode.
    pub packed: Vec<f32>,
    pub value_width: ValueWidth,
}

impl ZvcTensor {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn popcount(&self) -> usize {
        self.bitmap.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Bitmap bytes plus packed payload bytes.
    pub fn compressed_bytes(&self) -> usize {
        compressed_size(self.elements(), self.packed.len(), self.value_width)
    }

    pub fn dense_bytes(&self) -> usize {
        self.elements() * self.value_width.bytes()
    }

    fn check(&self) -> Result<()> {
        let n = self.elements();
        if self.bitmap.len() != n.div_ceil(8) {
            return Err(XambaError::Corruption(format!(
                "bitmap has {} bytes for {n} elements",
                self.bitmap.len()
            )));
        }
        if !n.is_multiple_of(8) {
            let tail = self.bitmap[self.bitmap.len() - 1] >> (n % 8);
            if tail != 0 {
                return Err(XambaError::Corruption("nonzero bitmap padding bits".into()));
            }
        }
        let pc = self.popcount();
        if pc != self.packed.len() {
            return Err(XambaError::Corruption(format!(
                "bitmap marks {pc} nonzeros but {} values are packed",
                self.packed.len()
            )));
        }
        Ok(())
    }
}

pub fn compressed_size(elements: usize, popcount: usize, width: ValueWidth) -> usize {
    elements.div_ceil(8) + popcount * width.bytes()
}

pub fn compress(x: &Tensor, value_width: ValueWidth) -> ZvcTensor {
    let n = x.len();
    let mut bitmap = vec![0u8; n.div_ceil(8)];
    let mut packed = Vec::new();
    for (i, &v) in x.data().iter().enumerate() {
        if v != 0.0 {
            bitmap[i / 8] |= 1 << (i % 8);
            packed.push(match value_width {
                ValueWidth::W32 => v,
                ValueWidth::W16 => f16::from_f32(v).to_f32(),
            });
        }
    }
    ZvcTensor {
        shape: x.shape().to_vec(),
        bitmap,
        packed,
        value_width,
    }
}

pub fn decompress(z: &ZvcTensor) -> Result<Tensor> {
    z.check()?;
    let n = z.elements();
    let mut data = vec![0.0f32; n];
    let mut values = z.packed.iter();
    for (i, slot) in data.iter_mut().enumerate() {
        if z.bitmap[i / 8] >> (i % 8) & 1 == 1 {
            *slot = *values.next().expect("popcount checked");
        }
    }
    Tensor::new(z.shape.clone(), data)
}

/// Fraction of elements that are nonzero.
pub fn density(z: &ZvcTensor) -> f64 {
    z.popcount() as f64 / z.elements() as f64
}

const ZVC_MAGIC: &[u8; 4] = b"XZVC";
const ZVC_VERSION: u8 = 1;

/// File layout, little-endian: `"XZVC"`, `u8` version, `u8` value width in
/// bits, `u8` rank, `u32` dims, `u64` popcount, bitmap bytes, packed values.
pub fn to_bytes(z: &ZvcTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(15 + 4 * z.shape.len() + z.compressed_bytes());
    out.extend_from_slice(ZVC_MAGIC);
    out.push(ZVC_VERSION);
    out.push(z.value_width.bits());
    out.push(z.shape.len() as u8);
    for &d in &z.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(z.packed.len() as u64).to_le_bytes());
    out.extend_from_slice(&z.bitmap);
    for &v in &z.packed {
        match z.value_width {
            ValueWidth::W32 => out.extend_from_slice(&v.to_le_bytes()),
            ValueWidth::W16 => out.extend_from_slice(&f16::from_f32(v).to_bits().to_le_bytes()),
        }
    }
    out
}

/// Header size in bytes for a tensor of the given rank.
pub fn header_bytes(rank: usize) -> usize {
    4 + 3 + 4 * rank + 8
}

pub fn from_bytes(bytes: &[u8]) -> Result<ZvcTensor> {
    let trunc = || XambaError::Format("truncated ZVC file".into());
    if bytes.len() < 7 {
        return Err(trunc());
    }
    if &bytes[..4] != ZVC_MAGIC {
        return Err(XambaError::Format("bad ZVC magic".into()));
    }
    if bytes[4] != ZVC_VERSION {
        return Err(XambaError::Format(format!("unsupported ZVC version {}", bytes[4])));
    }
    let value_width = ValueWidth::from_bits(bytes[5])?;
    let rank = bytes[6] as usize;
    if rank == 0 || rank > 2 {
        return Err(XambaError::Format(format!("unsupported rank {rank}")));
    }
    let hdr = header_bytes(rank);
    if bytes.len() < hdr {
        return Err(trunc());
    }
    let shape: Vec<usize> = (0..rank)
        .map(|i| u32::from_le_bytes(bytes[7 + 4 * i..11 + 4 * i].try_into().expect("4")) as usize)
        .collect();
    let popcount = u64::from_le_bytes(bytes[hdr - 8..hdr].try_into().expect("8")) as usize;
    let n: usize = shape.iter().product();
    let bm_len = n.div_ceil(8);
    let want = hdr + compressed_size(n, popcount, value_width);
    if bytes.len() != want {
        return Err(XambaError::Corruption(format!(
            "ZVC file is {} bytes, header implies {want}",
            bytes.len()
        )));
    }
    let bitmap = bytes[hdr..hdr + bm_len].to_vec();
    let payload = &bytes[hdr + bm_len..];
    let packed = match value_width {
        ValueWidth::W32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        ValueWidth::W16 => payload
            .chunks_exact(2)
            .map(|c| f16::from_bits(u16::from_le_bytes([c[0], c[1]])).to_f32())
            .collect(),
    };
    let z = ZvcTensor {
        shape,
        bitmap,
        packed,
        value_width,
    };
    z.check()?;
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tril(m: usize) -> Tensor {
        Tensor::from_fn(m, m, |i, j| if j <= i { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn lower_triangular_4x4() {
        let z = compress(&tril(4), ValueWidth::W32);
        assert_eq!(z.bitmap.len(), 2);
        assert_eq!(z.packed.len(), 10);
        assert_eq!(decompress(&z).unwrap(), tril(4));
    }

    #[test]
    fn all_zero_tensor() {
        let z = compress(&Tensor::zeros(vec![3, 5]).unwrap(), ValueWidth::W32);
        assert!(z.packed.is_empty());
        assert!(z.bitmap.iter().all(|&b| b == 0));
        assert_eq!(density(&z), 0.0);
    }

    #[test]
    fn mask_256_sizes_in_half_precision() {
        let z = compress(&tril(256), ValueWidth::W16);
        assert_eq!(z.popcount(), 32896);
        assert_eq!(z.compressed_bytes(), 8192 + 65792);
        assert_eq!(z.dense_bytes(), 131072);
        let ratio = z.compressed_bytes() as f64 / z.dense_bytes() as f64;
        assert!((ratio - 73984.0 / 131072.0).abs() < 1e-12);
        assert_eq!(decompress(&z).unwrap(), tril(256));
    }

    #[test]
    fn densities() {
        assert_eq!(density(&compress(&tril(256), ValueWidth::W32)), 32896.0 / 65536.0);
        assert_eq!(
            density(&compress(&Tensor::identity(8).unwrap(), ValueWidth::W32)),
            1.0 / 8.0
        );
        assert_eq!(
            density(&compress(&Tensor::ones(vec![3, 3]).unwrap(), ValueWidth::W32)),
            1.0
        );
    }

    #[test]
    fn negative_zero_is_zero() {
        let x = Tensor::new(vec![3], vec![-0.0, 1.5, 0.0]).unwrap();
        let z = compress(&x, ValueWidth::W32);
        assert_eq!(z.packed, vec![1.5]);
        let back = decompress(&z).unwrap();
        assert_eq!(back.data()[0].to_bits(), 0.0f32.to_bits());
    }

    #[test]
    fn half_precision_rounds_to_nearest_even() {
        // 1 + 2^-11 sits exactly between two f16 values; ties go to even (1.0).
        let x = Tensor::new(vec![2], vec![1.0 + 2f32.powi(-11), 3.0]).unwrap();
        let z = compress(&x, ValueWidth::W16);
        assert_eq!(z.packed, vec![1.0, 3.0]);
    }

    #[test]
    fn tampering_is_detected() {
        let mut z = compress(&tril(5), ValueWidth::W32);
        z.packed.pop();
        assert!(matches!(decompress(&z), Err(XambaError::Corruption(_))));
        let mut z = compress(&tril(5), ValueWidth::W32);
        let last = z.bitmap.len() - 1;
        z.bitmap[last] |= 0x80;
        assert!(decompress(&z).is_err());
    }

    #[test]
    fn file_roundtrip_and_length() {
        for w in [ValueWidth::W16, ValueWidth::W32] {
            let z = compress(&tril(7), w);
            let b = to_bytes(&z);
            assert_eq!(b.len(), header_bytes(2) + z.compressed_bytes());
            assert_eq!(from_bytes(&b).unwrap(), z);
            assert!(from_bytes(&b[..b.len() - 1]).is_err());
        }
    }
}

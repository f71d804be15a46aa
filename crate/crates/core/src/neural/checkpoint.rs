//! Parameter checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//! `b"CDNT"`, version, layer count, then per layer a tensor count followed by
//! each tensor as rank, dims, and `f32` little-endian values.

use super::tensor::Tensor;
use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CDNT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(layers: &[Vec<Tensor<f32>>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for tensors in layers {
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| NnError::Checkpoint("unexpected end of data".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<Vec<Tensor<f32>>>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1 << 16));
    for _ in 0..n_layers {
        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors.min(16));
        for _ in 0..n_tensors {
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let count: usize = shape.iter().product();
            let raw = r.take(count * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        layers.push(tensors);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let layers = vec![
            vec![
                Tensor::new(vec![2, 2], vec![1.5f32, -0.0, f32::MIN_POSITIVE, 3.25]).unwrap(),
                Tensor::new(vec![2], vec![0.1f32, 0.2]).unwrap(),
            ],
            vec![],
        ];
        let bytes = encode_checkpoint(&layers);
        assert_eq!(&bytes[..4], b"CDNT");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in layers[0].iter().zip(&back[0]) {
            assert_eq!(a.shape(), b.shape());
            let ab: Vec<u32> = a.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_checkpoint(b"XXXX").is_err());
        let mut bytes = encode_checkpoint(&[vec![Tensor::new(vec![1], vec![1.0f32]).unwrap()]]);
        bytes.pop();
        assert!(decode_checkpoint(&bytes).is_err());
    }
}

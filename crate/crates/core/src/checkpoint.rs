//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes   "ETVD"
//! version      u32       1
//! config       u32 blocks, u32 channels, u32 in_channels,
//!              f64 alpha, u32 activation (0 = ELU, 1 = ReLU), u64 seed
//! records      u32 count, then per record:
//!              u32 name_len, name (UTF-8), u32 ndim, ndim × u32 dims,
//!              product(dims) × f32 payload
//! ```
//!
//! Records cover every learnable buffer and the batch-norm running
//! statistics. A network stored as `f32` reloads bit for bit.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{ActivationKind, NetworkConfig, ResidualDenoiser};
use crate::tensor::Real;

pub const MAGIC: &[u8; 4] = b"ETVD";
pub const VERSION: u32 = 1;

fn bad(reason: impl Into<String>) -> Error {
    Error::Checkpoint(reason.into())
}

pub fn encode<T: Real>(net: &ResidualDenoiser<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let c = net.config();
    for v in [c.blocks, c.channels, c.in_channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.alpha.to_le_bytes());
    let act: u32 = match c.activation {
        ActivationKind::Elu => 0,
        ActivationKind::Relu => 1,
    };
    out.extend_from_slice(&act.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());

    let state = net.state();
    out.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for p in state {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.dims.len() as u32).to_le_bytes());
        for d in &p.dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in p.values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<ResidualDenoiser<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("missing ETVD magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let blocks = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    let alpha = r.f64()?;
    let activation = match r.u32()? {
        0 => ActivationKind::Elu,
        1 => ActivationKind::Relu,
        other => return Err(bad(format!("unknown activation code {other}"))),
    };
    let seed = r.u64()?;
    let config = NetworkConfig { blocks, channels, in_channels, alpha, activation, seed };
    config.validate().map_err(|e| bad(format!("invalid config: {e}")))?;

    let count = r.u32()? as usize;
    let mut records: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("record name is not UTF-8"))?.to_owned();
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let payload = r.take(n.checked_mul(4).ok_or_else(|| bad("record too large"))?)?;
        let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if records.insert(name.clone(), (dims, values)).is_some() {
            return Err(bad(format!("duplicate record {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut net = ResidualDenoiser::<T>::new(config)?;
    for p in net.state_mut() {
        let (dims, values) = records.remove(&p.name).ok_or_else(|| bad(format!("missing record {}", p.name)))?;
        if dims != p.dims {
            return Err(bad(format!("record {} has dims {dims:?}, expected {:?}", p.name, p.dims)));
        }
        for (dst, &v) in p.values.iter_mut().zip(&values) {
            if !v.is_finite() {
                return Err(bad(format!("non-finite value in {}", p.name)));
            }
            *dst = T::from_f64_lossy(f64::from(v));
        }
    }
    if let Some(extra) = records.keys().next() {
        return Err(bad(format!("unexpected record {extra}")));
    }
    Ok(net)
}

pub fn save<T: Real>(path: impl AsRef<Path>, net: &ResidualDenoiser<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<ResidualDenoiser<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkConfig {
        NetworkConfig { blocks: 2, channels: 3, in_channels: 1, alpha: 0.5, activation: ActivationKind::Elu, seed: 5 }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut net = ResidualDenoiser::<f32>::new(small()).unwrap();
        net.blocks_mut()[1].bn.running_var[2] = 0.37;
        let bytes = encode(&net);
        assert_eq!(&bytes[..4], b"ETVD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back: ResidualDenoiser<f32> = decode(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.blocks()[1].bn.running_var[2], 0.37);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&ResidualDenoiser::<f32>::new(small()).unwrap());
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode::<f32>(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(decode::<f32>(&bad_version).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode::<f32>(&extra).is_err());
    }
}

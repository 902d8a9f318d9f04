//! Checkpoint container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "CNM1"
//! u32            number of layer widths L
//! u32 × L        widths (input, hidden..., output)
//! f32            omega0
//! f32 × P        parameters, layer by layer: weights row-major, then biases
//! sections*      4-byte tag, u64 payload length, payload
//! ```
//!
//! Known sections are `NRM1` (normalization: f64 scale, f64 × 3 center) and
//! `BUF1` (replay buffer: u64 capacity, u64 total seen, u64 count, then per
//! sample f64 × 6 point/normal and u64 source frame). Unknown sections are
//! skipped on read.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{LayerDims, NetworkParams};
use crate::geometry::Vec3;
use crate::replay::{BufferedSample, ReplayBuffer};
use crate::scene::NormalizationTransform;

pub const MAGIC: &[u8; 4] = b"CNM1";
const TAG_NORMALIZATION: &[u8; 4] = b"NRM1";
const TAG_BUFFER: &[u8; 4] = b"BUF1";

/// Network parameters plus optional session context.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub normalization: Option<NormalizationTransform>,
    pub buffer: Option<ReplayBuffer>,
}

impl Checkpoint {
    pub fn new(params: NetworkParams) -> Self {
        Checkpoint { params, normalization: None, buffer: None }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.params.dims().as_slice();
        let mut out = Vec::with_capacity(16 + 4 * dims.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.omega0() as f32).to_le_bytes());
        for &v in self.params.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(n) = &self.normalization {
            let mut payload = Vec::with_capacity(32);
            payload.extend_from_slice(&n.scale.to_le_bytes());
            for c in n.center.iter() {
                payload.extend_from_slice(&c.to_le_bytes());
            }
            push_section(&mut out, TAG_NORMALIZATION, &payload);
        }
        if let Some(b) = &self.buffer {
            let mut payload = Vec::with_capacity(24 + 56 * b.len());
            payload.extend_from_slice(&(b.capacity() as u64).to_le_bytes());
            payload.extend_from_slice(&b.total_seen().to_le_bytes());
            payload.extend_from_slice(&(b.len() as u64).to_le_bytes());
            for s in b.samples() {
                for v in s.point.iter().chain(s.normal.iter()) {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
                payload.extend_from_slice(&(s.frame as u64).to_le_bytes());
            }
            push_section(&mut out, TAG_BUFFER, &payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let n_dims = r.u32()? as usize;
        if n_dims > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_dims}")));
        }
        let dims: Vec<usize> = (0..n_dims).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let dims = LayerDims::new(dims).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let omega0 = r.f32()? as f64;
        let count = dims.parameter_count();
        if r.remaining() < 4 * count {
            return Err(Error::Checkpoint("truncated parameters".into()));
        }
        let values: Vec<f64> = (0..count).map(|_| r.f32().map(|v| v as f64)).collect::<Result<_>>()?;
        let params = NetworkParams::from_flat(dims, omega0, values).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut ckpt = Checkpoint::new(params);
        while r.remaining() > 0 {
            let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
            let len = r.u64()? as usize;
            let payload = r.take(len)?;
            let mut p = Reader { bytes: payload, pos: 0 };
            match &tag {
                TAG_NORMALIZATION => {
                    let scale = p.f64()?;
                    let center = Vec3::new(p.f64()?, p.f64()?, p.f64()?);
                    if !(scale > 0.0 && scale.is_finite()) {
                        return Err(Error::Checkpoint(format!("bad normalization scale {scale}")));
                    }
                    ckpt.normalization = Some(NormalizationTransform { center, scale });
                }
                TAG_BUFFER => {
                    let capacity = p.u64()? as usize;
                    let total_seen = p.u64()?;
                    let n = p.u64()? as usize;
                    if n > capacity || p.remaining() != n * 56 {
                        return Err(Error::Checkpoint("inconsistent buffer section".into()));
                    }
                    let mut samples = Vec::with_capacity(n);
                    for _ in 0..n {
                        let point = Vec3::new(p.f64()?, p.f64()?, p.f64()?);
                        let normal = Vec3::new(p.f64()?, p.f64()?, p.f64()?);
                        let frame = p.u64()? as usize;
                        samples.push(BufferedSample { point, normal, frame });
                    }
                    ckpt.buffer = Some(ReplayBuffer::from_parts(capacity, samples, total_seen));
                }
                _ => log::debug!("skipping unknown checkpoint section {:?}", String::from_utf8_lossy(&tag)),
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `theta_{t:04}.cnm`
pub fn checkpoint_file_name(t: usize) -> String {
    format!("theta_{t:04}.cnm")
}

fn push_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl NetworkParams {
    /// Copy with every parameter rounded to the nearest f32, i.e. exactly what
    /// a checkpoint round trip yields.
    pub fn quantized_f32(&self) -> NetworkParams {
        let mut q = self.clone();
        for v in q.as_mut_slice() {
            *v = *v as f32 as f64;
        }
        q
    }
}

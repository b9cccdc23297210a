//! Parameter checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! "EVGN" | version u8 (1) | n u32 | layer count u32
//! per layer: name length u32 | name (UTF-8) | cin u32 | cout u32 | k u32 | stride u32 | pad u32
//! per layer, in table order: cout*cin*k*k weights then cout biases, all f32
//! ```
//!
//! Generator layers come first (`g.` prefix), then discriminator layers (`d.`).

use std::fs;
use std::path::Path;

use crate::layers::Conv2d;
use crate::nets::{Discriminator, Generator, Params};
use crate::tensor::CganError;

pub const MAGIC: &[u8; 4] = b"EVGN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let layers: Vec<&Conv2d> = self
            .generator
            .params
            .layers
            .iter()
            .chain(&self.discriminator.params.layers)
            .collect();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.generator.n as u32).to_le_bytes());
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in &layers {
            out.extend_from_slice(&(l.name.len() as u32).to_le_bytes());
            out.extend_from_slice(l.name.as_bytes());
            for v in [l.cin, l.cout, l.k, l.stride, l.pad] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        for l in &layers {
            for v in l.weight.iter().chain(&l.bias) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CganError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CganError::Checkpoint("bad magic".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(CganError::Checkpoint(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let count = r.u32()? as usize;
        if count > 64 {
            return Err(CganError::Checkpoint(format!("implausible layer count {count}")));
        }
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CganError::Checkpoint("layer name is not UTF-8".into()))?
                .to_string();
            let mut dims = [0usize; 5];
            for d in &mut dims {
                *d = r.u32()? as usize;
            }
            table.push((name, dims));
        }
        let mut g = Vec::new();
        let mut d = Vec::new();
        for (name, [cin, cout, k, stride, pad]) in table {
            let wlen = cout
                .checked_mul(cin)
                .and_then(|v| v.checked_mul(k * k))
                .ok_or_else(|| CganError::Checkpoint("layer too large".into()))?;
            let weight = r.f32s(wlen)?;
            let bias = r.f32s(cout)?;
            let layer = Conv2d {
                name: name.clone(),
                cin,
                cout,
                k,
                stride,
                pad,
                weight,
                bias,
            };
            if name.starts_with("g.") {
                g.push(layer);
            } else if name.starts_with("d.") {
                d.push(layer);
            } else {
                return Err(CganError::Checkpoint(format!("unknown layer {name:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(CganError::Checkpoint("trailing bytes".into()));
        }
        let bad_layout = |e: CganError| CganError::Checkpoint(e.to_string());
        Ok(Checkpoint {
            generator: Generator::from_params(n, Params { layers: g }).map_err(bad_layout)?,
            discriminator: Discriminator::from_params(n, Params { layers: d }).map_err(bad_layout)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CganError> {
        fs::write(path, self.to_bytes()).map_err(|e| CganError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CganError> {
        let bytes = fs::read(path).map_err(|e| CganError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CganError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CganError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CganError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f64>, CganError> {
        let raw = self.take(count.checked_mul(4).ok_or_else(|| CganError::Checkpoint("truncated".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

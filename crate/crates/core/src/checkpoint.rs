//! Binary checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes   "QPCK"
//! version      u32       1
//! arch         u8        0 = gru, 1 = feedforward
//! dims         3 x u32   input, hidden, output
//! seed         u64
//! config_hash  32 bytes  sha256 of the canonical training config
//! n_tensors    u32
//! per tensor:
//!   name_len   u16, then name_len bytes of UTF-8
//!   ndim       u8, then ndim x u32 shape
//!   values     product(shape) x f64
//! ```
//!
//! Tensors appear in layout order; the loader rejects any name, shape or
//! order that differs from the layout implied by `arch` and `dims`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::{Architecture, NetDims, QNetworkParams};

pub const MAGIC: &[u8; 4] = b"QPCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: QNetworkParams,
    pub seed: u64,
    pub config_hash: [u8; 32],
}

fn arch_code(a: Architecture) -> u8 {
    match a {
        Architecture::Gru => 0,
        Architecture::Feedforward => 1,
    }
}

pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    ck.params.check()?;
    let p = &ck.params;
    let mut out = Vec::with_capacity(64 + p.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(arch_code(p.arch));
    for d in [p.dims.input, p.dims.hidden, p.dims.output] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&ck.seed.to_le_bytes());
    out.extend_from_slice(&ck.config_hash);
    let tensors = p.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        let shape: Vec<usize> = if t.cols == 1 { vec![t.rows] } else { vec![t.rows, t.cols] };
        out.push(shape.len() as u8);
        for s in shape {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for v in &p.data[t.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let arch = match c.u8()? {
        0 => Architecture::Gru,
        1 => Architecture::Feedforward,
        k => return Err(Error::Checkpoint(format!("unknown architecture code {k}"))),
    };
    let dims = NetDims {
        input: c.u32()? as usize,
        hidden: c.u32()? as usize,
        output: c.u32()? as usize,
    };
    let seed = c.u64()?;
    let config_hash: [u8; 32] = c.take(32)?.try_into().expect("32 bytes");
    let mut params = QNetworkParams::zeros(arch, dims);
    let expected = params.tensors();
    let n = c.u32()? as usize;
    if n != expected.len() {
        return Err(Error::Checkpoint(format!("{n} tensors, layout has {}", expected.len())));
    }
    for t in expected {
        let name_len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if name != t.name {
            return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{name}`", t.name)));
        }
        let ndim = c.u8()? as usize;
        let mut count = 1usize;
        for _ in 0..ndim {
            count = count.saturating_mul(c.u32()? as usize);
        }
        if count != t.len() {
            return Err(Error::Checkpoint(format!("tensor `{name}` has {count} values, expected {}", t.len())));
        }
        for slot in &mut params.data[t.range()] {
            *slot = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    params.check()?;
    Ok(Checkpoint { params, seed, config_hash })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(ck)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

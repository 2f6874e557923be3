//! SQFM model files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      "SQFM"
//! version    u8 = 1
//! input_dim  u32
//! max_len    u32
//! n_layers   u32, then hidden u32 × n_layers
//! heads      u32
//! classes    u32
//! dropout    f32
//! flags      u8   bit 0: attention branch, bit 1: padding mask
//! n_blobs    u32
//! blobs      name_len u16, UTF-8 name, rows u32, cols u32, f64[rows·cols] row-major
//! ```

use std::fs;
use std::path::Path;

use super::params::{Architecture, ModelParams};
use crate::error::{Error, Result};

pub const SQFM_MAGIC: [u8; 4] = *b"SQFM";
pub const SQFM_VERSION: u8 = 1;

const FLAG_ATTENTION: u8 = 1;
const FLAG_MASK: u8 = 2;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_model(model: &ModelParams) -> Result<Vec<u8>> {
    model.validate()?;
    let arch = &model.arch;
    let mut buf = Vec::with_capacity(64 + model.parameter_count() * 8);
    buf.extend_from_slice(&SQFM_MAGIC);
    buf.push(SQFM_VERSION);
    put_u32(&mut buf, arch.input_dim);
    put_u32(&mut buf, arch.max_len);
    put_u32(&mut buf, arch.hidden.len());
    for &h in &arch.hidden {
        put_u32(&mut buf, h);
    }
    put_u32(&mut buf, arch.heads);
    put_u32(&mut buf, arch.classes);
    buf.extend_from_slice(&(arch.dropout as f32).to_le_bytes());
    let mut flags = 0;
    if arch.attention {
        flags |= FLAG_ATTENTION;
    }
    if arch.mask_padding {
        flags |= FLAG_MASK;
    }
    buf.push(flags);
    let tensors = model.tensors();
    put_u32(&mut buf, tensors.len());
    for (name, m) in tensors {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, m.rows());
        put_u32(&mut buf, m.cols());
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelParams> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4, "magic")?.try_into().unwrap();
    if magic != SQFM_MAGIC {
        return Err(Error::BadMagic {
            expected: SQFM_MAGIC,
            found: magic,
        });
    }
    let version = c.take(1, "version")?[0];
    if version != SQFM_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let input_dim = c.u32("input dim")?;
    let max_len = c.u32("max len")?;
    let n_layers = c.u32("layer count")?;
    if n_layers > 1024 {
        return Err(Error::InvalidInput(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let hidden = (0..n_layers)
        .map(|_| c.u32("hidden size"))
        .collect::<Result<Vec<_>>>()?;
    let heads = c.u32("heads")?;
    let classes = c.u32("classes")?;
    let dropout = f32::from_le_bytes(c.take(4, "dropout")?.try_into().unwrap());
    let flags = c.take(1, "flags")?[0];
    let arch = Architecture {
        input_dim,
        max_len,
        hidden,
        heads,
        classes,
        dropout: f64::from(dropout),
        attention: flags & FLAG_ATTENTION != 0,
        mask_padding: flags & FLAG_MASK != 0,
    };
    let mut model = ModelParams::zeros(&arch)?;
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let n_blobs = c.u32("blob count")?;
    if n_blobs != names.len() {
        return Err(Error::Dimension(format!(
            "model file has {n_blobs} tensors, architecture needs {}",
            names.len()
        )));
    }
    for (expected, slot) in names.iter().zip(model.tensors_mut()) {
        let name_len = u16::from_le_bytes(c.take(2, "blob name length")?.try_into().unwrap());
        let name = std::str::from_utf8(c.take(name_len as usize, "blob name")?)
            .map_err(|_| Error::InvalidInput("blob name is not UTF-8".into()))?;
        if name != expected {
            return Err(Error::InvalidInput(format!(
                "expected tensor {expected:?}, found {name:?}"
            )));
        }
        let (rows, cols) = (c.u32("rows")?, c.u32("cols")?);
        if (rows, cols) != slot.shape() {
            return Err(Error::Dimension(format!(
                "{name} is {rows}×{cols}, expected {:?}",
                slot.shape()
            )));
        }
        let data = c.take(rows * cols * 8, "tensor data")?;
        for (dst, src) in slot.as_mut_slice().iter_mut().zip(data.chunks_exact(8)) {
            *dst = f64::from_le_bytes(src.try_into().unwrap());
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::InvalidInput(format!(
            "{} trailing bytes after model",
            bytes.len() - c.pos
        )));
    }
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(attention: bool, mask: bool) -> ModelParams {
        let mut arch = Architecture::new(5, 3).with_dropout(0.3);
        arch.hidden = vec![6, 4];
        arch.heads = 2;
        arch.max_len = 3;
        arch.attention = attention;
        arch.mask_padding = mask;
        ModelParams::init(&arch, 11).unwrap()
    }

    #[test]
    fn round_trip() {
        for (a, m) in [(true, false), (true, true), (false, false)] {
            let p = model(a, m);
            let bytes = encode_model(&p).unwrap();
            assert_eq!(decode_model(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_model(&model(true, false)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_model(&bad),
            Err(Error::UnsupportedVersion(9))
        ));
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
        let mut long = bytes;
        long.push(0);
        assert!(decode_model(&long).is_err());
    }
}

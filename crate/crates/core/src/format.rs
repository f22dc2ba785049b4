//! Binary model files.
//!
//! Little-endian layout:
//!
//! ```text
//! "TTNM"            magic
//! u32               format version (1)
//! u32 × 5           side, K, d, chi, D
//! per tensor        u32 axis count, u32[] axis lengths, f64[] payload
//!                   (layer-major, then index order)
//! u32               CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{TtnLayout, TtnModel};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"TTNM";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &TtnModel) -> Vec<u8> {
    let l = model.layout();
    let payload: usize = model.tensors().map(|(_, t)| 4 + 4 * t.rank() + 8 * t.len()).sum();
    let mut out = Vec::with_capacity(4 + 4 + 20 + payload + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [l.side, l.num_layers, l.d, l.chi, l.out_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (_, t) in model.tensors() {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &n in t.shape() {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.pos as u64,
                    format!(
                        "truncated file: need {n} bytes for {what}, {} remain",
                        self.bytes.len() - self.pos
                    ),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TtnModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            4,
            format!("unsupported format version {version}, expected {VERSION}"),
        ));
    }
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        *d = r.u32("layout")? as usize;
    }
    let layout_pos = 8;
    let layout = TtnLayout {
        side: dims[0],
        num_layers: dims[1],
        d: dims[2],
        chi: dims[3],
        out_dim: dims[4],
    };
    layout
        .validate()
        .map_err(|e| Error::format(layout_pos, format!("invalid layout block: {e}")))?;

    let mut tensors = Vec::with_capacity(layout.num_layers);
    for k in 1..=layout.num_layers {
        let mut layer = Vec::with_capacity(layout.layer_len(k));
        for m in 0..layout.layer_len(k) {
            let at = r.pos as u64;
            let rank = r.u32("axis count")? as usize;
            let expected = layout.tensor_shape(k);
            if rank != expected.len() {
                return Err(Error::format(
                    at,
                    format!("tensor ({k},{m}) has {rank} axes, expected 5"),
                ));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("axis length")? as usize);
            }
            if shape != expected {
                return Err(Error::format(
                    at,
                    format!("tensor ({k},{m}) has shape {shape:?}, layout requires {expected:?}"),
                ));
            }
            let len: usize = shape.iter().product();
            let raw = r.take(8 * len, "tensor payload")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            layer.push(DenseTensor::new(shape, data)?);
        }
        tensors.push(layer);
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} unexpected trailing bytes", bytes.len() - r.pos),
        ));
    }
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(Error::format(
            body_end as u64,
            format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    TtnModel::from_tensors(layout, tensors)
}

pub fn save(model: &TtnModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TtnModel> {
    from_bytes(&fs::read(path)?)
}

/// Loads a model and insists on a particular layout.
pub fn load_expecting(path: impl AsRef<Path>, expected: &TtnLayout) -> Result<TtnModel> {
    let model = load(path)?;
    if model.layout() != expected {
        return Err(Error::LayoutMismatch {
            expected: *expected,
            found: *model.layout(),
        });
    }
    Ok(model)
}

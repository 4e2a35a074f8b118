//! Little-endian binary checkpoint.
//!
//! ```text
//! magic "GSKP" | version u32 = 1 | arch u8 (0 gcn, 1 sage) | layers u8
//! in_dim u32 | hidden_dim u32 | out_dim u32 | dropout f32
//! per layer, per group: rows u32 | cols u32 | f32 x rows*cols
//! ```
//!
//! Group order is `[W, b]` for GCN and `[W_self, W_nb, b]` for SAGE.

use std::io::{Read, Write};
use std::path::Path;

use super::{Arch, GnnError, ModelParams, ModelSpec};
use crate::tensor::DenseMat;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GSKP";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<(), GnnError> {
    let spec = params.spec();
    let mut buf = Vec::with_capacity(26 + 8 * params.groups().count() + 4 * params.num_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match spec.arch {
        Arch::Gcn => 0,
        Arch::Sage => 1,
    });
    buf.push(spec.num_layers as u8);
    for d in [spec.in_dim, spec.hidden_dim, spec.out_dim] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&spec.dropout.to_le_bytes());
    for g in params.groups() {
        buf.extend_from_slice(&(g.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(g.cols() as u32).to_le_bytes());
        for &v in g.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<(), GnnError> {
    write_checkpoint(
        params,
        std::io::BufWriter::new(std::fs::File::create(path)?),
    )
}

fn bad(section: &'static str, detail: impl Into<String>) -> GnnError {
    GnnError::Checkpoint {
        section,
        detail: detail.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, section: &'static str) -> Result<&'a [u8], GnnError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad(section, format!("truncated at offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, section: &'static str) -> Result<u8, GnnError> {
        Ok(self.take(1, section)?[0])
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, GnnError> {
        Ok(u32::from_le_bytes(
            self.take(4, section)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams, GnnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.take(4, "header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad("header", format!("bad magic {magic:?}")));
    }
    let version = cur.u32("header")?;
    if version != VERSION {
        return Err(bad("header", format!("unsupported version {version}")));
    }
    let arch = match cur.u8("header")? {
        0 => Arch::Gcn,
        1 => Arch::Sage,
        other => return Err(bad("header", format!("unknown arch tag {other}"))),
    };
    let num_layers = cur.u8("header")? as usize;
    let in_dim = cur.u32("header")? as usize;
    let hidden_dim = cur.u32("header")? as usize;
    let out_dim = cur.u32("header")? as usize;
    let dropout = f32::from_bits(cur.u32("header")?);
    let spec = ModelSpec {
        arch,
        num_layers,
        in_dim,
        hidden_dim,
        out_dim,
        dropout,
    };
    spec.validate().map_err(|e| bad("header", e.to_string()))?;

    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let mut groups = Vec::with_capacity(arch.groups_per_layer());
        for expected in spec.group_shapes(l) {
            let rows = cur.u32("params")? as usize;
            let cols = cur.u32("params")? as usize;
            if (rows, cols) != expected {
                return Err(bad(
                    "params",
                    format!("layer {l}: group {rows}x{cols}, expected {expected:?}"),
                ));
            }
            let raw = cur.take(rows * cols * 4, "params")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            groups.push(
                DenseMat::from_vec(rows, cols, data).map_err(|e| bad("params", e.to_string()))?,
            );
        }
        layers.push(groups);
    }
    if cur.pos != bytes.len() {
        return Err(bad(
            "trailer",
            format!("{} unexpected trailing bytes", bytes.len() - cur.pos),
        ));
    }
    ModelParams::new(spec, layers)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams, GnnError> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

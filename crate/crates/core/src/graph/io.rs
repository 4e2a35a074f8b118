//! Little-endian binary graph container.
//!
//! ```text
//! magic "GSKG" | version u32 = 1 | num_nodes u64 | num_edges u64
//! feat_dim u32 | num_classes u32
//! row_ptr  u64 x (num_nodes + 1)
//! col_idx  u64 x num_edges          (directed count, both directions stored)
//! features f32 x num_nodes * feat_dim
//! labels   u32 x num_nodes
//! masks    u8  x 3 * num_nodes      (train, val, test; 0 or 1)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{CsrGraph, GraphData, GraphError, Split};
use crate::tensor::{CsrMat, DenseMat};

pub const GRAPH_MAGIC: &[u8; 4] = b"GSKG";
pub const GRAPH_VERSION: u32 = 1;

pub fn write_graph<W: Write>(graph: &CsrGraph, mut w: W) -> Result<(), GraphError> {
    let n = graph.num_nodes();
    let adj = graph.adjacency();
    let mut buf =
        Vec::with_capacity(32 + 8 * (n + 1 + adj.nnz()) + 4 * graph.features().len() + 7 * n);
    buf.extend_from_slice(GRAPH_MAGIC);
    buf.extend_from_slice(&GRAPH_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(adj.nnz() as u64).to_le_bytes());
    buf.extend_from_slice(&(graph.feat_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(graph.num_classes() as u32).to_le_bytes());
    for &p in adj.row_ptr() {
        buf.extend_from_slice(&(p as u64).to_le_bytes());
    }
    for &c in adj.col_idx() {
        buf.extend_from_slice(&(c as u64).to_le_bytes());
    }
    for &x in graph.features().data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for &l in graph.labels() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for split in Split::ALL {
        buf.extend(graph.mask(split).iter().map(|&m| m as u8));
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_graph(graph: &CsrGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let file = std::fs::File::create(path)?;
    write_graph(graph, std::io::BufWriter::new(file))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, section: &'static str) -> Result<&'a [u8], GraphError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| GraphError::Format {
                section,
                detail: format!(
                    "truncated: need {len} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(
            self.take(4, section)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64, GraphError> {
        Ok(u64::from_le_bytes(
            self.take(8, section)?.try_into().expect("8 bytes"),
        ))
    }

    fn u64_array(&mut self, count: usize, section: &'static str) -> Result<Vec<usize>, GraphError> {
        let bytes = self.take(
            count.checked_mul(8).ok_or_else(|| overflow(section))?,
            section,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
            .collect())
    }
}

fn overflow(section: &'static str) -> GraphError {
    GraphError::Format {
        section,
        detail: "declared size overflows".into(),
    }
}

pub fn read_graph<R: Read>(mut r: R) -> Result<CsrGraph, GraphError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    let magic = cur.take(4, "header")?;
    if magic != GRAPH_MAGIC {
        return Err(GraphError::Format {
            section: "header",
            detail: format!("bad magic {magic:?}"),
        });
    }
    let version = cur.u32("header")?;
    if version != GRAPH_VERSION {
        return Err(GraphError::Format {
            section: "header",
            detail: format!("unsupported version {version}"),
        });
    }
    let n = cur.u64("header")? as usize;
    let m = cur.u64("header")? as usize;
    let feat_dim = cur.u32("header")? as usize;
    let num_classes = cur.u32("header")? as usize;

    let row_ptr = cur.u64_array(
        n.checked_add(1).ok_or_else(|| overflow("row_ptr"))?,
        "row_ptr",
    )?;
    let col_idx = cur.u64_array(m, "col_idx")?;
    let feat_len = n
        .checked_mul(feat_dim)
        .ok_or_else(|| overflow("features"))?;
    let feat_bytes = cur.take(
        feat_len
            .checked_mul(4)
            .ok_or_else(|| overflow("features"))?,
        "features",
    )?;
    let features: Vec<f32> = feat_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let label_bytes = cur.take(n * 4, "labels")?;
    let labels: Vec<u32> = label_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut masks: [Vec<bool>; 3] = Default::default();
    for mask in masks.iter_mut() {
        let raw = cur.take(n, "masks")?;
        if let Some(&bad) = raw.iter().find(|&&b| b > 1) {
            return Err(GraphError::Format {
                section: "masks",
                detail: format!("mask byte {bad} is not 0/1"),
            });
        }
        *mask = raw.iter().map(|&b| b == 1).collect();
    }
    if cur.pos != bytes.len() {
        return Err(GraphError::Format {
            section: "trailer",
            detail: format!("{} unexpected trailing bytes", bytes.len() - cur.pos),
        });
    }

    let adjacency =
        CsrMat::new(n, n, row_ptr, col_idx, vec![1.0; m]).map_err(|e| GraphError::Format {
            section: "col_idx",
            detail: e.to_string(),
        })?;
    let features = DenseMat::from_vec(n, feat_dim, features).map_err(|e| GraphError::Format {
        section: "features",
        detail: e.to_string(),
    })?;
    CsrGraph::new(adjacency, features, labels, num_classes, masks)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<CsrGraph, GraphError> {
    read_graph(std::io::BufReader::new(std::fs::File::open(path)?))
}

//! Little-endian embedding file: magic `EMB1`, u32 count, u32 dimension,
//! then per record a u32 id length, the UTF-8 id bytes and `dimension` f32s.

use std::io::{Read, Write};
use std::path::Path;

use super::IndexError;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dimension: usize,
    pub entries: Vec<(String, Vec<f32>)>,
}

impl EmbeddingSet {
    pub fn new(dimension: usize) -> Self {
        EmbeddingSet {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.iter().find(|(i, _)| i == id).map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexError> {
        let mut out = Vec::with_capacity(12 + self.entries.len() * (8 + 4 * self.dimension));
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&u32_of(self.entries.len())?.to_le_bytes());
        out.extend_from_slice(&u32_of(self.dimension)?.to_le_bytes());
        for (id, v) in &self.entries {
            if v.len() != self.dimension {
                return Err(IndexError::DimensionMismatch {
                    expected: self.dimension,
                    actual: v.len(),
                });
            }
            out.extend_from_slice(&u32_of(id.len())?.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_reader(mut r: impl Read) -> Result<Self, IndexError> {
        let bad = |detail: &str| IndexError::Malformed {
            what: "embedding file",
            detail: detail.to_owned(),
        };
        let mut buf4 = [0u8; 4];
        let mut read4 = |r: &mut dyn Read| -> Result<[u8; 4], IndexError> {
            r.read_exact(&mut buf4).map_err(|_| bad("unexpected end of file"))?;
            Ok(buf4)
        };
        if &read4(&mut r)? != EMB_MAGIC {
            return Err(bad("bad magic"));
        }
        let count = u32::from_le_bytes(read4(&mut r)?) as usize;
        let dimension = u32::from_le_bytes(read4(&mut r)?) as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = u32::from_le_bytes(read4(&mut r)?) as usize;
            let mut id = vec![0u8; len];
            r.read_exact(&mut id).map_err(|_| bad("truncated id"))?;
            let id = String::from_utf8(id).map_err(|_| bad("id is not UTF-8"))?;
            let mut raw = vec![0u8; dimension * 4];
            r.read_exact(&mut raw).map_err(|_| bad("truncated vector"))?;
            let v = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push((id, v));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|_| bad("read error"))? != 0 {
            return Err(bad("trailing bytes after last record"));
        }
        Ok(EmbeddingSet { dimension, entries })
    }
}

fn u32_of(n: usize) -> Result<u32, IndexError> {
    u32::try_from(n).map_err(|_| IndexError::InvalidParam(format!("{n} does not fit in u32")))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet, IndexError> {
    let f = std::fs::File::open(path).map_err(|e| IndexError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    EmbeddingSet::from_reader(std::io::BufReader::new(f))
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<(), IndexError> {
    let io = |e| IndexError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&set.to_bytes()?).map_err(io)
}

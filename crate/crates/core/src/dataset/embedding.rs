//! Frame/text embedding matrices.
//!
//! Binary layout (`EMB1`, little-endian):
//!
//! ```text
//! 0..4    b"EMB1"
//! 4       version = 1
//! 5..8    zero padding
//! 8..12   rows: u32
//! 12..16  cols: u32
//! 16..    rows x u64 FNV-1a hash of the UTF-8 post id
//! ..      rows * cols x f32, row-major
//! ```
//!
//! Hashes are resolved back to post ids through a sidecar CSV
//! (`<file>.ids.csv`, columns `id_hash,post_id`, hash as 16 hex digits).
//! The CSV encoding is `post_id,e0,e1,...` with one row per frame.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    VideoFrames,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub kind: EmbeddingKind,
    /// Post id of each row. Repeated ids are consecutive frames of one video.
    pub ids: Vec<String>,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(kind: EmbeddingKind, ids: Vec<String>, cols: usize, values: Vec<f32>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::Format("embedding matrix needs at least one column".into()));
        }
        if values.len() != ids.len() * cols {
            return Err(Error::Format(format!(
                "{} values do not fill {} rows x {cols} cols",
                values.len(),
                ids.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite embedding value at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(EmbeddingMatrix {
            kind,
            ids,
            cols,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.csv");
    PathBuf::from(s)
}

/// Loads either encoding; the format is detected from the leading bytes.
pub fn load_embeddings(path: &Path, kind: EmbeddingKind) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        let ids_by_hash = read_sidecar(&sidecar_path(path))?;
        decode_binary(&bytes, kind, &ids_by_hash)
    } else if bytes.starts_with(b"post_id") {
        decode_csv(&bytes, kind)
    } else {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        Err(Error::Format(format!("bad magic `{shown}`")))
    }
}

fn read_sidecar(path: &Path) -> Result<HashMap<u64, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut map = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let (Some(hash), Some(id)) = (record.get(0), record.get(1)) else {
            return Err(Error::Format("sidecar rows need id_hash,post_id".into()));
        };
        let hash = u64::from_str_radix(hash, 16).map_err(|e| Error::Format(format!("sidecar hash `{hash}`: {e}")))?;
        if fnv1a64(id.as_bytes()) != hash {
            return Err(Error::Data(format!("sidecar hash mismatch for post `{id}`")));
        }
        map.insert(hash, id.to_string());
    }
    Ok(map)
}

pub(crate) fn decode_binary(
    bytes: &[u8],
    kind: EmbeddingKind,
    ids_by_hash: &HashMap<u64, String>,
) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic or short header".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(Error::Format("non-zero header padding".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if cols == 0 {
        return Err(Error::Format("zero columns".into()));
    }
    let row_bytes = 8 + 4 * cols;
    let payload = bytes.len() - HEADER_LEN;
    let expected = rows * row_bytes;
    if payload < expected {
        return Err(Error::Truncated {
            expected: rows,
            found: payload / row_bytes,
        });
    }
    if payload > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload - expected
        )));
    }
    let hash_end = HEADER_LEN + rows * 8;
    let mut ids = Vec::with_capacity(rows);
    for chunk in bytes[HEADER_LEN..hash_end].chunks_exact(8) {
        let hash = u64::from_le_bytes(chunk.try_into().unwrap());
        let id = ids_by_hash
            .get(&hash)
            .ok_or_else(|| Error::Format(format!("id hash {hash:016x} absent from sidecar")))?;
        ids.push(id.clone());
    }
    let values = bytes[hash_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(kind, ids, cols, values)
}

fn decode_csv(bytes: &[u8], kind: EmbeddingKind) -> Result<EmbeddingMatrix> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("post_id") || headers.len() < 2 {
        return Err(Error::Format("CSV embeddings need a `post_id,e0,...` header".into()));
    }
    let cols = headers.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != cols + 1 {
            return Err(Error::row(i + 1, "*", format!("expected {} cells", cols + 1)));
        }
        ids.push(record[0].to_string());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f32 = cell
                .trim()
                .parse()
                .map_err(|e| Error::row(i + 1, &headers[j + 1], format!("cannot parse `{cell}`: {e}")))?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite embedding value at row {}, column {}",
                    i + 1,
                    &headers[j + 1]
                )));
            }
            values.push(v);
        }
    }
    EmbeddingMatrix::new(kind, ids, cols, values)
}

pub(crate) fn encode_binary(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.rows() * (8 + 4 * matrix.cols));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols as u32).to_le_bytes());
    for id in &matrix.ids {
        out.extend_from_slice(&fnv1a64(id.as_bytes()).to_le_bytes());
    }
    for v in &matrix.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes the binary file and its id sidecar.
pub fn write_embeddings_binary(path: &Path, matrix: &EmbeddingMatrix) -> Result<()> {
    std::fs::write(path, encode_binary(matrix)).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    let file = File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["id_hash", "post_id"])?;
    let mut seen = std::collections::HashSet::new();
    for id in &matrix.ids {
        if seen.insert(id.as_str()) {
            w.write_record([format!("{:016x}", fnv1a64(id.as_bytes())), id.clone()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&sidecar, e))?;
    Ok(())
}

pub fn write_embeddings_csv(path: &Path, matrix: &EmbeddingMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["post_id".to_string()];
    header.extend((0..matrix.cols).map(|j| format!("e{j}")));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(matrix.cols + 1);
    for (i, id) in matrix.ids.iter().enumerate() {
        record.clear();
        record.push(id.clone());
        record.extend(matrix.row(i).iter().map(f32::to_string));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

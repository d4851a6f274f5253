//! Checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | content                                        |
//! |-------|------------------------------------------------|
//! | 8     | magic `DTRCKPT\0`                              |
//! | 4     | format version (`u32`, currently 1)            |
//! | 8     | header length `n` (`u64`)                      |
//! | n     | UTF-8 JSON header: model config, vocabulary, and `[name, rows, cols]` per parameter |
//! | 8·Σ   | parameter payload, `f64` row-major, in header order |

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::model::{ModelConfig, ParamSet, PolicyModel};
use crate::tensor::Matrix;
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"DTRCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocabulary,
    params: Vec<(String, usize, usize)>,
}

pub fn write_checkpoint<W: Write>(model: &PolicyModel, mut w: W) -> Result<()> {
    let header = Header {
        config: model.config().clone(),
        vocab: model.vocab().clone(),
        params: model
            .params()
            .names()
            .iter()
            .zip(model.params().values())
            .map(|(n, m)| (n.clone(), m.rows(), m.cols()))
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for m in model.params().values() {
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<PolicyModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut names = Vec::with_capacity(header.params.len());
    let mut values = Vec::with_capacity(header.params.len());
    for (name, rows, cols) in header.params {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        names.push(name);
        values.push(Matrix::from_vec(rows, cols, data));
    }
    PolicyModel::from_parts(header.config, header.vocab, ParamSet::new(names, values))
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn save(model: &PolicyModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
    write_checkpoint(model, &mut w)?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyModel> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}

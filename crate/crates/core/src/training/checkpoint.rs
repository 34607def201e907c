//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!   magic `TSECKPT1`
//!   u32 header length, then that many bytes of JSON header
//!   u32 parameter count, then per parameter:
//!     u32 name length, name bytes (UTF-8)
//!     u8 rank, u64 per dimension
//!     f64 per element (raw IEEE-754 bits, row-major)
//!   u32 buffer count, buffers encoded the same way
//!
//! Every f64 is written bit-for-bit, so save followed by load reproduces the
//! parameter store exactly.

use crate::config::RunConfig;
use crate::error::{Result, TseError};
use crate::nn::ParamStore;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TSECKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: RunConfig,
    pub config_hash: String,
    pub epoch: usize,
    pub dev_loss: f64,
    /// Speaker label order used by the classification head.
    pub speakers: Vec<String>,
}

fn write_tensors(
    w: &mut impl Write,
    tensors: &indexmap::IndexMap<String, ArrayD<f64>>,
) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, t) in tensors {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(t.ndim() as u8)?;
        for &d in t.shape() {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in t.iter() {
            w.write_u64::<LittleEndian>(v.to_bits())?;
        }
    }
    Ok(())
}

fn read_tensors(r: &mut impl Read) -> Result<indexmap::IndexMap<String, ArrayD<f64>>> {
    let n = r.read_u32::<LittleEndian>()?;
    let mut out = indexmap::IndexMap::new();
    for _ in 0..n {
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TseError::Checkpoint("non-UTF-8 tensor name".into()))?;
        let rank = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_bits(r.read_u64::<LittleEndian>()?));
        }
        let arr = ArrayD::from_shape_vec(ndarray::IxDyn(&shape), data)
            .map_err(|e| TseError::Checkpoint(format!("bad tensor shape for {name}: {e}")))?;
        out.insert(name, arr);
    }
    Ok(out)
}

pub fn save(path: &Path, header: &CheckpointHeader, store: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    let hdr = serde_json::to_vec(header).expect("header serializes");
    w.write_u32::<LittleEndian>(hdr.len() as u32)?;
    w.write_all(&hdr)?;
    write_tensors(&mut w, &store.params)?;
    write_tensors(&mut w, &store.buffers)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ParamStore)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TseError::Checkpoint("bad magic".into()));
    }
    let hdr_len = r.read_u32::<LittleEndian>()? as usize;
    let mut hdr = vec![0u8; hdr_len];
    r.read_exact(&mut hdr)?;
    let header: CheckpointHeader = serde_json::from_slice(&hdr)
        .map_err(|e| TseError::Checkpoint(format!("bad header: {e}")))?;
    let params = read_tensors(&mut r)?;
    let buffers = read_tensors(&mut r)?;
    Ok((header, ParamStore { params, buffers }))
}

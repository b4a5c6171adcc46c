//! Binary checkpoint format.
//!
//! ```text
//! "FLEXCKPT1"
//! u32 block_count
//! per block:
//!   u32 name_len, name (utf-8)
//!   u32 layer_count
//!   per layer: u32 out, u32 in, out*in f64 weights (row-major), out f64 bias
//!   u64 adam_step, then per layer: m.weight, m.bias, v.weight, v.bias
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::{LayerParams, ParamBlock};
use super::tensor::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 9] = b"FLEXCKPT1";

// Guards against allocating absurd sizes from a corrupted header.
const MAX_DIM: u32 = 1 << 20;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_matrix(w: &mut impl Write, m: &Matrix) -> Result<()> {
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn get_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows * cols);
    let mut b = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut b).map_err(truncated)?;
        data.push(f64::from_le_bytes(b));
    }
    Matrix::from_vec(rows, cols, data)
}

fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated file: {e}"))
}

pub fn write_checkpoint(w: &mut impl Write, blocks: &[&ParamBlock]) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, blocks.len())?;
    for block in blocks {
        put_u32(w, block.name.len())?;
        w.write_all(block.name.as_bytes())?;
        put_u32(w, block.layers.len())?;
        for layer in &block.layers {
            let (out, inp) = layer.weight.shape();
            put_u32(w, out)?;
            put_u32(w, inp)?;
            put_matrix(w, &layer.weight)?;
            put_matrix(w, &layer.bias)?;
        }
        w.write_all(&block.opt.step.to_le_bytes())?;
        for (m, v) in block.opt.m.iter().zip(&block.opt.v) {
            put_matrix(w, &m.weight)?;
            put_matrix(w, &m.bias)?;
            put_matrix(w, &v.weight)?;
            put_matrix(w, &v.bias)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Vec<ParamBlock>> {
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a FLEXCKPT1 file".into()));
    }
    let n_blocks = get_u32(r)?;
    let mut blocks = Vec::new();
    for _ in 0..n_blocks {
        let name_len = get_u32(r)?;
        if name_len > MAX_DIM {
            return Err(Error::Checkpoint(format!("implausible name length {name_len}")));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("block name is not utf-8".into()))?;
        let n_layers = get_u32(r)?;
        if n_layers > MAX_DIM {
            return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let out = get_u32(r)?;
            let inp = get_u32(r)?;
            if out == 0 || inp == 0 || out > MAX_DIM || inp > MAX_DIM {
                return Err(Error::Checkpoint(format!("implausible layer shape {out}x{inp} in {name}")));
            }
            let (out, inp) = (out as usize, inp as usize);
            layers.push(LayerParams {
                weight: get_matrix(r, out, inp)?,
                bias: get_matrix(r, 1, out)?,
            });
        }
        let mut block = ParamBlock::new(name, layers);
        block.opt.step = get_u64(r)?;
        for l in 0..block.layers.len() {
            let (out, inp) = block.layers[l].weight.shape();
            block.opt.m[l].weight = get_matrix(r, out, inp)?;
            block.opt.m[l].bias = get_matrix(r, 1, out)?;
            block.opt.v[l].weight = get_matrix(r, out, inp)?;
            block.opt.v[l].bias = get_matrix(r, 1, out)?;
        }
        if !block.all_finite() {
            return Err(Error::Checkpoint(format!("non-finite parameters in block {}", block.name)));
        }
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn save_checkpoint(path: &Path, blocks: &[&ParamBlock]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, blocks)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<ParamBlock>> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

/// Removes the block called `name` from `blocks`.
pub fn take_block(blocks: &mut Vec<ParamBlock>, name: &str) -> Result<ParamBlock> {
    let pos = blocks
        .iter()
        .position(|b| b.name == name)
        .ok_or_else(|| Error::Checkpoint(format!("missing block {name:?}")))?;
    Ok(blocks.remove(pos))
}

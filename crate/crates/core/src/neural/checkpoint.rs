//! Binary checkpoint format.
//!
//! ```text
//! "HCN1"                      4 bytes
//! obs_size, action_count,     3 × u64 little-endian
//! hidden
//! tensors                     f64 little-endian, declaration order
//! flag                        1 byte: 0 = no optimizer state, 1 = follows
//! [rho, epsilon,              2 × f64
//!  grad_sq_avg tensors,
//!  update_sq_avg tensors]
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::lstm::LstmParameters;
use super::optim::AdaDeltaState;
use super::tensor::{Dims, Tensors};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HCN1";

fn write_tensors(w: &mut impl Write, t: &Tensors) -> std::io::Result<()> {
    for slice in t.slices() {
        for v in slice {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_tensors(r: &mut impl Read, dims: Dims) -> Result<Tensors> {
    let mut t = Tensors::zeros(dims);
    let mut buf = [0u8; 8];
    for slice in t.slices_mut() {
        for v in slice.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Checkpoint(format!("truncated tensor data: {e}")))?;
            *v = f64::from_le_bytes(buf);
        }
    }
    Ok(t)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    read_u64(r).map(f64::from_bits)
}

pub fn write_checkpoint(
    w: &mut impl Write,
    params: &LstmParameters,
    opt: Option<&AdaDeltaState>,
) -> std::io::Result<()> {
    let d = params.dims();
    w.write_all(MAGIC)?;
    for n in [d.obs_size, d.action_count, d.hidden] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    write_tensors(w, &params.weights)?;
    match opt {
        None => w.write_all(&[0u8])?,
        Some(o) => {
            w.write_all(&[1u8])?;
            w.write_all(&o.rho.to_le_bytes())?;
            w.write_all(&o.epsilon.to_le_bytes())?;
            write_tensors(w, &o.grad_sq_avg)?;
            write_tensors(w, &o.update_sq_avg)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(LstmParameters, Option<AdaDeltaState>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("missing magic: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let dims = Dims {
        obs_size: read_u64(r)? as usize,
        action_count: read_u64(r)? as usize,
        hidden: read_u64(r)? as usize,
    };
    let weights = read_tensors(r, dims)?;
    let params = LstmParameters::from_tensors(dims, weights)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)
        .map_err(|e| Error::Checkpoint(format!("missing optimizer flag: {e}")))?;
    let opt = match flag[0] {
        0 => None,
        1 => {
            let rho = read_f64(r)?;
            let epsilon = read_f64(r)?;
            Some(AdaDeltaState {
                rho,
                epsilon,
                grad_sq_avg: read_tensors(r, dims)?,
                update_sq_avg: read_tensors(r, dims)?,
            })
        }
        other => return Err(Error::Checkpoint(format!("unknown optimizer flag {other}"))),
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| Error::io("checkpoint", e))?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok((params, opt))
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save_checkpoint(
    path: &Path,
    params: &LstmParameters,
    opt: Option<&AdaDeltaState>,
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        write_checkpoint(&mut w, params, opt).map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(LstmParameters, Option<AdaDeltaState>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

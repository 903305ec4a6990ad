//! Versioned binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!   magic "FFNC" | version u32 | slot count u32
//!   per slot: tag u8 (0 none, 1 conv, 2 dense, 3 batchnorm)
//!     per tensor of the slot: ndim u8, dims u32 each, then f64 data
//!
//! Round-trips are bit-exact: floats are stored as raw IEEE bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LayerParams, NetworkSpec, ParamSet};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FFNC";
pub const VERSION: u32 = 1;

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    let ndim = t.shape().len();
    if ndim > u8::MAX as usize {
        return Err(Error::Format("tensor rank too large for checkpoint".into()));
    }
    w.write_all(&[ndim as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let mut ndim = [0u8; 1];
    r.read_exact(&mut ndim)?;
    let mut shape = Vec::with_capacity(ndim[0] as usize);
    for _ in 0..ndim[0] {
        let mut d = [0u8; 4];
        r.read_exact(&mut d)?;
        shape.push(u32::from_le_bytes(d) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Tensor::from_vec(&shape, data)
}

pub fn save_params(params: &ParamSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.layers.len() as u32).to_le_bytes())?;
    for layer in &params.layers {
        match layer {
            LayerParams::None => w.write_all(&[0u8])?,
            LayerParams::Conv { w: wt, b } => {
                w.write_all(&[1u8])?;
                write_tensor(&mut w, wt)?;
                write_tensor(&mut w, b)?;
            }
            LayerParams::Dense { w: wt, b } => {
                w.write_all(&[2u8])?;
                write_tensor(&mut w, wt)?;
                write_tensor(&mut w, b)?;
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                w.write_all(&[3u8])?;
                write_tensor(&mut w, gamma)?;
                write_tensor(&mut w, beta)?;
                write_tensor(&mut w, running_mean)?;
                write_tensor(&mut w, running_var)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad checkpoint magic {:?}",
            path.display(),
            magic
        )));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            version
        )));
    }
    let mut c = [0u8; 4];
    r.read_exact(&mut c)?;
    let count = u32::from_le_bytes(c) as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        layers.push(match tag[0] {
            0 => LayerParams::None,
            1 => LayerParams::Conv {
                w: read_tensor(&mut r)?,
                b: read_tensor(&mut r)?,
            },
            2 => LayerParams::Dense {
                w: read_tensor(&mut r)?,
                b: read_tensor(&mut r)?,
            },
            3 => LayerParams::BatchNorm {
                gamma: read_tensor(&mut r)?,
                beta: read_tensor(&mut r)?,
                running_mean: read_tensor(&mut r)?,
                running_var: read_tensor(&mut r)?,
            },
            t => {
                return Err(Error::Format(format!(
                    "{}: unknown layer tag {}",
                    path.display(),
                    t
                )))
            }
        });
    }
    // trailing bytes mean a corrupt or mismatched file
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after checkpoint payload",
            path.display()
        )));
    }
    Ok(ParamSet { layers })
}

/// Load and validate against the network that will consume the params.
pub fn load_params_for(net: &NetworkSpec, path: &Path) -> Result<ParamSet> {
    let params = load_params(path)?;
    params.validate_for(net)?;
    Ok(params)
}

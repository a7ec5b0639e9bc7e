//! Portable tensor container: magic "DDCT", version u32 = 1, ndim u32,
//! dims u32 each, then the payload as little-endian binary32, row-major.
//! Values are promoted to binary64 on read.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"DDCT";
pub const TENSOR_VERSION: u32 = 1;

pub fn write_tensor(w: &mut impl Write, t: &Tensor, path: &str) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    w.write_all(TENSOR_MAGIC).map_err(io_err)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(t.rank() as u32).to_le_bytes()).map_err(io_err)?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
    }
    for &v in t.data() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::malformed("DDCT", path, "truncated"))
}

fn read_u32(r: &mut impl Read, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_tensor(r: &mut impl Read, path: &str) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, path)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::malformed("DDCT", path, format!("bad magic {magic:?}")));
    }
    let version = read_u32(r, path)?;
    if version != TENSOR_VERSION {
        return Err(Error::malformed("DDCT", path, format!("unsupported version {version}")));
    }
    let ndim = read_u32(r, path)? as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::malformed("DDCT", path, format!("implausible ndim {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u32(r, path)? as usize);
    }
    let numel: usize = shape.iter().product();
    if numel == 0 {
        return Err(Error::malformed("DDCT", path, format!("zero extent in {shape:?}")));
    }
    let mut payload = vec![0u8; numel * 4];
    read_exact(r, &mut payload, path)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Tensor::from_vec(shape, data)
}

pub fn save_tensor(t: &Tensor, path: &std::path::Path) -> Result<()> {
    let display = path.display().to_string();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    write_tensor(&mut file, t, &display)
}

pub fn load_tensor(path: &std::path::Path) -> Result<Tensor> {
    let display = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    read_tensor(&mut file, &display)
}

/// Round every element to the nearest binary32 value. Checkpoint writes do
/// this implicitly; applying it up front makes save/load round-trips exact.
pub fn quantize_f32(t: &Tensor) -> Tensor {
    t.map(|x| x as f32 as f64)
}

//! Model checkpoints: magic "DDCK", version, the full model configuration,
//! every named parameter as an embedded tensor record, the epoch counter,
//! and an optional optimizer-state section. Values are stored as binary32,
//! so a save/load round trip quantizes exactly once.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

use super::adam::AdamState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub epoch: u32,
    pub adam: Option<AdamState>,
}

fn config_words(config: &ModelConfig) -> [u32; 10] {
    [
        config.t as u32,
        config.base_channels as u32,
        config.inner_growth as u32,
        config.outer_growth as u32,
        config.inner_units as u32,
        config.outer_blocks_3d as u32,
        config.outer_blocks_2d as u32,
        config.scale as u32,
        u32::from(config.attention_in_extraction),
        u32::from(config.attention_in_fusion),
    ]
}

fn config_from_words(words: &[u32; 10], path: &str) -> Result<ModelConfig> {
    for (i, &flag) in words[8..].iter().enumerate() {
        if flag > 1 {
            return Err(Error::malformed("DDCK", path, format!("flag word {} is {flag}", 8 + i)));
        }
    }
    let config = ModelConfig {
        t: words[0] as usize,
        base_channels: words[1] as usize,
        inner_growth: words[2] as usize,
        outer_growth: words[3] as usize,
        inner_units: words[4] as usize,
        outer_blocks_3d: words[5] as usize,
        outer_blocks_2d: words[6] as usize,
        scale: words[7] as usize,
        attention_in_extraction: words[8] == 1,
        attention_in_fusion: words[9] == 1,
    };
    config.validate()?;
    Ok(config)
}

fn write_entry(w: &mut impl Write, name: &str, tensor: &Tensor, path: &str) -> Result<()> {
    let bytes = name.as_bytes();
    if bytes.len() > usize::from(u16::MAX) {
        return Err(Error::invalid("checkpoint", format!("parameter name too long: {name}")));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    write_tensor(w, tensor, path)
}

fn read_entry(r: &mut impl Read, path: &str) -> Result<(String, Tensor)> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len).map_err(|_| Error::malformed("DDCK", path, "truncated entry header"))?;
    let mut name = vec![0u8; usize::from(u16::from_le_bytes(len))];
    r.read_exact(&mut name).map_err(|_| Error::malformed("DDCK", path, "truncated entry name"))?;
    let name = String::from_utf8(name)
        .map_err(|_| Error::malformed("DDCK", path, "entry name is not UTF-8"))?;
    let tensor = read_tensor(r, path)?;
    Ok((name, tensor))
}

fn read_u32(r: &mut impl Read, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::malformed("DDCK", path, "truncated"))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_checkpoint(
    params: &ModelParams,
    config: &ModelConfig,
    adam: Option<&AdamState>,
    epoch: u32,
    path: impl AsRef<Path>,
) -> Result<()> {
    params.validate(config)?;
    if let Some(state) = adam {
        state.validate(params)?;
    }
    let display = path.as_ref().display().to_string();
    let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(&display, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(&display, e);

    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    for word in config_words(config) {
        w.write_all(&word.to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, tensor) in params.iter() {
        write_entry(&mut w, name, tensor, &display)?;
    }
    w.write_all(&epoch.to_le_bytes()).map_err(io_err)?;
    match adam {
        None => w.write_all(&[0u8]).map_err(io_err)?,
        Some(state) => {
            w.write_all(&[1u8]).map_err(io_err)?;
            w.write_all(&state.step().to_le_bytes()).map_err(io_err)?;
            let (m, v) = state.moments();
            w.write_all(&((m.len() + v.len()) as u32).to_le_bytes()).map_err(io_err)?;
            for (name, tensor) in m {
                write_entry(&mut w, &format!("{name}.m"), tensor, &display)?;
            }
            for (name, tensor) in v {
                write_entry(&mut w, &format!("{name}.v"), tensor, &display)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let display = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(&display, e))?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::malformed("DDCK", &display, "truncated"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::malformed("DDCK", &display, format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, &display)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::malformed("DDCK", &display, format!("unsupported version {version}")));
    }
    let mut words = [0u32; 10];
    for word in &mut words {
        *word = read_u32(&mut r, &display)?;
    }
    let config = config_from_words(&words, &display)?;

    let count = read_u32(&mut r, &display)? as usize;
    let mut params = ModelParams::default();
    for _ in 0..count {
        let (name, tensor) = read_entry(&mut r, &display)?;
        params.insert(name, tensor);
    }
    params.validate(&config)?;

    let epoch = read_u32(&mut r, &display)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(|_| Error::malformed("DDCK", &display, "truncated"))?;
    let adam = match flag[0] {
        0 => None,
        1 => {
            let mut step = [0u8; 8];
            r.read_exact(&mut step).map_err(|_| Error::malformed("DDCK", &display, "truncated"))?;
            let step = u64::from_le_bytes(step);
            let count = read_u32(&mut r, &display)? as usize;
            let mut m = BTreeMap::new();
            let mut v = BTreeMap::new();
            for _ in 0..count {
                let (name, tensor) = read_entry(&mut r, &display)?;
                if let Some(base) = name.strip_suffix(".m") {
                    m.insert(base.to_string(), tensor);
                } else if let Some(base) = name.strip_suffix(".v") {
                    v.insert(base.to_string(), tensor);
                } else {
                    return Err(Error::malformed(
                        "DDCK",
                        &display,
                        format!("optimizer entry '{name}' lacks a moment suffix"),
                    ));
                }
            }
            let state = AdamState::from_parts(m, v, step);
            state.validate(&params)?;
            Some(state)
        }
        other => {
            return Err(Error::malformed("DDCK", &display, format!("bad optimizer flag {other}")))
        }
    };

    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => {}
        Ok(_) => return Err(Error::malformed("DDCK", &display, "trailing bytes")),
        Err(e) => return Err(Error::io(&display, e)),
    }

    Ok(Checkpoint { config, params, epoch, adam })
}

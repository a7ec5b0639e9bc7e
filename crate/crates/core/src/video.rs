//! Frame I/O and the HR→LR degradation pipeline.
//!
//! Frames are `Tensor[3,H,W]` with values in [0,1]. The only image codec is
//! binary PPM (P6, maxval 255). A dataset is a directory per sequence holding
//! `frame_0000.ppm`, `frame_0001.ppm`, ... in temporal order, plus a manifest
//! text file listing sequence directories one per line.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ops::gaussian_blur;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Ordered odd-length window of RGB frames centered on the frame being
/// super-resolved.
#[derive(Clone, Debug)]
pub struct FrameSequence {
    frames: Vec<Tensor>,
    reference_index: usize,
}

impl FrameSequence {
    pub fn new(frames: Vec<Tensor>) -> Result<FrameSequence> {
        if frames.len() < 3 || frames.len() % 2 == 0 {
            return Err(Error::invalid(
                "frame_sequence",
                format!("need an odd number of frames >= 3, got {}", frames.len()),
            ));
        }
        let shape = frames[0].shape().to_vec();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(Error::shape("frame_sequence", "[3,H,W]", format!("{shape:?}")));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.shape() != shape {
                return Err(Error::shape(
                    "frame_sequence",
                    format!("frame 0 shape {shape:?}"),
                    format!("frame {i} shape {:?}", f.shape()),
                ));
            }
        }
        let reference_index = (frames.len() - 1) / 2;
        Ok(FrameSequence { frames, reference_index })
    }

    pub fn frames(&self) -> &[Tensor] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 3 by construction
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn reference(&self) -> &Tensor {
        &self.frames[self.reference_index]
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }

    /// Centered window of `len` frames; errors when the sequence is shorter.
    pub fn center_window(&self, len: usize) -> Result<FrameSequence> {
        if len % 2 == 0 || len < 3 {
            return Err(Error::invalid("center_window", format!("window {len} must be odd >= 3")));
        }
        if len > self.frames.len() {
            return Err(Error::invalid(
                "center_window",
                format!("window {len} exceeds sequence length {}", self.frames.len()),
            ));
        }
        let start = self.reference_index - (len - 1) / 2;
        FrameSequence::new(self.frames[start..start + len].to_vec())
    }

    pub fn map_frames(&self, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<FrameSequence> {
        let frames = self.frames.iter().map(&f).collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames)
    }
}

/// HR→LR simulation settings: Gaussian blur then decimation.
#[derive(Clone, Copy, Debug)]
pub struct DegradationConfig {
    pub sigma: f64,
    pub scale: usize,
    pub crop: usize,
}

impl Default for DegradationConfig {
    fn default() -> DegradationConfig {
        DegradationConfig { sigma: 1.6, scale: 4, crop: 256 }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma <= 0.0 {
            return Err(Error::invalid("degradation", "sigma must be positive"));
        }
        if self.scale == 0 {
            return Err(Error::invalid("degradation", "scale must be positive"));
        }
        if self.crop == 0 || self.crop % self.scale != 0 {
            return Err(Error::invalid(
                "degradation",
                format!("crop {} must be a positive multiple of scale {}", self.crop, self.scale),
            ));
        }
        Ok(())
    }
}

// ---- PPM I/O ---------------------------------------------------------------

fn read_ppm_token(reader: &mut impl BufRead, path: &Path) -> Result<String> {
    // Tokens are separated by whitespace; '#' starts a comment running to
    // end of line.
    let mut token = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match reader.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof && !token.is_empty() => break,
            Err(_) => {
                return Err(Error::malformed("ppm", path, "truncated header"));
            }
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(c);
    }
    Ok(token)
}

/// Load a binary PPM (P6, maxval 255) into a planar `[3,H,W]` tensor with
/// values in [0,1].
pub fn load_frame(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let magic = read_ppm_token(&mut reader, path)?;
    if magic != "P6" {
        return Err(Error::malformed("ppm", path, format!("magic '{magic}', expected 'P6'")));
    }
    let parse = |tok: String, what: &str| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| Error::malformed("ppm", path, format!("bad {what} '{tok}'")))
    };
    let width = parse(read_ppm_token(&mut reader, path)?, "width")?;
    let height = parse(read_ppm_token(&mut reader, path)?, "height")?;
    let maxval = parse(read_ppm_token(&mut reader, path)?, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::malformed("ppm", path, "zero dimension"));
    }
    if maxval != 255 {
        return Err(Error::malformed("ppm", path, format!("maxval {maxval}, only 255 supported")));
    }

    let mut raw = vec![0u8; width * height * 3];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::malformed("ppm", path, "truncated pixel payload"))?;

    // Interleaved RGB bytes -> planar channels.
    let plane = width * height;
    let mut data = vec![0.0f64; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = raw[i * 3 + c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(vec![3, height, width], data)
}

/// Save a `[3,H,W]` tensor in [0,1] as binary PPM. Values are scaled by 255,
/// rounded half up and clamped.
pub fn save_frame(frame: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if frame.rank() != 3 || frame.shape()[0] != 3 {
        return Err(Error::shape("save_frame", "[3,H,W]", format!("{:?}", frame.shape())));
    }
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let plane = h * w;
    let mut raw = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            let v = (frame.data()[c * plane + i] * 255.0 + 0.5).floor();
            raw.push(v.clamp(0.0, 255.0) as u8);
        }
    }
    let mut out = Vec::with_capacity(raw.len() + 32);
    write!(out, "P6\n{w} {h}\n255\n").expect("write to vec");
    out.extend_from_slice(&raw);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load every `*.ppm` in a directory, sorted by file name, as one sequence.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    if paths.is_empty() {
        return Err(Error::invalid("load_sequence", format!("no .ppm frames in {}", dir.display())));
    }
    paths.sort();
    let frames = paths.iter().map(load_frame).collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames)
}

pub fn save_sequence(seq: &FrameSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames().iter().enumerate() {
        save_frame(frame, dir.join(format!("frame_{i:04}.ppm")))?;
    }
    Ok(())
}

/// Read a manifest of sequence directories, one per line, blank lines and
/// `#` comments skipped. Relative entries resolve against the manifest's own
/// directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut dirs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = PathBuf::from(line);
        dirs.push(if p.is_absolute() { p } else { base.join(p) });
    }
    if dirs.is_empty() {
        return Err(Error::invalid("manifest", format!("{} lists no sequences", path.display())));
    }
    Ok(dirs)
}

// ---- degradation -----------------------------------------------------------

fn decimate(frame: &Tensor, scale: usize) -> Result<Tensor> {
    let (c, h, w) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
    if h % scale != 0 || w % scale != 0 {
        return Err(Error::invalid(
            "decimate",
            format!("dims {h}x{w} not divisible by scale {scale}"),
        ));
    }
    let (oh, ow) = (h / scale, w / scale);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                out.set(&[ch, y, x], frame.get(&[ch, y * scale, x * scale]));
            }
        }
    }
    Ok(out)
}

/// Per frame: Gaussian blur at `config.sigma`, then keep pixels at indices
/// {0, s, 2s, ...} on each axis.
pub fn degrade(hr: &FrameSequence, config: &DegradationConfig) -> Result<FrameSequence> {
    config.validate()?;
    hr.map_frames(|f| {
        let blurred = gaussian_blur(f, config.sigma)?;
        decimate(&blurred, config.scale)
    })
}

fn crop_frame(frame: &Tensor, top: usize, left: usize, size: usize) -> Result<Tensor> {
    let (c, h, w) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
    if top + size > h || left + size > w {
        return Err(Error::invalid(
            "crop",
            format!("window {size}x{size} at ({top},{left}) exceeds {h}x{w} frame"),
        ));
    }
    let mut out = Tensor::zeros(&[c, size, size]);
    for ch in 0..c {
        for y in 0..size {
            for x in 0..size {
                out.set(&[ch, y, x], frame.get(&[ch, top + y, left + x]));
            }
        }
    }
    Ok(out)
}

/// Crop a `crop x crop` HR window at (top, left), then degrade every frame.
/// Returns the LR sequence and the HR reference-frame crop as ground truth.
/// Offsets must be multiples of the scale so LR/HR grids stay aligned.
pub fn crop_pair(
    hr: &FrameSequence,
    top: usize,
    left: usize,
    config: &DegradationConfig,
) -> Result<(FrameSequence, Tensor)> {
    config.validate()?;
    if top % config.scale != 0 || left % config.scale != 0 {
        return Err(Error::invalid(
            "crop_pair",
            format!("offsets ({top},{left}) must be multiples of scale {}", config.scale),
        ));
    }
    let cropped = hr.map_frames(|f| crop_frame(f, top, left, config.crop))?;
    let truth = cropped.reference().clone();
    let lr = degrade(&cropped, config)?;
    Ok((lr, truth))
}

/// Seeded horizontal/vertical flips, each with probability 1/2, applied
/// identically to every LR frame and the HR truth.
pub fn augment_flip(pair: &(FrameSequence, Tensor), seed: u64) -> Result<(FrameSequence, Tensor)> {
    let mut rng = SplitMix64::new(seed);
    let hflip = rng.next_bool();
    let vflip = rng.next_bool();
    let apply = |t: &Tensor| -> Result<Tensor> {
        let mut out = t.clone();
        if hflip {
            out = out.flip_axis(2);
        }
        if vflip {
            out = out.flip_axis(1);
        }
        Ok(out)
    };
    let lr = pair.0.map_frames(apply)?;
    let truth = apply(&pair.1)?;
    Ok((lr, truth))
}

/// BT.601 limited-range luma: Y = 65.481 R + 128.553 G + 24.966 B + 16,
/// mapping [0,1] RGB to [16,235].
pub fn rgb_to_y(frame: &Tensor) -> Result<Tensor> {
    if frame.rank() != 3 || frame.shape()[0] != 3 {
        return Err(Error::shape("rgb_to_y", "[3,H,W]", format!("{:?}", frame.shape())));
    }
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let plane = h * w;
    let d = frame.data();
    let mut y = Tensor::zeros(&[1, h, w]);
    for i in 0..plane {
        y.data_mut()[i] = 65.481 * d[i] + 128.553 * d[plane + i] + 24.966 * d[2 * plane + i] + 16.0;
    }
    Ok(y)
}

/// Build (LR sequence, HR truth) training pairs from HR sequence directories.
/// Each sequence contributes one pair: a centered frame window of `frames`
/// frames and one seeded scale-aligned crop position.
pub fn assemble_dataset(
    dirs: &[PathBuf],
    frames: usize,
    config: &DegradationConfig,
    seed: u64,
) -> Result<Vec<(FrameSequence, Tensor)>> {
    config.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut dataset = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let seq = load_sequence(dir)?.center_window(frames)?;
        let (h, w) = (seq.height(), seq.width());
        if h < config.crop || w < config.crop {
            return Err(Error::invalid(
                "assemble_dataset",
                format!("{}: frames {h}x{w} smaller than crop {}", dir.display(), config.crop),
            ));
        }
        let choices_y = (h - config.crop) / config.scale + 1;
        let choices_x = (w - config.crop) / config.scale + 1;
        let top = rng.next_index(choices_y) * config.scale;
        let left = rng.next_index(choices_x) * config.scale;
        dataset.push(crop_pair(&seq, top, left, config)?);
    }
    Ok(dataset)
}

//! The named parameter table and its deterministic initialization.
//!
//! The set of parameter names, their shapes and their init rules are a pure
//! function of `ModelConfig`, enumerated by [`manifest`]. Everything that
//! consumes parameters (forward pass, optimizer, checkpoints) addresses them
//! by these names, so the manifest doubles as the checkpoint schema.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

use super::config::ModelConfig;

/// How a parameter is filled at initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamInit {
    /// Uniform(-b, b) with b = sqrt(6 / fan_in); fan_in is the product of
    /// all weight dims after the output-channel axis.
    Kaiming,
    Zero,
    One,
}

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: ParamInit,
}

/// Running batch statistics are state, not optimizable parameters.
pub fn is_trainable(name: &str) -> bool {
    !name.contains(".running_")
}

fn conv(list: &mut Vec<ManifestEntry>, name: &str, shape: Vec<usize>) {
    let bias_len = shape[0];
    list.push(ManifestEntry { name: format!("{name}.weight"), shape, init: ParamInit::Kaiming });
    list.push(ManifestEntry {
        name: format!("{name}.bias"),
        shape: vec![bias_len],
        init: ParamInit::Zero,
    });
}

fn zero_conv(list: &mut Vec<ManifestEntry>, name: &str, shape: Vec<usize>) {
    let bias_len = shape[0];
    list.push(ManifestEntry { name: format!("{name}.weight"), shape, init: ParamInit::Zero });
    list.push(ManifestEntry {
        name: format!("{name}.bias"),
        shape: vec![bias_len],
        init: ParamInit::Zero,
    });
}

fn batchnorm(list: &mut Vec<ManifestEntry>, prefix: &str, channels: usize) {
    for (field, init) in [
        ("gamma", ParamInit::One),
        ("beta", ParamInit::Zero),
        ("running_mean", ParamInit::Zero),
        ("running_var", ParamInit::One),
    ] {
        list.push(ManifestEntry {
            name: format!("{prefix}.{field}"),
            shape: vec![channels],
            init,
        });
    }
}

/// The attention projection is a bias-free 1x1x1 conv: a shared bias would
/// add the same constant to every frame's map and the per-pixel softmax over
/// frames is invariant to that, so the bias would be a dead parameter.
fn attention(list: &mut Vec<ManifestEntry>, name: &str, channels: usize) {
    list.push(ManifestEntry {
        name: format!("{name}.weight"),
        shape: vec![1, channels, 1, 1, 1],
        init: ParamInit::Kaiming,
    });
}

/// Enumerate every parameter implied by `config`, in a fixed order that also
/// defines the initialization draw order.
pub fn manifest(config: &ModelConfig) -> Result<Vec<ManifestEntry>> {
    config.validate()?;
    let b = config.base_channels;
    let g = config.inner_growth;
    let units = config.inner_units;
    let peak = config.inner_peak();
    let mut m = Vec::new();

    // Reference branch: five 3x3 convs, 3 -> b -> ... -> b.
    conv(&mut m, "ref.conv1", vec![b, 3, 3, 3]);
    for i in 2..=5 {
        conv(&mut m, &format!("ref.conv{i}"), vec![b, b, 3, 3]);
    }

    // Group branches: four (conv3d 1x3x3 -> BN -> ReLU) cells, attention
    // after cell 2, then a 1x3x3 compression.
    for branch in ["pre", "post"] {
        for cell in 1..=4 {
            let c_in = if cell == 1 { 3 } else { b };
            conv(&mut m, &format!("{branch}.cell{cell}.conv"), vec![b, c_in, 1, 3, 3]);
            batchnorm(&mut m, &format!("{branch}.cell{cell}.bn"), b);
        }
        if config.attention_in_extraction {
            attention(&mut m, &format!("{branch}.attn"), b);
        }
        conv(&mut m, &format!("{branch}.compress"), vec![b, b, 1, 3, 3]);
    }

    // Spatio-temporal fusion: outer-dense 3D blocks over the frame stack.
    for k in 1..=config.outer_blocks_3d {
        let prefix = format!("fuse3d.block{k}");
        conv(&mut m, &format!("{prefix}.entry"), vec![b, b * k, 1, 1, 1]);
        for u in 1..=units {
            let c_in = b + (u - 1) * g;
            conv(&mut m, &format!("{prefix}.unit{u}"), vec![g, c_in, 3, 3, 3]);
        }
        if config.attention_in_fusion {
            attention(&mut m, &format!("{prefix}.attn"), peak);
        }
        conv(&mut m, &format!("{prefix}.exit"), vec![b, peak, 1, 1, 1]);
    }
    conv(&mut m, "fuse3d.final", vec![b, b * (config.outer_blocks_3d + 1), 1, 1, 1]);
    conv(&mut m, "fuse.collapse", vec![b, b * config.fusion_depth(), 3, 3]);

    // Reconstruction: outer-dense 2D blocks; units are a 1x1 reduction then
    // a 3x3 conv; block exit compression is 3x3.
    for k in 1..=config.outer_blocks_2d {
        let prefix = format!("recon2d.block{k}");
        conv(&mut m, &format!("{prefix}.entry"), vec![b, b * k, 1, 1]);
        for u in 1..=units {
            let c_in = b + (u - 1) * g;
            conv(&mut m, &format!("{prefix}.unit{u}.reduce"), vec![g, c_in, 1, 1]);
            conv(&mut m, &format!("{prefix}.unit{u}.conv"), vec![g, g, 3, 3]);
        }
        conv(&mut m, &format!("{prefix}.exit"), vec![b, peak, 3, 3]);
    }
    conv(&mut m, "recon2d.final", vec![b, b * (config.outer_blocks_2d + 1), 1, 1]);

    // Sub-pixel head, zero-initialized so a fresh model reduces to the
    // bicubic upsample of the reference frame.
    zero_conv(&mut m, "upsample", vec![3 * config.scale * config.scale, b, 3, 3]);

    Ok(m)
}

/// Named parameter table.
#[derive(Clone, Debug, Default)]
pub struct ModelParams {
    values: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.values
            .get(name)
            .ok_or_else(|| Error::invalid("params", format!("unknown parameter '{name}'")))
    }

    /// Replace a parameter's value; the shape must match the existing entry.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .values
            .get_mut(name)
            .ok_or_else(|| Error::invalid("params", format!("unknown parameter '{name}'")))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(
                "params",
                format!("{:?} for '{name}'", slot.shape()),
                format!("{:?}", value.shape()),
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn insert(&mut self, name: String, value: Tensor) {
        self.values.insert(name, value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.values.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.values.keys()
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.values.iter().filter(|(n, _)| is_trainable(n))
    }

    /// Total scalar count across all entries.
    pub fn scalar_count(&self) -> usize {
        self.values.values().map(Tensor::numel).sum()
    }

    /// Check that the table holds exactly the names and shapes `config`
    /// implies.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let expected = manifest(config)?;
        if expected.len() != self.values.len() {
            return Err(Error::ManifestMismatch(format!(
                "expected {} entries, found {}",
                expected.len(),
                self.values.len()
            )));
        }
        for entry in &expected {
            let t = self.values.get(&entry.name).ok_or_else(|| {
                Error::ManifestMismatch(format!("missing parameter '{}'", entry.name))
            })?;
            if t.shape() != entry.shape.as_slice() {
                return Err(Error::ManifestMismatch(format!(
                    "'{}': expected shape {:?}, found {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Round every value to binary32 and back, the precision used on disk.
    pub fn quantized(&self) -> ModelParams {
        let values = self
            .values
            .iter()
            .map(|(n, t)| (n.clone(), t.map(|v| v as f32 as f64)))
            .collect();
        ModelParams { values }
    }
}

impl FromIterator<(String, Tensor)> for ModelParams {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ModelParams { values: iter.into_iter().collect() }
    }
}

/// Deterministic initialization: one PRNG stream, manifest order.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let entries = manifest(config)?;
    let mut rng = SplitMix64::new(seed);
    let mut params = ModelParams::default();
    for entry in entries {
        let t = match entry.init {
            ParamInit::Zero => Tensor::zeros(&entry.shape),
            ParamInit::One => Tensor::full(&entry.shape, 1.0),
            ParamInit::Kaiming => {
                let fan_in: usize = entry.shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                let n: usize = entry.shape.iter().product();
                let data = (0..n).map(|_| rng.next_uniform(bound)).collect();
                Tensor::from_vec(entry.shape.clone(), data)?
            }
        };
        params.insert(entry.name, t);
    }
    Ok(params)
}

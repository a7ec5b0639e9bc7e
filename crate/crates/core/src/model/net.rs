//! The super-resolution network assembled on the autodiff graph.
//!
//! Dataflow: split the frame window into pre/reference/post groups sharing
//! the center frame; extract features per group (3D convs with temporal
//! attention) and for the reference frame (2D convs); stack everything along
//! the temporal axis and fuse it with outer-dense 3D blocks; reconstruct with
//! outer-dense 2D blocks; pixel-shuffle to 4x and add the bicubic upsample of
//! the reference frame as a residual base.

use std::collections::BTreeMap;

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::ops::BnMode;
use crate::tensor::Tensor;
use crate::video::FrameSequence;

use super::config::ModelConfig;
use super::params::{is_trainable, ModelParams};

/// The {pre, reference, post} split of a frame window. Both groups contain
/// the reference frame: pre holds frames -T..0, post holds 0..T.
#[derive(Clone, Debug)]
pub struct TemporalGroups {
    /// `[3, T+1, H, W]`, frames -T..0 in temporal order.
    pub pre: Tensor,
    /// `[3, H, W]`, the center frame.
    pub reference: Tensor,
    /// `[3, T+1, H, W]`, frames 0..T in temporal order.
    pub post: Tensor,
}

fn stack_frames(frames: &[Tensor]) -> Result<Tensor> {
    let parts: Vec<Tensor> = frames
        .iter()
        .map(|f| {
            let s = f.shape();
            f.reshape(vec![s[0], 1, s[1], s[2]])
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat(1, &refs)
}

pub fn build_groups(frames: &FrameSequence, t: usize) -> Result<TemporalGroups> {
    if frames.len() != 2 * t + 1 {
        return Err(Error::invalid(
            "build_groups",
            format!("expected 2T+1 = {} frames, got {}", 2 * t + 1, frames.len()),
        ));
    }
    let all = frames.frames();
    Ok(TemporalGroups {
        pre: stack_frames(&all[..=t])?,
        reference: all[t].clone(),
        post: stack_frames(&all[t..])?,
    })
}

/// Channel widths observed while building the graph, for growth-arithmetic
/// assertions. Labels repeat; `channels` returns every hit in push order.
#[derive(Clone, Debug, Default)]
pub struct ShapeTrace {
    entries: Vec<(String, usize)>,
}

impl ShapeTrace {
    fn push(&mut self, label: String, channels: usize) {
        self.entries.push((label, channels));
    }

    pub fn channels(&self, label: &str) -> Vec<usize> {
        self.entries.iter().filter(|(l, _)| l == label).map(|&(_, c)| c).collect()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }
}

/// A batch-statistics update produced by one train-mode forward pass; the
/// trainer folds these back into the parameter table.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    /// Site prefix, e.g. "pre.cell1.bn".
    pub prefix: String,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

/// Output handles of one forward construction.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// The super-resolved frame, `[3, 4H, 4W]`.
    pub output: Var,
    /// Bicubic upsample of the reference frame (the residual base), kept for
    /// the upsampling loss term.
    pub upsampled: Var,
}

/// One network evaluation: binds a parameter table into a fresh graph and
/// exposes the architecture's stages as graph builders.
pub struct Net<'a> {
    config: &'a ModelConfig,
    mode: BnMode,
    graph: Graph,
    param_vars: BTreeMap<String, Var>,
    running: BTreeMap<String, (Tensor, Tensor)>,
    pub bn_updates: Vec<BnUpdate>,
    pub trace: ShapeTrace,
}

impl<'a> Net<'a> {
    pub fn new(params: &ModelParams, config: &'a ModelConfig, mode: BnMode) -> Result<Net<'a>> {
        params.validate(config)?;
        let mut graph = Graph::new();
        let mut param_vars = BTreeMap::new();
        let mut running: BTreeMap<String, (Tensor, Tensor)> = BTreeMap::new();
        for (name, tensor) in params.iter() {
            if is_trainable(name) {
                param_vars.insert(name.clone(), graph.input(tensor.clone()));
            } else if let Some(prefix) = name.strip_suffix(".running_mean") {
                running.entry(prefix.to_string()).or_insert_with(|| (Tensor::zeros(&[1]), Tensor::zeros(&[1]))).0 =
                    tensor.clone();
            } else if let Some(prefix) = name.strip_suffix(".running_var") {
                running.entry(prefix.to_string()).or_insert_with(|| (Tensor::zeros(&[1]), Tensor::zeros(&[1]))).1 =
                    tensor.clone();
            }
        }
        Ok(Net {
            config,
            mode,
            graph,
            param_vars,
            running,
            bn_updates: Vec::new(),
            trace: ShapeTrace::default(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    pub fn graph(&mut self) -> &mut Graph {
        &mut self.graph
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.graph.input(value)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        self.graph.value(var)
    }

    pub fn param_var(&self, name: &str) -> Result<Var> {
        self.param_vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid("net", format!("no bound parameter '{name}'")))
    }

    fn p(&self, name: &str) -> Result<Var> {
        self.param_var(name)
    }

    /// Convolution site `{prefix}.weight` / `{prefix}.bias`; dimensionality
    /// follows the weight rank (4 = 2D, 5 = 3D).
    fn conv_p(&mut self, input: Var, prefix: &str) -> Result<Var> {
        let w = self.p(&format!("{prefix}.weight"))?;
        let b = self.p(&format!("{prefix}.bias"))?;
        match self.graph.value(w).rank() {
            4 => self.graph.conv2d(input, w, b),
            5 => self.graph.conv3d(input, w, b),
            r => Err(Error::invalid("net", format!("'{prefix}.weight' has rank {r}"))),
        }
    }

    fn bn_p(&mut self, input: Var, prefix: &str) -> Result<Var> {
        let gamma = self.p(&format!("{prefix}.gamma"))?;
        let beta = self.p(&format!("{prefix}.beta"))?;
        let (rm, rv) = self
            .running
            .get(prefix)
            .cloned()
            .ok_or_else(|| Error::invalid("net", format!("no running stats for '{prefix}'")))?;
        let (out, updated) = self.graph.batchnorm(
            input,
            gamma,
            beta,
            &rm,
            &rv,
            crate::ops::BN_MOMENTUM,
            crate::ops::BN_EPSILON,
            self.mode,
        )?;
        if let Some((running_mean, running_var)) = updated {
            self.bn_updates.push(BnUpdate { prefix: prefix.to_string(), running_mean, running_var });
        }
        Ok(out)
    }

    /// Per-pixel softmax over the frame axis. `features` is `[C,N,H,W]`; the
    /// projection collapses channels to a one-channel map per frame, softmax
    /// over the N frames yields weights that rescale every channel.
    pub fn temporal_attention(&mut self, features: Var, projection: Var) -> Result<Var> {
        let fs = self.graph.shape(features).to_vec();
        let ps = self.graph.shape(projection).to_vec();
        if fs.len() != 4 || ps != [1, fs[0], 1, 1, 1] {
            return Err(Error::shape(
                "temporal_attention",
                format!("features [C,N,H,W] with projection [1,{},1,1,1]", fs.first().unwrap_or(&0)),
                format!("features {fs:?}, projection {ps:?}"),
            ));
        }
        let zero_bias = self.graph.input(Tensor::zeros(&[1]));
        let maps = self.graph.conv3d(features, projection, zero_bias)?;
        let weights = self.graph.softmax_axis(maps, 1)?;
        self.graph.mul_broadcast_channel(features, weights)
    }

    /// Five 3x3 convs on the reference frame, ReLU after the first four.
    pub fn extract_reference_features(&mut self, frame: Var) -> Result<Var> {
        let mut x = frame;
        for i in 1..=5 {
            x = self.conv_p(x, &format!("ref.conv{i}"))?;
            if i < 5 {
                x = self.graph.relu(x);
            }
        }
        Ok(x)
    }

    /// Group branch: four (conv3d 1x3x3 -> BN -> ReLU) cells with temporal
    /// attention after cell 2, then a 1x3x3 compression. `branch` is "pre"
    /// or "post"; the branches have separate parameters.
    pub fn extract_group_features(&mut self, branch: &str, group: Var, attention_on: bool) -> Result<Var> {
        let mut x = group;
        for cell in 1..=4 {
            x = self.conv_p(x, &format!("{branch}.cell{cell}.conv"))?;
            x = self.bn_p(x, &format!("{branch}.cell{cell}.bn"))?;
            x = self.graph.relu(x);
            if cell == 2 && attention_on {
                let proj = self.p(&format!("{branch}.attn.weight"))?;
                x = self.temporal_attention(x, proj)?;
            }
        }
        self.conv_p(x, &format!("{branch}.compress"))
    }

    /// Inner dense 3D block: 1x1x1 entry compression to the trunk width,
    /// `inner_units` dense conv3d(3x3x3)+ReLU units, optional temporal
    /// attention on the full concatenation, 1x1x1 exit compression.
    pub fn ddcn_inner_3d(&mut self, prefix: &str, input: Var, attention_on: bool) -> Result<Var> {
        let mut x = self.conv_p(input, &format!("{prefix}.entry"))?;
        self.trace.push(format!("{prefix}.width"), self.graph.shape(x)[0]);
        for u in 1..=self.config.inner_units {
            let y = self.conv_p(x, &format!("{prefix}.unit{u}"))?;
            let y = self.graph.relu(y);
            x = self.graph.concat(0, &[x, y])?;
            self.trace.push(format!("{prefix}.width"), self.graph.shape(x)[0]);
        }
        if attention_on {
            let proj = self.p(&format!("{prefix}.attn.weight"))?;
            x = self.temporal_attention(x, proj)?;
        }
        self.conv_p(x, &format!("{prefix}.exit"))
    }

    /// Inner dense 2D block: 1x1 entry compression, dense units of
    /// (1x1 reduce + ReLU, 3x3 conv + ReLU), 3x3 exit compression.
    pub fn ddcn_inner_2d(&mut self, prefix: &str, input: Var) -> Result<Var> {
        let mut x = self.conv_p(input, &format!("{prefix}.entry"))?;
        self.trace.push(format!("{prefix}.width"), self.graph.shape(x)[0]);
        for u in 1..=self.config.inner_units {
            let r = self.conv_p(x, &format!("{prefix}.unit{u}.reduce"))?;
            let r = self.graph.relu(r);
            let y = self.conv_p(r, &format!("{prefix}.unit{u}.conv"))?;
            let y = self.graph.relu(y);
            x = self.graph.concat(0, &[x, y])?;
            self.trace.push(format!("{prefix}.width"), self.graph.shape(x)[0]);
        }
        self.conv_p(x, &format!("{prefix}.exit"))
    }

    /// Outer dense circulation: block k sees the concatenation of the input
    /// and all previous block outputs (width base*k), and the final
    /// compression `{scope}.final` sees base*(blocks+1).
    pub fn ddcn_outer<F>(&mut self, scope: &str, input: Var, blocks: usize, mut inner: F) -> Result<Var>
    where
        F: FnMut(&mut Self, usize, Var) -> Result<Var>,
    {
        let base = self.config.base_channels;
        let mut outs = vec![input];
        for k in 1..=blocks {
            let refs: Vec<Var> = outs.clone();
            let cat = self.graph.concat(0, &refs)?;
            self.trace.push(format!("{scope}.block{k}.in"), self.graph.shape(cat)[0]);
            let out = inner(self, k, cat)?;
            let c = self.graph.shape(out)[0];
            if c != base {
                return Err(Error::shape(
                    "ddcn_outer",
                    format!("inner block emitting {base} channels"),
                    format!("{c} channels from block {k}"),
                ));
            }
            outs.push(out);
        }
        let cat = self.graph.concat(0, &outs)?;
        self.trace.push(format!("{scope}.final.in"), self.graph.shape(cat)[0]);
        self.conv_p(cat, &format!("{scope}.final"))
    }

    /// Stack [pre frames, reference, post frames] along the temporal axis,
    /// fuse with outer-dense 3D blocks, flatten channel x temporal, and
    /// collapse to trunk width with a 3x3 conv.
    pub fn fuse_groups(&mut self, pre: Var, reference: Var, post: Var) -> Result<Var> {
        let c = self.graph.shape(reference)[0];
        let (h, w) = (self.graph.shape(reference)[1], self.graph.shape(reference)[2]);
        let ref4 = self.graph.reshape(reference, vec![c, 1, h, w])?;
        let stack = self.graph.concat(1, &[pre, ref4, post])?;
        let depth = self.graph.shape(stack)[1];
        let attention_on = self.config.attention_in_fusion;
        let blocks = self.config.outer_blocks_3d;
        let fused = self.ddcn_outer("fuse3d", stack, blocks, |net, k, x| {
            net.ddcn_inner_3d(&format!("fuse3d.block{k}"), x, attention_on)
        })?;
        let flat = self.graph.reshape(fused, vec![c * depth, h, w])?;
        self.conv_p(flat, "fuse.collapse")
    }

    /// Outer-dense 2D reconstruction, 3x3 conv to 3*scale^2 channels,
    /// pixel shuffle, plus the bicubic upsample of the reference frame.
    pub fn reconstruct(&mut self, features: Var, reference: Var) -> Result<ForwardVars> {
        let blocks = self.config.outer_blocks_2d;
        let dense = self.ddcn_outer("recon2d", features, blocks, |net, k, x| {
            net.ddcn_inner_2d(&format!("recon2d.block{k}"), x)
        })?;
        let expanded = self.conv_p(dense, "upsample")?;
        let shuffled = self.graph.pixel_shuffle(expanded, self.config.scale)?;
        let upsampled = self.graph.bicubic_resize(reference, self.config.scale as f64)?;
        let output = self.graph.add(shuffled, upsampled)?;
        Ok(ForwardVars { output, upsampled })
    }

    /// Full forward construction from a frame window.
    pub fn forward(&mut self, frames: &FrameSequence) -> Result<ForwardVars> {
        if frames.len() != self.config.frames() {
            return Err(Error::invalid(
                "forward",
                format!("expected 2T+1 = {} frames, got {}", self.config.frames(), frames.len()),
            ));
        }
        let groups = build_groups(frames, self.config.t)?;
        let pre = self.graph.input(groups.pre);
        let reference = self.graph.input(groups.reference);
        let post = self.graph.input(groups.post);

        let f_ref = self.extract_reference_features(reference)?;
        let attn = self.config.attention_in_extraction;
        let f_pre = self.extract_group_features("pre", pre, attn)?;
        let f_post = self.extract_group_features("post", post, attn)?;
        let fused = self.fuse_groups(f_pre, f_ref, f_post)?;
        self.reconstruct(fused, reference)
    }

    /// Mean absolute difference as a scalar graph node.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.graph.sub(a, b)?;
        let d = self.graph.abs(d);
        Ok(self.graph.mean(d))
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.graph.backward(loss)
    }

    /// Collect gradients for every trainable parameter; parameters with no
    /// path to the loss get zeros.
    pub fn param_grads(&self, grads: &mut Gradients) -> BTreeMap<String, Tensor> {
        self.param_vars
            .iter()
            .map(|(name, &var)| {
                let g = grads
                    .take(var)
                    .unwrap_or_else(|| Tensor::zeros(self.graph.value(var).shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

/// Evaluation-mode forward pass returning the super-resolved frame.
pub fn forward(frames: &FrameSequence, params: &ModelParams, config: &ModelConfig) -> Result<Tensor> {
    let mut net = Net::new(params, config, BnMode::Eval)?;
    let vars = net.forward(frames)?;
    Ok(net.value(vars.output).clone())
}

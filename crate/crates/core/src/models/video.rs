use serde::{Deserialize, Serialize};

use super::{conv_shape, Head, Network};
use crate::error::{Error, Result};
use crate::tensor::{BoundParams, ConvGeometry, PoolGeometry, Tape, Var};

pub const BLOCKS_PER_MODULE: usize = 2;
const STEM_KERNEL: [usize; 3] = [7, 7, 7];
const STEM_STRIDE: [usize; 3] = [1, 2, 2];
const STEM_PAD: [usize; 3] = [3, 3, 3];
const POOL_KERNEL: [usize; 3] = [3, 3, 3];
const POOL_STRIDE: [usize; 3] = [1, 2, 2];
const POOL_PAD: [usize; 3] = [1, 1, 1];

/// 7×7×7 stem, 3×3×3 max-pool, then residual modules of two bottlenecks
/// each. A bottleneck is a 1×1×1 reduction, channel attention in place of
/// the usual 3×3×3 middle convolution, and a 1×1×1 expansion, added to the
/// shortcut. Modules after the first halve the spatial extent on entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoNetConfig {
    pub stem_channels: usize,
    pub widths: Vec<usize>,
    pub expansion: usize,
    pub reduction: usize,
    pub head: Head,
}

struct Block {
    prefix: String,
    in_ch: usize,
    width: usize,
    out_ch: usize,
    stride: usize,
}

impl Block {
    fn projects(&self) -> bool {
        self.in_ch != self.out_ch || self.stride != 1
    }
}

impl VideoNetConfig {
    pub fn new(head: Head) -> Self {
        VideoNetConfig {
            stem_channels: 64,
            widths: vec![64, 128, 256],
            expansion: 4,
            reduction: 4,
            head,
        }
    }

    pub fn desk(head: Head) -> Self {
        VideoNetConfig {
            stem_channels: 8,
            widths: vec![4, 8, 8],
            expansion: 4,
            reduction: 4,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::config("video network needs at least one residual module"));
        }
        if self.stem_channels == 0 || self.expansion == 0 || self.reduction == 0 {
            return Err(Error::config("video stem, expansion and reduction must be positive"));
        }
        for &w in &self.widths {
            if w == 0 || w % self.reduction != 0 {
                return Err(Error::config(format!(
                    "module width {w} must be a positive multiple of the reduction ratio {}",
                    self.reduction
                )));
            }
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        let mut in_ch = self.stem_channels;
        for (m, &width) in self.widths.iter().enumerate() {
            for b in 0..BLOCKS_PER_MODULE {
                let out_ch = width * self.expansion;
                out.push(Block {
                    prefix: format!("layer{m}.block{b}"),
                    in_ch,
                    width,
                    out_ch,
                    stride: if m > 0 && b == 0 { 2 } else { 1 },
                });
                in_ch = out_ch;
            }
        }
        out
    }

    fn out_channels(&self) -> usize {
        self.widths.last().copied().unwrap_or(0) * self.expansion
    }

    /// Activation shapes after the stem and after the pool for an input of
    /// shape `[N, 3, T, H, W]`.
    pub fn stem_shapes(&self, input: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let w = conv_shape(self.stem_channels, 3, &STEM_KERNEL);
        let stem = ConvGeometry::new(input, &w, STEM_STRIDE, STEM_PAD)?.output_shape();
        let pool = PoolGeometry::new(&stem, POOL_KERNEL, POOL_STRIDE, POOL_PAD)?.output_shape();
        Ok((stem, pool))
    }

    fn bottleneck(&self, tape: &mut Tape, params: &BoundParams, x: Var, block: &Block) -> Result<Var> {
        let p = |s: &str| params.var(&format!("{}.{s}", block.prefix));
        let stride = [1, block.stride, block.stride];
        let h = tape.conv3d(x, p("reduce.weight")?, Some(p("reduce.bias")?), stride, [0; 3])?;
        let h = tape.relu(h);
        let h = tape.channel_attention(h, p("attn.w1")?, p("attn.w2")?)?;
        let h = tape.conv3d(h, p("expand.weight")?, Some(p("expand.bias")?), [1; 3], [0; 3])?;
        let shortcut = if block.projects() {
            tape.conv3d(x, p("proj.weight")?, Some(p("proj.bias")?), stride, [0; 3])?
        } else {
            x
        };
        let sum = tape.add(h, shortcut)?;
        Ok(tape.relu(sum))
    }
}

impl Network for VideoNetConfig {
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("stem.weight".to_string(), conv_shape(self.stem_channels, 3, &STEM_KERNEL)),
            ("stem.bias".to_string(), vec![self.stem_channels]),
        ];
        for b in self.blocks() {
            let hidden = (b.width / self.reduction).max(1);
            let name = |s: &str| format!("{}.{s}", b.prefix);
            out.push((name("reduce.weight"), conv_shape(b.width, b.in_ch, &[1, 1, 1])));
            out.push((name("reduce.bias"), vec![b.width]));
            out.push((name("attn.w1"), vec![b.width, hidden]));
            out.push((name("attn.w2"), vec![hidden, b.width]));
            out.push((name("expand.weight"), conv_shape(b.out_ch, b.width, &[1, 1, 1])));
            out.push((name("expand.bias"), vec![b.out_ch]));
            if b.projects() {
                out.push((name("proj.weight"), conv_shape(b.out_ch, b.in_ch, &[1, 1, 1])));
                out.push((name("proj.bias"), vec![b.out_ch]));
            }
        }
        out.push(("head.weight".into(), vec![self.out_channels(), 1]));
        out.push(("head.bias".into(), vec![1]));
        out
    }

    fn head(&self) -> Head {
        self.head
    }

    /// `x` is `[N, 3, T, H, W]`.
    fn forward(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Result<Var> {
        self.validate()?;
        let xs = tape.shape(x).to_vec();
        if xs.len() != 5 || xs[1] != 3 {
            return Err(Error::shape("video_forward", format!("expected [N, 3, T, H, W], got {xs:?}")));
        }
        let (w, b) = (params.var("stem.weight")?, params.var("stem.bias")?);
        let h = tape.conv3d(x, w, Some(b), STEM_STRIDE, STEM_PAD)?;
        let h = tape.relu(h);
        let mut h = tape.maxpool3d(h, POOL_KERNEL, POOL_STRIDE, POOL_PAD)?;
        for block in self.blocks() {
            h = self.bottleneck(tape, params, h, &block)?;
        }
        let pooled = tape.adaptive_avg_pool(h)?;
        let n = tape.shape(pooled)[0];
        let flat = tape.reshape(pooled, &[n, self.out_channels()])?;
        let (w, b) = (params.var("head.weight")?, params.var("head.bias")?);
        let logits = tape.linear(flat, w, Some(b))?;
        Ok(self.head.apply(tape, logits))
    }
}

use serde::{Deserialize, Serialize};

use super::{conv_shape, halving_window, Head, Network};
use crate::error::{Error, Result};
use crate::tensor::{BoundParams, Tape, Var};

pub const AUDIO_LAYERS: usize = 5;

/// Five 3×3 stride-1 convolutions, each followed by ReLU and a 2×2 max-pool
/// on every axis still at least 2 wide, then temporal attention over the
/// remaining frames and a scalar head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioNetConfig {
    pub widths: Vec<usize>,
    pub n_mels: usize,
    pub attention_hidden: usize,
    pub head: Head,
}

impl AudioNetConfig {
    pub fn new(head: Head) -> Self {
        AudioNetConfig {
            widths: vec![16, 32, 64, 64, 128],
            n_mels: 64,
            attention_hidden: 64,
            head,
        }
    }

    pub fn desk(head: Head) -> Self {
        AudioNetConfig {
            widths: vec![8, 16, 16, 32, 32],
            n_mels: 64,
            attention_hidden: 16,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != AUDIO_LAYERS || self.widths.contains(&0) {
            return Err(Error::config(format!(
                "audio network needs {AUDIO_LAYERS} positive widths, got {:?}",
                self.widths
            )));
        }
        if self.n_mels == 0 || self.attention_hidden == 0 {
            return Err(Error::config("audio n_mels and attention width must be positive"));
        }
        Ok(())
    }

    /// Mel extent left after the pooling stack.
    fn pooled_mels(&self) -> usize {
        (0..AUDIO_LAYERS).fold(self.n_mels, |m, _| if m >= 2 { m / 2 } else { m })
    }

    fn feature_dim(&self) -> usize {
        self.widths[AUDIO_LAYERS - 1] * self.pooled_mels()
    }
}

impl Network for AudioNetConfig {
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = 1;
        for (i, &w) in self.widths.iter().enumerate() {
            out.push((format!("conv{i}.weight"), conv_shape(w, c_in, &[3, 3])));
            out.push((format!("conv{i}.bias"), vec![w]));
            c_in = w;
        }
        let d = self.feature_dim();
        out.push(("attn.u".into(), vec![d, self.attention_hidden]));
        out.push(("attn.v".into(), vec![self.attention_hidden, 1]));
        out.push(("head.weight".into(), vec![d, 1]));
        out.push(("head.bias".into(), vec![1]));
        out
    }

    fn head(&self) -> Head {
        self.head
    }

    /// `x` is `[N, 1, n_mels, frames]`.
    fn forward(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Result<Var> {
        self.validate()?;
        let xs = tape.shape(x).to_vec();
        if xs.len() != 4 || xs[1] != 1 || xs[2] != self.n_mels {
            return Err(Error::shape(
                "audio_forward",
                format!("expected [N, 1, {}, frames], got {xs:?}", self.n_mels),
            ));
        }
        let mut h = x;
        for i in 0..AUDIO_LAYERS {
            let w = params.var(&format!("conv{i}.weight"))?;
            let b = params.var(&format!("conv{i}.bias"))?;
            h = tape.conv2d(h, w, Some(b), [1, 1], [1, 1])?;
            h = tape.relu(h);
            let window = halving_window(&tape.shape(h)[2..]);
            if window.iter().any(|&k| k > 1) {
                h = tape.maxpool2d(h, [window[0], window[1]], [window[0], window[1]])?;
            }
        }
        let s = tape.shape(h).to_vec();
        let seq = tape.reshape(h, &[s[0], s[1] * s[2], s[3]])?;
        let (u, v) = (params.var("attn.u")?, params.var("attn.v")?);
        let (pooled, _) = tape.temporal_attention(seq, u, v)?;
        let w = params.var("head.weight")?;
        let b = params.var("head.bias")?;
        let logits = tape.linear(pooled, w, Some(b))?;
        Ok(self.head.apply(tape, logits))
    }
}

use serde::{Deserialize, Serialize};

use super::{conv_shape, halving_window, Head, Network};
use crate::error::{Error, Result};
use crate::tensor::{BoundParams, Tape, Tensor, Var};

const GATES: [&str; 4] = ["i", "f", "g", "o"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Single-layer LSTM over per-frame channel means.
    Lstm { hidden: usize },
    /// Stack of 3×3×3 convolution, ReLU and max-pool stages.
    Plain3dCnn { channels: Vec<usize> },
}

/// Reference video models without attention. Both take `[N, 3, T, H, W]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub head: Head,
}

impl BaselineConfig {
    pub fn lstm(head: Head) -> Self {
        BaselineConfig {
            kind: BaselineKind::Lstm { hidden: 128 },
            head,
        }
    }

    pub fn plain_3dcnn(head: Head) -> Self {
        BaselineConfig {
            kind: BaselineKind::Plain3dCnn {
                channels: vec![32, 64, 128, 256],
            },
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            BaselineKind::Lstm { hidden: 0 } => Err(Error::config("lstm hidden size must be positive")),
            BaselineKind::Plain3dCnn { channels } if channels.len() != 4 || channels.contains(&0) => {
                Err(Error::config(format!("3d cnn needs 4 positive widths, got {channels:?}")))
            }
            _ => Ok(()),
        }
    }

    fn features(&self) -> usize {
        match &self.kind {
            BaselineKind::Lstm { hidden } => *hidden,
            BaselineKind::Plain3dCnn { channels } => channels.last().copied().unwrap_or(0),
        }
    }

    fn run_lstm(&self, tape: &mut Tape, params: &BoundParams, x: Var, hidden: usize) -> Result<Var> {
        let feats = tape.spatial_mean(x)?;
        let (n, t) = {
            let s = tape.shape(feats);
            (s[0], s[2])
        };
        let mut h = tape.constant(Tensor::zeros(vec![n, hidden]));
        let mut c = tape.constant(Tensor::zeros(vec![n, hidden]));
        for step in 0..t {
            let xt = tape.select_last(feats, step)?;
            let mut gates = Vec::with_capacity(4);
            for g in GATES {
                let w = params.var(&format!("lstm.w_{g}"))?;
                let u = params.var(&format!("lstm.u_{g}"))?;
                let b = params.var(&format!("lstm.b_{g}"))?;
                let from_x = tape.linear(xt, w, Some(b))?;
                let from_h = tape.linear(h, u, None)?;
                let pre = tape.add(from_x, from_h)?;
                gates.push(if g == "g" { tape.tanh(pre) } else { tape.sigmoid(pre) });
            }
            let keep = tape.mul(gates[1], c)?;
            let write = tape.mul(gates[0], gates[2])?;
            c = tape.add(keep, write)?;
            let squashed = tape.tanh(c);
            h = tape.mul(gates[3], squashed)?;
        }
        Ok(h)
    }

    fn run_cnn(&self, tape: &mut Tape, params: &BoundParams, x: Var, stages: usize) -> Result<Var> {
        let mut h = x;
        for i in 0..stages {
            let w = params.var(&format!("conv{i}.weight"))?;
            let b = params.var(&format!("conv{i}.bias"))?;
            h = tape.conv3d(h, w, Some(b), [1; 3], [1; 3])?;
            h = tape.relu(h);
            let k = halving_window(&tape.shape(h)[2..]);
            if k.iter().any(|&v| v > 1) {
                let k = [k[0], k[1], k[2]];
                h = tape.maxpool3d(h, k, k, [0; 3])?;
            }
        }
        let pooled = tape.adaptive_avg_pool(h)?;
        let n = tape.shape(pooled)[0];
        tape.reshape(pooled, &[n, self.features()])
    }
}

impl Network for BaselineConfig {
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        match &self.kind {
            BaselineKind::Lstm { hidden } => {
                for g in GATES {
                    out.push((format!("lstm.w_{g}"), vec![3, *hidden]));
                    out.push((format!("lstm.u_{g}"), vec![*hidden, *hidden]));
                    out.push((format!("lstm.b_{g}"), vec![*hidden]));
                }
            }
            BaselineKind::Plain3dCnn { channels } => {
                let mut c_in = 3;
                for (i, &c) in channels.iter().enumerate() {
                    out.push((format!("conv{i}.weight"), conv_shape(c, c_in, &[3, 3, 3])));
                    out.push((format!("conv{i}.bias"), vec![c]));
                    c_in = c;
                }
            }
        }
        out.push(("head.weight".into(), vec![self.features(), 1]));
        out.push(("head.bias".into(), vec![1]));
        out
    }

    fn head(&self) -> Head {
        self.head
    }

    fn forward(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Result<Var> {
        self.validate()?;
        let xs = tape.shape(x).to_vec();
        if xs.len() != 5 || xs[1] != 3 {
            return Err(Error::shape("baseline_forward", format!("expected [N, 3, T, H, W], got {xs:?}")));
        }
        let feats = match &self.kind {
            BaselineKind::Lstm { hidden } => self.run_lstm(tape, params, x, *hidden)?,
            BaselineKind::Plain3dCnn { channels } => self.run_cnn(tape, params, x, channels.len())?,
        };
        let (w, b) = (params.var("head.weight")?, params.var("head.bias")?);
        let logits = tape.linear(feats, w, Some(b))?;
        Ok(self.head.apply(tape, logits))
    }
}

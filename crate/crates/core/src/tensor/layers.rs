//! Attention blocks built from primitive tape ops.

use super::{Tape, Var};
use crate::error::{Error, Result};

impl Tape {
    /// Squeeze-excitation gating of `x[N, C, ...]`:
    /// `g = sigmoid(relu(mean(x) · w1) · w2)`, output `x` scaled per channel by `g`.
    /// `w1` is `[C, C/r]`, `w2` is `[C/r, C]`.
    pub fn channel_attention(&mut self, x: Var, w1: Var, w2: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (s1, s2) = (self.shape(w1).to_vec(), self.shape(w2).to_vec());
        if xs.len() < 3 || s1.len() != 2 || s2.len() != 2 || s1[0] != xs[1] || s2 != [s1[1], xs[1]] {
            return Err(Error::shape(
                "channel_attention",
                format!("weights {s1:?}, {s2:?} do not fit input {xs:?}"),
            ));
        }
        if xs[1] % s1[1] != 0 {
            return Err(Error::shape(
                "channel_attention",
                format!("hidden width {} does not divide {} channels", s1[1], xs[1]),
            ));
        }
        let pooled = self.adaptive_avg_pool(x)?;
        let squeezed = self.reshape(pooled, &[xs[0], xs[1]])?;
        let hidden = self.linear(squeezed, w1, None)?;
        let hidden = self.relu(hidden);
        let logits = self.linear(hidden, w2, None)?;
        let gate = self.sigmoid(logits);
        self.scale_channels(x, gate)
    }

    /// Additive attention over the last axis of `x[N, C, T]`: scores
    /// `s_t = tanh(x_t · u) · v`, weights `softmax_t(s)`, output `Σ_t w_t x_t`.
    /// Returns the pooled `[N, C]` features and the `[N, T]` weights.
    pub fn temporal_attention(&mut self, x: Var, u: Var, v: Var) -> Result<(Var, Var)> {
        let xs = self.shape(x).to_vec();
        let (us, vs) = (self.shape(u).to_vec(), self.shape(v).to_vec());
        if xs.len() != 3 || us.len() != 2 || us[0] != xs[1] || vs != [us[1], 1] {
            return Err(Error::shape(
                "temporal_attention",
                format!("weights {us:?}, {vs:?} do not fit input {xs:?}"),
            ));
        }
        let (n, c, t) = (xs[0], xs[1], xs[2]);
        let frames = self.swap_last2(x)?;
        let frames = self.reshape(frames, &[n * t, c])?;
        let hidden = self.linear(frames, u, None)?;
        let hidden = self.tanh(hidden);
        let scores = self.linear(hidden, v, None)?;
        let scores = self.reshape(scores, &[n, t])?;
        let weights = self.softmax(scores, 1)?;
        let pooled = self.weighted_sum_last(x, weights)?;
        Ok((pooled, weights))
    }
}

//! Network definitions: the attention CNN over log-mel audio, the 3-D
//! residual network with channel attention over face clips, and the LSTM and
//! plain 3-D CNN baselines.

mod audio;
mod baseline;
mod video;

pub use audio::AudioNetConfig;
pub use baseline::{BaselineConfig, BaselineKind};
pub use video::VideoNetConfig;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{BoundParams, ModelParams, Tape, Tensor, Var};

/// Output nonlinearity of the scalar head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Sigmoid probability in `(0, 1)`.
    Classification,
    /// Unbounded linear score.
    Regression,
}

impl Head {
    pub(crate) fn apply(self, tape: &mut Tape, logits: Var) -> Var {
        match self {
            Head::Classification => tape.sigmoid(logits),
            Head::Regression => logits,
        }
    }
}

/// A network with a fixed parameter layout and a scalar output per sample.
pub trait Network {
    /// Parameter names and shapes in binding order.
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)>;

    fn head(&self) -> Head;

    /// Maps a batch `x` to `[N, 1]`. `params` must come from a
    /// [`ModelParams`] matching [`Network::param_shapes`].
    fn forward(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Result<Var>;

    fn count_params(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Kaiming-uniform weights with bound `sqrt(6 / fan_in)` and zero biases.
    /// Each tensor draws from its own stream so the layout order does not
    /// couple initial values.
    fn init(&self, seed: u64) -> ModelParams {
        let mut params = ModelParams::new();
        for (i, (name, shape)) in self.param_shapes().into_iter().enumerate() {
            let n: usize = shape.iter().product();
            let data = if shape.len() == 1 {
                vec![0.0; n]
            } else {
                let fan_in: usize = if shape.len() == 2 { shape[0] } else { shape[1..].iter().product() };
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut r = rng::stream(seed, "init", &[i as u64]);
                (0..n).map(|_| r.random_range(-bound..bound)).collect()
            };
            let t = Tensor::new(shape, data).expect("shape from layout");
            params.insert(name, t).expect("layout names are unique");
        }
        params
    }

    /// Checks that `params` has exactly this network's layout.
    fn validate(&self, params: &ModelParams) -> Result<()> {
        let shapes = self.param_shapes();
        if params.len() != shapes.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        for (name, shape) in &shapes {
            let t = params.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Inference without gradient tracking; returns `[N, 1]`.
    fn predict(&self, params: &ModelParams, x: &Tensor) -> Result<Tensor> {
        self.validate(params)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(x.clone());
        let y = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(y).clone())
    }
}

/// Any of the video-input networks, tagged by architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum VideoModel {
    CovAttention(VideoNetConfig),
    Baseline(BaselineConfig),
}

impl VideoModel {
    fn inner(&self) -> &dyn Network {
        match self {
            VideoModel::CovAttention(c) => c,
            VideoModel::Baseline(c) => c,
        }
    }
}

impl Network for VideoModel {
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.inner().param_shapes()
    }

    fn head(&self) -> Head {
        self.inner().head()
    }

    fn forward(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Result<Var> {
        self.inner().forward(tape, params, x)
    }
}

/// `2` along every axis whose extent is at least 2, else `1`.
pub(crate) fn halving_window(extents: &[usize]) -> Vec<usize> {
    extents.iter().map(|&e| if e >= 2 { 2 } else { 1 }).collect()
}

pub(crate) fn conv_shape(out: usize, inp: usize, kernel: &[usize]) -> Vec<usize> {
    let mut s = vec![out, inp];
    s.extend_from_slice(kernel);
    s
}

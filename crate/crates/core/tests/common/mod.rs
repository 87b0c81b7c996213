//! Central finite-difference oracle for tape gradients.
//!
//! The scalar under test is `Σ r ⊙ f(x)` with a fixed random `r`, so every
//! output element contributes. Numeric derivatives use a central difference
//! evaluated on fresh constant-only tapes.
#![allow(dead_code)]

pub mod oracles;

use avfusion::models::Network;
use avfusion::{ModelParams, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const OP_TOL: f64 = 1e-4;
pub const NET_TOL: f64 = 1e-3;
pub const MIN_PROBES: usize = 5;
/// Below this magnitude on both sides a derivative counts as zero.
pub const ZERO_FLOOR: f64 = 1e-9;

pub type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn mix_weights(shape: &[usize], seed: u64) -> Tensor {
    random_tensor(shape, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))
}

fn weighted(tape: &mut Tape, y: Var, r: &Tensor) -> Var {
    let r = tape.constant(r.clone());
    let p = tape.mul(y, r).unwrap();
    tape.sum(p)
}

fn eval(build: &Build, inputs: &[Tensor], r: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let y = build(&mut tape, &vars);
    let l = weighted(&mut tape, y, r);
    tape.value(l).item()
}

/// Largest relative error over `probes` random input elements.
pub fn check_op(build: &Build, inputs: &[Tensor], probes: usize, seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let y = build(&mut tape, &vars);
    let r = mix_weights(tape.shape(y), seed);
    let l = weighted(&mut tape, y, &r);
    let grads = tape.backward(l).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.random_range(0..inputs.len());
        let j = rng.random_range(0..inputs[i].len());
        let analytic = grads.get(vars[i]).map_or(0.0, |g| g.data()[j]);
        let mut plus = inputs.to_vec();
        plus[i].data_mut()[j] += STEP;
        let mut minus = inputs.to_vec();
        minus[i].data_mut()[j] -= STEP;
        let numeric = (eval(build, &plus, &r) - eval(build, &minus, &r)) / (2.0 * STEP);
        worst = worst.max(relative_error(analytic, numeric));
    }
    worst
}

fn with_entry(params: &ModelParams, name: &str, j: usize, delta: f64) -> ModelParams {
    let mut out = ModelParams::new();
    for (n, t) in params.iter() {
        let mut t = t.clone();
        if n == name {
            t.data_mut()[j] += delta;
        }
        out.insert(n, t).unwrap();
    }
    out
}

fn net_loss<N: Network>(net: &N, params: &ModelParams, x: &Tensor, r: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let y = net.forward(&mut tape, &b, xv).unwrap();
    let l = weighted(&mut tape, y, r);
    tape.value(l).item()
}

/// Analytic gradient of the mixed network output with respect to every
/// parameter tensor, in layout order.
pub fn net_gradients<N: Network>(net: &N, params: &ModelParams, x: &Tensor, seed: u64) -> Vec<Tensor> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let y = net.forward(&mut tape, &b, xv).unwrap();
    let r = mix_weights(tape.shape(y), seed);
    let l = weighted(&mut tape, y, &r);
    let grads = tape.backward(l).unwrap();
    b.vars().map(|v| grads.get(v).cloned().unwrap()).collect()
}

/// Relative errors at `probes` random parameter elements, plus any named
/// parameters in `forced` (first element of each).
pub fn check_net<N: Network>(
    net: &N,
    params: &ModelParams,
    x: &Tensor,
    probes: usize,
    forced: &[&str],
    seed: u64,
) -> Vec<(String, f64, f64)> {
    let analytic = net_gradients(net, params, x, seed);
    let r = mix_weights(&[x.shape()[0], 1], seed);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = forced
        .iter()
        .map(|f| (names.iter().position(|n| n == f).expect("forced name exists"), 0))
        .collect();
    for _ in 0..probes {
        let i = rng.random_range(0..names.len());
        picks.push((i, rng.random_range(0..analytic[i].len())));
    }
    picks
        .into_iter()
        .map(|(i, j)| {
            let a = analytic[i].data()[j];
            let up = net_loss(net, &with_entry(params, &names[i], j, STEP), x, &r);
            let down = net_loss(net, &with_entry(params, &names[i], j, -STEP), x, &r);
            let n = (up - down) / (2.0 * STEP);
            (format!("{}[{j}]", names[i]), a, n)
        })
        .collect()
}

/// One differentiable op with its inputs.
pub struct OpCase {
    pub name: &'static str,
    pub build: Build,
    pub inputs: Vec<Tensor>,
}

fn case(name: &'static str, shapes: &[&[usize]], seed: u64, build: Build) -> OpCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OpCase {
        name,
        build,
        inputs: shapes.iter().map(|s| random_tensor(s, &mut rng)).collect(),
    }
}

/// Every differentiable tape operation on small random inputs.
pub fn op_cases() -> Vec<OpCase> {
    let mut cases = vec![
        case(
            "conv3d",
            &[&[2, 3, 4, 5, 5], &[4, 3, 3, 3, 2], &[4]],
            1,
            Box::new(|t, v| t.conv3d(v[0], v[1], Some(v[2]), [1, 2, 1], [1, 1, 0]).unwrap()),
        ),
        case(
            "conv3d_strided_no_bias",
            &[&[1, 2, 5, 6, 6], &[3, 2, 3, 3, 3], &[1]],
            2,
            Box::new(|t, v| t.conv3d(v[0], v[1], None, [2, 2, 2], [1, 1, 1]).unwrap()),
        ),
        case(
            "conv2d",
            &[&[2, 2, 6, 5], &[3, 2, 3, 3], &[3]],
            3,
            Box::new(|t, v| t.conv2d(v[0], v[1], Some(v[2]), [1, 1], [1, 1]).unwrap()),
        ),
        case(
            "maxpool3d",
            &[&[2, 2, 4, 5, 5]],
            4,
            Box::new(|t, v| t.maxpool3d(v[0], [3, 3, 3], [1, 2, 2], [1, 1, 1]).unwrap()),
        ),
        case(
            "maxpool2d",
            &[&[1, 3, 6, 7]],
            5,
            Box::new(|t, v| t.maxpool2d(v[0], [2, 2], [2, 2]).unwrap()),
        ),
        case(
            "adaptive_avg_pool",
            &[&[2, 3, 2, 3, 4]],
            6,
            Box::new(|t, v| t.adaptive_avg_pool(v[0]).unwrap()),
        ),
        case(
            "spatial_mean",
            &[&[2, 3, 4, 3, 3]],
            7,
            Box::new(|t, v| t.spatial_mean(v[0]).unwrap()),
        ),
        case(
            "linear",
            &[&[4, 5], &[5, 3], &[3]],
            8,
            Box::new(|t, v| t.linear(v[0], v[1], Some(v[2])).unwrap()),
        ),
        case("relu", &[&[3, 7]], 9, Box::new(|t, v| t.relu(v[0]))),
        case("sigmoid", &[&[3, 7]], 10, Box::new(|t, v| t.sigmoid(v[0]))),
        case("tanh", &[&[3, 7]], 11, Box::new(|t, v| t.tanh(v[0]))),
        case(
            "softmax_last",
            &[&[3, 6]],
            12,
            Box::new(|t, v| t.softmax(v[0], 1).unwrap()),
        ),
        case(
            "softmax_middle",
            &[&[2, 4, 3]],
            13,
            Box::new(|t, v| t.softmax(v[0], 1).unwrap()),
        ),
        case("add", &[&[2, 5], &[2, 5]], 14, Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        case("mul", &[&[2, 5], &[2, 5]], 15, Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        case("scale", &[&[2, 5]], 16, Box::new(|t, v| t.scale(v[0], -1.7))),
        case(
            "scale_channels",
            &[&[2, 3, 2, 2, 2], &[2, 3]],
            17,
            Box::new(|t, v| t.scale_channels(v[0], v[1]).unwrap()),
        ),
        case(
            "reshape",
            &[&[2, 6]],
            18,
            Box::new(|t, v| t.reshape(v[0], &[3, 4]).unwrap()),
        ),
        case(
            "swap_last2",
            &[&[2, 3, 4]],
            19,
            Box::new(|t, v| t.swap_last2(v[0]).unwrap()),
        ),
        case(
            "weighted_sum_last",
            &[&[2, 3, 5], &[2, 5]],
            20,
            Box::new(|t, v| t.weighted_sum_last(v[0], v[1]).unwrap()),
        ),
        case(
            "select_last",
            &[&[2, 3, 5]],
            21,
            Box::new(|t, v| t.select_last(v[0], 3).unwrap()),
        ),
        case("sum", &[&[4, 3]], 22, Box::new(|t, v| t.sum(v[0]))),
        case(
            "channel_attention",
            &[&[2, 8, 2, 3, 3], &[8, 2], &[2, 8]],
            23,
            Box::new(|t, v| t.channel_attention(v[0], v[1], v[2]).unwrap()),
        ),
        case(
            "temporal_attention",
            &[&[2, 4, 6], &[4, 3], &[3, 1]],
            24,
            Box::new(|t, v| t.temporal_attention(v[0], v[1], v[2]).unwrap().0),
        ),
    ];
    // targets offset by 0.5 keep every prediction away from the kink
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let pred = random_tensor(&[3, 4], &mut rng);
    let target = pred.map(|p| if (p * 1e3) as i64 % 2 == 0 { p + 0.5 } else { p - 0.5 });
    cases.push(OpCase {
        name: "mae",
        build: Box::new(move |t, v| t.mae(v[0], target.clone()).unwrap()),
        inputs: vec![pred],
    });
    cases
}

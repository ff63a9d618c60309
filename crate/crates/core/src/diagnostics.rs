//! Finite-difference gradient checks over every differentiable operation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::objectives::{dice_ce_loss, mae_loss, nt_xent, NT_XENT_TEMPERATURE};
use crate::swin::{mhsa, swin_layer, window_partition, window_reverse, Affine, AttentionParams, DimMode, SwinLayerParams, WindowAttentionParams, WindowSpec};
use crate::tensor::gradcheck::{check_gradients, GradCheckReport};
use crate::tensor::ops::{self, Padding, LEAKY_SLOPE, NORM_EPS};
use crate::tensor::{Tensor, Var};

pub const GRADCHECK_TOLERANCE: f64 = 1e-3;
const STEP: f64 = 1e-5;
const MAX_COORDS: usize = 64;

/// Outcome of one operation's check.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub shape: Vec<usize>,
    pub report: GradCheckReport,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.report.passes(GRADCHECK_TOLERANCE)
    }
}

struct Gen(ChaCha8Rng);

impl Gen {
    fn extent(&mut self, lo: usize) -> usize {
        self.0.random_range(lo..=6)
    }

    fn uniform(&mut self, shape: &[usize], scale: f64) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| self.0.random_range(-scale..scale))
    }

    /// Magnitudes in `[0.1, 1)`, keeping kinks out of finite-difference reach.
    fn signed(&mut self, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| {
            let m = self.0.random_range(0.1..1.0);
            if self.0.random_bool(0.5) { m } else { -m }
        })
    }
}

/// Reduce `y` against fixed pseudo-random weights so every output coordinate matters.
fn probe<'t>(y: Var<'t, f64>) -> Result<Var<'t, f64>> {
    let w = y.tape().constant(y.shape(), (0..y.numel()).map(|i| (0.7 * i as f64 + 0.3).sin()).collect())?;
    Ok(ops::sum_all(ops::mul(y, w)?))
}

fn attention<'t>(v: &[Var<'t, f64>], heads: usize) -> WindowAttentionParams<'t, f64> {
    WindowAttentionParams {
        attention: AttentionParams { w_qkv: v[0], w_out: v[1], heads },
        embed: Affine { w: v[2], b: Some(v[3]) },
    }
}

fn attention_tensors(g: &mut Gen, c: usize) -> Vec<Tensor<f64>> {
    let s = 1.0 / (c as f64).sqrt();
    vec![g.uniform(&[c, 3 * c], s), g.uniform(&[c, c], s), g.uniform(&[c, c], s), g.uniform(&[c], 0.1)]
}

type Check = fn(&mut Gen) -> Result<(Vec<usize>, GradCheckReport)>;

fn conv(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), g.extent(1), g.extent(2), g.extent(2), g.extent(1)];
    let cout = g.extent(1);
    let mut odd = || [1, 3][g.0.random_range(0..2)];
    let k = [odd(), odd(), odd()];
    let stride = [g.0.random_range(1..=2), g.0.random_range(1..=2), 1];
    let inputs = [g.uniform(&shape, 1.0), g.uniform(&[cout, shape[1], k[0], k[1], k[2]], 0.5), g.uniform(&[cout], 0.1)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| probe(ops::conv3d(v[0], v[1], Some(v[2]), stride, Padding::Same)?))?;
    Ok((shape, r))
}

fn linear(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), g.extent(1), g.extent(1)];
    let dout = g.extent(1);
    let inputs = [g.uniform(&shape, 1.0), g.uniform(&[shape[2], dout], 0.5), g.uniform(&[dout], 0.1)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| probe(ops::linear(v[0], v[1], Some(v[2]))?))?;
    Ok((shape, r))
}

fn softmax(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), g.extent(2), g.extent(1)];
    let axis = g.0.random_range(0..3);
    let inputs = [g.uniform(&shape, 2.0)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| probe(ops::softmax(v[0], axis)?))?;
    Ok((shape, r))
}

fn instance_norm(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), g.extent(1), g.extent(2), g.extent(1), g.extent(1)];
    let inputs = [g.uniform(&shape, 1.0)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| probe(ops::instance_norm(v[0], NORM_EPS)?))?;
    Ok((shape, r))
}

fn layer_norm(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), g.extent(2)];
    let inputs = [g.uniform(&shape, 1.0)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| probe(ops::layer_norm(v[0], NORM_EPS)?))?;
    Ok((shape, r))
}

fn leaky_relu(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), g.extent(1), g.extent(1)];
    let inputs = [g.signed(&shape)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| probe(ops::leaky_relu(v[0], LEAKY_SLOPE)))?;
    Ok((shape, r))
}

fn mhsa_check(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let heads = g.0.random_range(1..=2);
    let c = 2 * heads;
    let shape = vec![1, g.extent(1), g.extent(1), g.extent(1), c];
    let edge = g.0.random_range(1..=3);
    let mut inputs = vec![g.uniform(&shape, 1.0)];
    inputs.extend(attention_tensors(g, c).into_iter().take(2));
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| {
        let wb = window_partition(v[0], WindowSpec::new(edge, DimMode::D3)?)?;
        let out = mhsa(&wb, &AttentionParams { w_qkv: v[1], w_out: v[2], heads })?;
        probe(window_reverse(&out)?)
    })?;
    Ok((shape, r))
}

fn swin(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let heads = g.0.random_range(1..=2);
    let c = 2 * heads;
    let mode = if g.0.random_bool(0.5) { DimMode::D3 } else { DimMode::D2 };
    let depth = if mode == DimMode::D2 { 1 } else { g.extent(1) };
    let shape = vec![1, g.extent(2), g.extent(2), depth, c];
    let edge = g.0.random_range(2..=3);
    let mut inputs = vec![g.uniform(&shape, 1.0)];
    for _ in 0..2 {
        inputs.extend(attention_tensors(g, c));
        inputs.push(g.uniform(&[c, c], 0.5));
        inputs.push(g.uniform(&[c], 0.1));
    }
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| {
        let p = SwinLayerParams {
            window: attention(&v[1..5], heads),
            window_proj: Affine { w: v[5], b: Some(v[6]) },
            shifted: attention(&v[7..11], heads),
            shifted_proj: Affine { w: v[11], b: Some(v[12]) },
        };
        probe(swin_layer(v[0], WindowSpec::new(edge, mode)?, &p)?)
    })?;
    Ok((shape, r))
}

fn mae(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), 1, g.extent(1), g.extent(1), g.extent(1)];
    let target = g.uniform(&shape, 1.0);
    let offset = g.signed(&shape);
    let pred = Tensor::from_fn(shape.clone(), |i| target.data()[i] + offset.data()[i]);
    let r = check_gradients(&[pred, target], STEP, MAX_COORDS, |_, v| mae_loss(v[0], v[1]))?;
    Ok((shape, r))
}

fn contrastive(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![2 * g.0.random_range(2..=3), g.extent(2)];
    let inputs = [g.uniform(&shape, 1.0)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| nt_xent(v[0], NT_XENT_TEMPERATURE))?;
    Ok((shape, r))
}

fn dice_ce(g: &mut Gen) -> Result<(Vec<usize>, GradCheckReport)> {
    let shape = vec![g.extent(1), 2, g.extent(1), g.extent(1), g.extent(1)];
    let n = shape[0] * shape[2] * shape[3] * shape[4];
    let labels: Vec<u8> = (0..n).map(|_| u8::from(g.0.random_bool(0.4))).collect();
    let inputs = [g.uniform(&shape, 2.0)];
    let r = check_gradients(&inputs, STEP, MAX_COORDS, |_, v| dice_ce_loss(v[0], &labels))?;
    Ok((shape, r))
}

const CHECKS: [(&str, Check); 11] = [
    ("conv3d", conv),
    ("linear", linear),
    ("softmax", softmax),
    ("instance_norm", instance_norm),
    ("layer_norm", layer_norm),
    ("leaky_relu", leaky_relu),
    ("mhsa", mhsa_check),
    ("swin_layer", swin),
    ("mae_loss", mae),
    ("nt_xent", contrastive),
    ("dice_ce_loss", dice_ce),
];

/// Check every operation on shapes drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<OpCheck>> {
    let mut g = Gen(ChaCha8Rng::seed_from_u64(seed));
    CHECKS
        .iter()
        .map(|(op, f)| {
            let (shape, report) = f(&mut g)?;
            Ok(OpCheck { op, shape, report })
        })
        .collect()
}

use super::params::{Init, Session};
use crate::error::Result;
use crate::swin::DimMode;
use crate::tensor::ops::{self, Padding, LEAKY_SLOPE, NORM_EPS};
use crate::tensor::{Scalar, Var};

/// Cubic kernel for 3D decoders, planar for 2D.
pub fn kernel_for(mode: DimMode) -> [usize; 3] {
    match mode {
        DimMode::D2 => [3, 3, 1],
        DimMode::D3 => [3, 3, 3],
    }
}

/// Same-padded 3D convolution referencing parameters by name.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: String,
    pub bias: Option<String>,
    pub stride: [usize; 3],
}

impl Conv {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        bias: bool,
    ) -> Self {
        let fan_in = cin * kernel.iter().product::<usize>();
        let weight = init.he_uniform(
            &format!("{name}.weight"),
            &[cout, cin, kernel[0], kernel[1], kernel[2]],
            fan_in,
        );
        let bias = bias.then(|| init.zeros(&format!("{name}.bias"), &[cout]));
        Self { weight, bias, stride }
    }

    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let w = s.param(&self.weight)?;
        let b = self.bias.as_deref().map(|b| s.param(b)).transpose()?;
        ops::conv3d(x, w, b, self.stride, Padding::Same)
    }
}

/// Convolution, instance normalization, leaky ReLU. The bias is omitted since
/// instance normalization cancels it.
#[derive(Clone, Debug)]
pub struct ConvUnit {
    pub conv: Conv,
}

impl ConvUnit {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
    ) -> Self {
        Self {
            conv: Conv::new(init, name, cin, cout, kernel, stride, false),
        }
    }

    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = ops::instance_norm(self.conv.forward(s, x)?, NORM_EPS)?;
        Ok(ops::leaky_relu(y, LEAKY_SLOPE))
    }
}

/// Two stacked conv units plus a pointwise conv-unit shortcut, summed.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub first: ConvUnit,
    pub second: ConvUnit,
    pub shortcut: ConvUnit,
}

impl ResBlock {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, cin: usize, cout: usize, kernel: [usize; 3]) -> Self {
        Self {
            first: ConvUnit::new(init, &format!("{name}.conv1"), cin, cout, kernel, [1; 3]),
            second: ConvUnit::new(init, &format!("{name}.conv2"), cout, cout, kernel, [1; 3]),
            shortcut: ConvUnit::new(init, &format!("{name}.shortcut"), cin, cout, [1; 3], [1; 3]),
        }
    }

    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let main = self.second.forward(s, self.first.forward(s, x)?)?;
        ops::add(main, self.shortcut.forward(s, x)?)
    }
}

/// `[Din -> Dout]` linear layer on `[B, Din]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: String,
    pub bias: Option<String>,
}

impl Dense {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, din: usize, dout: usize, bias: bool) -> Self {
        let weight = init.he_uniform(&format!("{name}.weight"), &[din, dout], din);
        let bias = bias.then(|| init.zeros(&format!("{name}.bias"), &[dout]));
        Self { weight, bias }
    }

    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let w = s.param(&self.weight)?;
        let b = self.bias.as_deref().map(|b| s.param(b)).transpose()?;
        ops::linear(x, w, b)
    }
}

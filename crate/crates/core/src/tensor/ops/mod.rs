//! Differentiable operations. Every op records one node on the tape together
//! with its backward rule.

mod activation;
mod conv;
mod elementwise;
mod linear;
mod norm;
mod resample;
mod shape;

pub use activation::{leaky_relu, softmax, LEAKY_SLOPE};
pub use conv::{conv3d, conv_output_extent, Padding};
pub use elementwise::{add, mean_all, mul, scale, sum_all};
pub use linear::linear;
pub use norm::{instance_norm, layer_norm, NORM_EPS};
pub use resample::{
    nearest_resample_grid, resample_linear, resample_nearest, trilinear_resample, trilinear_resample_grid, Align,
};
pub use shape::{concat, gather_rows, global_avg_pool, narrow, permute, remap, reshape, upsample_x2, PAD};

use super::{Scalar, Var};
use crate::error::{Error, Result};

pub(crate) fn same_tape<T: Scalar>(op: &'static str, vars: &[Var<'_, T>]) -> Result<()> {
    let first = vars[0].tape() as *const _;
    if vars.iter().all(|v| std::ptr::eq(v.tape(), first)) {
        Ok(())
    } else {
        Err(Error::invalid(op, "operands live on different tapes"))
    }
}

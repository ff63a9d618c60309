//! Central finite-difference gradient checking in 64-bit.

use super::{Tape, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Per input: `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over the probed coordinates.
    pub rel_errors: Vec<f64>,
    pub probed: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }
}

/// Compare tape gradients of `f` against central differences with step `h`.
///
/// `f` must build a scalar from the given leaves on the supplied tape. At most
/// `max_coords` evenly spaced coordinates per input are perturbed.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, max_coords: usize, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.leaf(x)).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|x| x.clone().with_grad()).collect();
    let vars: Vec<_> = leaves.iter().map(|x| tape.leaf(x)).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut rel_errors = Vec::with_capacity(inputs.len());
    let mut probed = 0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let n = inputs[i].numel();
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let stride = n.div_ceil(max_coords.max(1)).max(1);
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for j in (0..n).step_by(stride) {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            diff += (analytic[j] - numeric).powi(2);
            na += analytic[j].powi(2);
            nn += numeric.powi(2);
            probed += 1;
        }
        let denom = na.sqrt().max(nn.sqrt());
        rel_errors.push(if denom < 1e-12 { diff.sqrt() } else { diff.sqrt() / denom });
    }
    Ok(GradCheckReport { rel_errors, probed })
}

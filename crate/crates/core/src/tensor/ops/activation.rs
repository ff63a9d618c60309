use crate::error::{Error, Result};
use crate::tensor::{Scalar, Var};

/// Negative-side slope used throughout the network.
pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu<T: Scalar>(x: Var<'_, T>, slope: f64) -> Var<'_, T> {
    let slope = T::from_f64(slope);
    let xv = x.value();
    let out = xv.iter().map(|&v| if v >= T::ZERO { v } else { v * slope }).collect();
    x.tape().record(x.shape(), out, &[x], move |g, _| {
        let gx = g
            .iter()
            .zip(xv.iter())
            .map(|(&g, &v)| if v >= T::ZERO { g } else { g * slope })
            .collect();
        vec![Some(gx)]
    })
}

/// Max-subtracted softmax along `axis`.
pub fn softmax<T: Scalar>(x: Var<'_, T>, axis: usize) -> Result<Var<'_, T>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::invalid("softmax", format!("axis {axis} out of range for {shape:?}")));
    }
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let xv = x.value();
    let mut y = vec![T::ZERO; xv.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let mut m = xv[at(0)];
            for k in 1..n {
                m = m.max(xv[at(k)]);
            }
            let mut z = T::ZERO;
            for k in 0..n {
                let e = (xv[at(k)] - m).exp();
                y[at(k)] = e;
                z += e;
            }
            for k in 0..n {
                y[at(k)] /= z;
            }
        }
    }
    let yv = std::rc::Rc::new(y.clone());
    Ok(x.tape().record(shape, y, &[x], move |g, _| {
        let mut gx = vec![T::ZERO; g.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let dot: T = (0..n).map(|k| g[at(k)] * yv[at(k)]).sum();
                for k in 0..n {
                    gx[at(k)] = yv[at(k)] * (g[at(k)] - dot);
                }
            }
        }
        vec![Some(gx)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn leaky_relu_values_and_slope_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.variable([3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = leaky_relu(x, 0.01);
        assert!(close(&y.value(), &[-0.01, 0.0, 2.0], 1e-15));
        let g = tape.backward(crate::tensor::ops::sum_all(y)).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.01, 1.0, 1.0]);
    }

    #[test]
    fn leaky_relu_is_identity_on_positive_input() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([3], vec![0.5, 1.0, 7.0]).unwrap();
        assert_eq!(leaky_relu(x, 0.01).value().as_slice(), &[0.5, 1.0, 7.0]);
    }

    #[test]
    fn softmax_closed_forms() {
        let tape = Tape::<f64>::new();
        let u = tape.constant([4], vec![0.3; 4]).unwrap();
        assert!(close(&softmax(u, 0).unwrap().value(), &[0.25; 4], 1e-15));
        let two = tape.constant([2], vec![0.0, 2f64.ln()]).unwrap();
        assert!(close(&softmax(two, 0).unwrap().value(), &[1.0 / 3.0, 2.0 / 3.0], 1e-15));
        let big = tape.constant([2], vec![1000.0, 1000.0]).unwrap();
        assert!(close(&softmax(big, 0).unwrap().value(), &[0.5, 0.5], 0.0));
    }

    #[test]
    fn softmax_along_middle_axis_sums_to_one() {
        let tape = Tape::<f32>::new();
        let data: Vec<f32> = (0..24).map(|v| (v as f32 * 0.37).sin() * 5.0).collect();
        let x = tape.constant([2, 3, 4], data).unwrap();
        let y = softmax(x, 1).unwrap();
        let yv = y.value();
        for o in 0..2 {
            for i in 0..4 {
                let s: f32 = (0..3).map(|k| yv[(o * 3 + k) * 4 + i]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
        assert!(softmax(x, 3).is_err());
    }
}

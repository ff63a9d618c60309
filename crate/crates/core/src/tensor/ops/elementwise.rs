use super::same_tape;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Var};

pub fn add<'t, T: Scalar>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    same_tape("add", &[a, b])?;
    let shape = a.shape();
    if shape != b.shape() {
        return Err(Error::shape("add", &shape, &b.shape()));
    }
    let (av, bv) = (a.value(), b.value());
    let out = av.iter().zip(bv.iter()).map(|(x, y)| *x + *y).collect();
    Ok(a.tape().record(shape, out, &[a, b], |g, need| {
        vec![need[0].then(|| g.to_vec()), need[1].then(|| g.to_vec())]
    }))
}

pub fn mul<'t, T: Scalar>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    same_tape("mul", &[a, b])?;
    let shape = a.shape();
    if shape != b.shape() {
        return Err(Error::shape("mul", &shape, &b.shape()));
    }
    let (av, bv) = (a.value(), b.value());
    let out = av.iter().zip(bv.iter()).map(|(x, y)| *x * *y).collect();
    Ok(a.tape().record(shape, out, &[a, b], move |g, need| {
        let ga = need[0].then(|| g.iter().zip(bv.iter()).map(|(g, y)| *g * *y).collect());
        let gb = need[1].then(|| g.iter().zip(av.iter()).map(|(g, x)| *g * *x).collect());
        vec![ga, gb]
    }))
}

pub fn scale<T: Scalar>(a: Var<'_, T>, s: T) -> Var<'_, T> {
    let out = a.value().iter().map(|x| *x * s).collect();
    a.tape().record(a.shape(), out, &[a], move |g, _| {
        vec![Some(g.iter().map(|g| *g * s).collect())]
    })
}

pub fn sum_all<T: Scalar>(a: Var<'_, T>) -> Var<'_, T> {
    let n = a.numel();
    let total = a.value().iter().copied().sum();
    a.tape().record(Vec::new(), vec![total], &[a], move |g, _| vec![Some(vec![g[0]; n])])
}

pub fn mean_all<T: Scalar>(a: Var<'_, T>) -> Var<'_, T> {
    let n = a.numel();
    let inv = T::ONE / T::from_usize(n);
    let total: T = a.value().iter().copied().sum();
    a.tape().record(Vec::new(), vec![total * inv], &[a], move |g, _| {
        vec![Some(vec![g[0] * inv; n])]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn sum_gradient_is_all_ones() {
        let tape = Tape::<f64>::new();
        let x = tape.variable([3], vec![1.0, -2.0, 5.0]).unwrap();
        let y = sum_all(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.variable([2], vec![1.0, 2.0]).unwrap();
        let y = sum_all(mul(x, x).unwrap());
        assert_eq!(y.item(), 5.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::<f32>::new();
        let x = tape.variable([2], vec![1.0, 2.0]).unwrap();
        let y = scale(x, 2.0);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.variable([2], vec![1.0, 2.0]).unwrap();
        let c = tape.constant([2], vec![3.0, 4.0]).unwrap();
        let y = sum_all(mul(x, c).unwrap());
        let g = tape.backward(y).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.get(x).unwrap(), &[3.0, 4.0]);
        assert!(g.get(c).is_none());
    }
}

use super::Scalar;

/// Strided matrix view description: (row stride, column stride).
pub(crate) type Strides = (usize, usize);

fn fits(len: usize, rows: usize, cols: usize, (rs, cs): Strides) -> bool {
    rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < len
}

/// `c = alpha * a·b + beta * c` with `a: m×k`, `b: k×n`, `c: m×n`, all strided.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    sa: Strides,
    b: &[T],
    sb: Strides,
    beta: T,
    c: &mut [T],
    sc: Strides,
) {
    assert!(fits(a.len(), m, k, sa), "gemm: lhs view out of bounds");
    assert!(fits(b.len(), k, n, sb), "gemm: rhs view out of bounds");
    assert!(fits(c.len(), m, n, sc), "gemm: output view out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: all three views were bounds-checked above; `c` is uniquely borrowed.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            sc.0 as isize,
            sc.1 as isize,
        )
    }
}

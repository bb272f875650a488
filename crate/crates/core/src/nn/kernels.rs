use super::Scalar;

/// Dot product over 16 independent lanes so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 16];
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[T; 16] = x.try_into().unwrap();
        let y: &[T; 16] = y.try_into().unwrap();
        for i in 0..16 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = T::zero();
    for a in acc {
        s += a;
    }
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `Σ x²` in f64. The fast path accumulates in `T`; if that overflows the
/// sum is redone in f64.
pub(crate) fn sum_sq<T: Scalar>(x: &[T]) -> f64 {
    let fast = dot(x, x);
    if fast.is_finite() {
        return fast.as_f64();
    }
    x.iter().map(|v| v.as_f64() * v.as_f64()).sum()
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    let mut yc = y.chunks_exact_mut(8);
    let mut xc = x.chunks_exact(8);
    for (yv, xv) in (&mut yc).zip(&mut xc) {
        let yv: &mut [T; 8] = yv.try_into().unwrap();
        let xv: &[T; 8] = xv.try_into().unwrap();
        for i in 0..8 {
            yv[i] += alpha * xv[i];
        }
    }
    for (yi, &xi) in yc.into_remainder().iter_mut().zip(xc.remainder()) {
        *yi += alpha * xi;
    }
}

//! Batched 1-D layer kernels over `[channel][sample][position]` buffers.

use crate::scalar::{gemm, MatRef, Scalar};

/// Left zero padding for a 'same' convolution with kernel `k`.
pub(crate) fn pad_left(k: usize) -> usize {
    (k - 1) / 2
}

/// Unfolds `x` (`c x n x l`) into a `(c*k) x (n*l)` patch matrix.
pub(crate) fn im2col<T: Scalar>(x: &[T], c: usize, n: usize, l: usize, k: usize, col: &mut Vec<T>) {
    let pad = pad_left(k) as isize;
    col.clear();
    col.resize(c * k * n * l, T::zero());
    for ci in 0..c {
        for kk in 0..k {
            let row = &mut col[(ci * k + kk) * n * l..][..n * l];
            let shift = kk as isize - pad;
            // Output position li reads input position li + shift.
            let lo = (-shift).max(0) as usize;
            let hi = (l as isize - shift).clamp(0, l as isize) as usize;
            if lo >= hi {
                continue;
            }
            for ni in 0..n {
                let src = &x[(ci * n + ni) * l..][..l];
                let dst = &mut row[ni * l..][..l];
                let s0 = (lo as isize + shift) as usize;
                dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back into `dx`.
pub(crate) fn col2im<T: Scalar>(dcol: &[T], c: usize, n: usize, l: usize, k: usize, dx: &mut [T]) {
    let pad = pad_left(k) as isize;
    dx.iter_mut().for_each(|v| *v = T::zero());
    for ci in 0..c {
        for kk in 0..k {
            let row = &dcol[(ci * k + kk) * n * l..][..n * l];
            let shift = kk as isize - pad;
            let lo = (-shift).max(0) as usize;
            let hi = (l as isize - shift).clamp(0, l as isize) as usize;
            if lo >= hi {
                continue;
            }
            for ni in 0..n {
                let dst = &mut dx[(ci * n + ni) * l..][..l];
                let src = &row[ni * l..][..l];
                let s0 = (lo as isize + shift) as usize;
                for (d, &g) in dst[s0..s0 + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                    *d += g;
                }
            }
        }
    }
}

/// 'Same' convolution plus bias, then ReLU. `w` is `co x (ci*k)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_relu_forward<T: Scalar>(
    x: &[T],
    ci: usize,
    n: usize,
    l: usize,
    k: usize,
    w: &[T],
    b: &[T],
    col: &mut Vec<T>,
    out: &mut Vec<T>,
) {
    let co = b.len();
    im2col(x, ci, n, l, k, col);
    out.clear();
    out.resize(co * n * l, T::zero());
    gemm(MatRef::new(w, co, ci * k), MatRef::new(col, ci * k, n * l), T::zero(), out);
    for (row, &bias) in out.chunks_exact_mut(n * l).zip(b) {
        for v in row {
            let z = *v + bias;
            *v = if z > T::zero() { z } else { T::zero() };
        }
    }
}

/// Backward through ReLU and a 'same' convolution.
///
/// `dout` holds the gradient w.r.t. the post-ReLU output and is masked in
/// place. Weight and bias gradients are accumulated into `dw`/`db`. When `dx`
/// is given it receives the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_relu_backward<T: Scalar>(
    x: &[T],
    out: &[T],
    dout: &mut [T],
    ci: usize,
    n: usize,
    l: usize,
    k: usize,
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    col: &mut Vec<T>,
    dx: Option<&mut [T]>,
) {
    let co = db.len();
    for (g, &a) in dout.iter_mut().zip(out) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
    for (row, acc) in dout.chunks_exact(n * l).zip(db.iter_mut()) {
        *acc += row.iter().copied().sum::<T>();
    }
    im2col(x, ci, n, l, k, col);
    let dy = MatRef::new(dout, co, n * l);
    gemm(dy, MatRef::new(col, ci * k, n * l).t(), T::one(), dw);
    if let Some(dx) = dx {
        // Reuse the patch buffer for the patch gradient.
        gemm(MatRef::new(w, co, ci * k).t(), dy, T::zero(), col);
        col2im(col, ci, n, l, k, dx);
    }
}

/// Pairwise max over each row of length `l`; an odd trailing element is
/// dropped. Records which element of each pair won (first on ties).
pub(crate) fn maxpool2_forward<T: Scalar>(x: &[T], rows: usize, l: usize, out: &mut Vec<T>, arg: &mut Vec<u8>) {
    let lo = l / 2;
    out.clear();
    arg.clear();
    out.reserve(rows * lo);
    arg.reserve(rows * lo);
    for r in 0..rows {
        let row = &x[r * l..][..l];
        for i in 0..lo {
            let (a, b) = (row[2 * i], row[2 * i + 1]);
            if b > a {
                out.push(b);
                arg.push(1);
            } else {
                out.push(a);
                arg.push(0);
            }
        }
    }
}

pub(crate) fn maxpool2_backward<T: Scalar>(dout: &[T], arg: &[u8], rows: usize, l: usize, dx: &mut Vec<T>) {
    let lo = l / 2;
    dx.clear();
    dx.resize(rows * l, T::zero());
    for r in 0..rows {
        for i in 0..lo {
            let j = r * lo + i;
            dx[r * l + 2 * i + arg[j] as usize] = dout[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 'same' convolution used as the oracle for the GEMM path.
    fn naive_conv(x: &[f64], ci: usize, n: usize, l: usize, k: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
        let co = b.len();
        let pad = pad_left(k) as isize;
        let mut out = vec![0.0; co * n * l];
        for o in 0..co {
            for s in 0..n {
                for p in 0..l {
                    let mut acc = b[o];
                    for c in 0..ci {
                        for kk in 0..k {
                            let q = p as isize + kk as isize - pad;
                            if q >= 0 && (q as usize) < l {
                                acc += w[(o * ci + c) * k + kk] * x[(c * n + s) * l + q as usize];
                            }
                        }
                    }
                    out[(o * n + s) * l + p] = acc.max(0.0);
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        (0..n).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0) - 1.0).collect()
    }

    #[test]
    fn conv_matches_direct_form() {
        for &(ci, co, n, l, k) in &[(2, 3, 2, 9, 4), (3, 2, 3, 5, 16), (1, 1, 1, 1, 3), (2, 4, 2, 12, 8)] {
            let x = pseudo(ci * n * l, 1);
            let w = pseudo(co * ci * k, 7);
            let b = pseudo(co, 3);
            let (mut col, mut out) = (vec![], vec![]);
            conv_relu_forward(&x, ci, n, l, k, &w, &b, &mut col, &mut out);
            let want = naive_conv(&x, ci, n, l, k, &w, &b);
            for (a, e) in out.iter().zip(&want) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, n, l, k) = (3, 2, 7, 6);
        let x = pseudo(c * n * l, 5);
        let y = pseudo(c * k * n * l, 9);
        let mut col = vec![];
        im2col(&x, c, n, l, k, &mut col);
        let mut back = vec![0.0; c * n * l];
        col2im(&y, c, n, l, k, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pool_contract() {
        let x = vec![1.0, 3.0, 2.0, 2.0, 9.0, -1.0, 0.0, 4.0, 5.0];
        let (mut out, mut arg) = (vec![], vec![]);
        maxpool2_forward(&x, 1, 9, &mut out, &mut arg);
        assert_eq!(out, vec![3.0, 2.0, 9.0, 4.0]);
        assert_eq!(arg, vec![1, 0, 0, 1]);
        let mut dx = vec![];
        maxpool2_backward(&[1.0, 2.0, 3.0, 4.0], &arg, 1, 9, &mut dx);
        assert_eq!(dx, vec![0.0, 1.0, 2.0, 0.0, 3.0, 0.0, 0.0, 4.0, 0.0]);
    }
}

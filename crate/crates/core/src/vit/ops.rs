//! Dense kernels shared by the forward and backward passes. Matrices are
//! row-major slices; shapes are passed explicitly.

use crate::scalar::Scalar;

/// Layer-norm variance guard.
pub const LN_EPS: f64 = 1e-12;

/// `out[m x n] += a[m x k] * b[k x n]`.
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (&av, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `x[m x k] * w[k x n] + bias[n]`.
pub fn linear<T: Scalar>(x: &[T], w: &[T], bias: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(bias);
    }
    matmul_acc(x, w, &mut out, m, k, n);
    out
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Backward of [`linear`]: accumulates `dw += x^T dy`, `db += colsum(dy)`
/// and returns `dx = dy w^T`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    m: usize,
    k: usize,
    n: usize,
    need_dx: bool,
) -> Option<Vec<T>> {
    for (x_row, dy_row) in x.chunks_exact(k).zip(dy.chunks_exact(n)) {
        for (&xv, dw_row) in x_row.iter().zip(dw.chunks_exact_mut(n)) {
            if xv == T::zero() {
                continue;
            }
            for (g, &d) in dw_row.iter_mut().zip(dy_row) {
                *g += xv * d;
            }
        }
        for (g, &d) in db.iter_mut().zip(dy_row) {
            *g += d;
        }
    }
    if !need_dx {
        return None;
    }
    let wt = transpose(w, k, n);
    let mut dx = vec![T::zero(); m * k];
    matmul_acc(dy, &wt, &mut dx, m, n, k);
    Some(dx)
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

/// Row-wise layer norm over `width` features. Returns the affine output
/// and the normalized pre-affine values.
pub fn layer_norm<T: Scalar>(x: &[T], scale: &[T], offset: &[T], width: usize) -> (Vec<T>, NormCache<T>) {
    let rows = x.len() / width;
    let mut out = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut rstd = Vec::with_capacity(rows);
    let inv_w = T::one() / T::of_usize(width);
    let eps = T::of(LN_EPS);
    for row in x.chunks_exact(width) {
        let mean = row.iter().copied().sum::<T>() * inv_w;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_w;
        let r = T::one() / (var + eps).sqrt();
        rstd.push(r);
        for ((&v, &g), &b) in row.iter().zip(scale).zip(offset) {
            let h = (v - mean) * r;
            xhat.push(h);
            out.push(h * g + b);
        }
    }
    (out, NormCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &NormCache<T>,
    scale: &[T],
    dscale: &mut [T],
    doffset: &mut [T],
    width: usize,
) -> Vec<T> {
    let mut dx = Vec::with_capacity(dy.len());
    let inv_w = T::one() / T::of_usize(width);
    let mut dxhat = vec![T::zero(); width];
    for ((dy_row, xhat_row), &r) in dy
        .chunks_exact(width)
        .zip(cache.xhat.chunks_exact(width))
        .zip(&cache.rstd)
    {
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for j in 0..width {
            dscale[j] += dy_row[j] * xhat_row[j];
            doffset[j] += dy_row[j];
            let d = dy_row[j] * scale[j];
            dxhat[j] = d;
            sum_d += d;
            sum_dx += d * xhat_row[j];
        }
        let mean_d = sum_d * inv_w;
        let mean_dx = sum_dx * inv_w;
        for j in 0..width {
            dx.push(r * (dxhat[j] - mean_d - xhat_row[j] * mean_dx));
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

/// Tanh-approximated GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (k * (x + T::of(GELU_C) * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    let c = T::of(GELU_C);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0) * c * x * x)
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// `log(sum(exp(row)))`, stable.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

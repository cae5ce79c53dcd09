//! Dense row-major matrices and the elementwise pieces of the transformer,
//! each with its backward pass.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point element type of a model: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::of(x.f64())).collect(),
        }
    }

    /// `self @ w + b` where `b` is a `1 x w.cols` row.
    pub fn affine(&self, w: &Mat<T>, b: &Mat<T>) -> Mat<T> {
        let mut out = Mat::zeros(self.rows, w.cols);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&b.data);
        }
        matmul_acc(self, w, &mut out);
        out
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Mat<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `out += a @ b`.
pub fn matmul_acc<T: Real>(a: &Mat<T>, b: &Mat<T>, out: &mut Mat<T>) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!((out.rows, out.cols), (a.rows, b.cols));
    for i in 0..a.rows {
        let o = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &x) in a.row(i).iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (y, &w) in o.iter_mut().zip(b.row(k)) {
                *y += x * w;
            }
        }
    }
}

/// `out += a^T @ b`.
pub fn matmul_tn_acc<T: Real>(a: &Mat<T>, b: &Mat<T>, out: &mut Mat<T>) {
    debug_assert_eq!(a.rows, b.rows);
    debug_assert_eq!((out.rows, out.cols), (a.cols, b.cols));
    for r in 0..a.rows {
        let brow = b.row(r);
        for (i, &x) in a.row(r).iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            let o = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (y, &w) in o.iter_mut().zip(brow) {
                *y += x * w;
            }
        }
    }
}

/// `a @ b^T`.
pub fn matmul_nt<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    debug_assert_eq!(a.cols, b.cols);
    let mut out = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = arow.iter().zip(b.row(j)).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// Backward of `y = x @ w + b`: accumulates `dw`, `db`, returns `dx`.
pub fn affine_backward<T: Real>(
    x: &Mat<T>,
    w: &Mat<T>,
    dy: &Mat<T>,
    dw: &mut Mat<T>,
    db: &mut Mat<T>,
) -> Mat<T> {
    matmul_tn_acc(x, dy, dw);
    for r in 0..dy.rows {
        for (g, &d) in db.data.iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
    matmul_nt(dy, w)
}

const GELU_A: f64 = 0.044715;

/// Tanh approximation of GeLU.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::of(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du
}

/// Row-wise layer norm statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LnCache<T> {
    pub xhat: Mat<T>,
    pub inv_std: Vec<T>,
}

pub fn layer_norm<T: Real>(
    x: &Mat<T>,
    gamma: &Mat<T>,
    beta: &Mat<T>,
    eps: f64,
) -> (Mat<T>, LnCache<T>) {
    let n = T::of(x.cols as f64);
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let is = T::one() / (var + T::of(eps)).sqrt();
        inv_std.push(is);
        let xh = xhat.row_mut(r);
        for (h, &v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * is;
        }
        let yr = &mut y.data[r * x.cols..(r + 1) * x.cols];
        for (j, (yj, &h)) in yr.iter_mut().zip(xhat.row(r)).enumerate() {
            *yj = gamma.data[j] * h + beta.data[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub fn layer_norm_backward<T: Real>(
    cache: &LnCache<T>,
    gamma: &Mat<T>,
    dy: &Mat<T>,
    dgamma: &mut Mat<T>,
    dbeta: &mut Mat<T>,
) -> Mat<T> {
    let cols = dy.cols;
    let n = T::of(cols as f64);
    let mut dx = Mat::zeros(dy.rows, cols);
    for r in 0..dy.rows {
        let d = dy.row(r);
        let xh = cache.xhat.row(r);
        let mut dxhat = vec![T::zero(); cols];
        for j in 0..cols {
            dgamma.data[j] += d[j] * xh[j];
            dbeta.data[j] += d[j];
            dxhat[j] = d[j] * gamma.data[j];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() / n;
        let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / n;
        let out = dx.row_mut(r);
        for j in 0..cols {
            out[j] = cache.inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

/// In-place softmax over the entries where `allowed` is true; the others
/// become exactly zero.
pub fn masked_softmax<T: Real>(row: &mut [T], allowed: &[bool]) {
    let max = row
        .iter()
        .zip(allowed)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v)
        .fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (v, &a) in row.iter_mut().zip(allowed) {
        *v = if a { (*v - max).exp() } else { T::zero() };
        total += *v;
    }
    if total > T::zero() {
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
}

/// Softmax of a slice as `f64`, numerically stable.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&l| {
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                (l - max).exp()
            }
        })
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let mut c = Mat::zeros(2, 2);
        matmul_acc(&a, &b, &mut c);
        assert_eq!(c.data, vec![4.0, 5.0, 10.0, 11.0]);

        let bt = Mat::from_vec(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(matmul_nt(&a, &bt).data, c.data);

        let mut t = Mat::zeros(3, 3);
        matmul_tn_acc(&a, &a, &mut t);
        assert_eq!(t.data[0], 17.0);
        assert_eq!(t.data[4], 29.0);
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(1.0f64) - 0.841_191_990_607_477_6).abs() < 1e-12);
        let h = 1e-6;
        for x in [-2.0f64, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let x = Mat::from_vec(1, 4, vec![1.0f64, 2.0, 3.0, 6.0]);
        let (y, _) = layer_norm(&x, &Mat::filled(1, 4, 1.0), &Mat::zeros(1, 4), 0.0);
        let mean: f64 = y.data.iter().sum::<f64>() / 4.0;
        let var: f64 = y.data.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_edges() {
        assert_eq!(softmax(&[3.0]), vec![1.0]);
        assert_eq!(softmax(&[0.0, f64::NEG_INFINITY]), vec![1.0, 0.0]);
        let p = softmax(&[0.5; 50]);
        assert!(p.iter().all(|&x| (x - 0.02).abs() < 1e-15));
        let mut row = [1.0f64, 5.0, 2.0];
        masked_softmax(&mut row, &[true, false, true]);
        assert_eq!(row[1], 0.0);
        assert!((row[0] + row[2] - 1.0).abs() < 1e-15);
    }
}

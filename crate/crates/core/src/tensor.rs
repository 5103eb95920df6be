//! Dense activation tensors and the scalar abstraction used by every network.
//!
//! Activations are stored channel-major as `[C, N, H, W]` ("CNHW"). With this
//! layout a convolution over a whole batch is a single GEMM, channel concat is
//! buffer concatenation, and a fully connected layer is a 1x1 convolution over a
//! `1x1` spatial grid.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};

/// Floating point element type for tensors. Implemented for `f32` (training)
/// and `f64` (gradient checking).
pub trait Real:
    num_like::Float
    + Default
    + Debug
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C <- alpha * A B + beta * C` with arbitrary strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping (for C)
    /// matrices of the given sizes.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

/// Minimal float surface needed by the engine; avoids pulling in a numerics
/// crate for a handful of methods.
pub mod num_like {
    use std::ops::{Add, Div, Mul, Neg, Sub};

    pub trait Float:
        Copy
        + PartialOrd
        + Add<Output = Self>
        + Sub<Output = Self>
        + Mul<Output = Self>
        + Div<Output = Self>
        + Neg<Output = Self>
    {
        fn zero() -> Self;
        fn one() -> Self;
        fn exp(self) -> Self;
        fn ln(self) -> Self;
        fn tanh(self) -> Self;
        fn sqrt(self) -> Self;
        fn abs(self) -> Self;
        fn max(self, other: Self) -> Self;
        fn min(self, other: Self) -> Self;
        fn is_finite(self) -> bool;
    }

    macro_rules! impl_float {
        ($t:ty) => {
            impl Float for $t {
                #[inline]
                fn zero() -> Self {
                    0.0
                }
                #[inline]
                fn one() -> Self {
                    1.0
                }
                #[inline]
                fn exp(self) -> Self {
                    <$t>::exp(self)
                }
                #[inline]
                fn ln(self) -> Self {
                    <$t>::ln(self)
                }
                #[inline]
                fn tanh(self) -> Self {
                    <$t>::tanh(self)
                }
                #[inline]
                fn sqrt(self) -> Self {
                    <$t>::sqrt(self)
                }
                #[inline]
                fn abs(self) -> Self {
                    <$t>::abs(self)
                }
                #[inline]
                fn max(self, other: Self) -> Self {
                    <$t>::max(self, other)
                }
                #[inline]
                fn min(self, other: Self) -> Self {
                    <$t>::min(self, other)
                }
                #[inline]
                fn is_finite(self) -> bool {
                    <$t>::is_finite(self)
                }
            }
        };
    }
    impl_float!(f32);
    impl_float!(f64);
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row-major matrix product helper over slices: `c = alpha * op(a) op(b) + beta * c`.
///
/// `a` is `m x k` (or `k x m` when `trans_a`), `b` is `k x n` (or `n x k`
/// when `trans_b`), `c` is `m x n`, all densely packed.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    c: &mut [T],
    beta: T,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; c is uniquely borrowed.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// A `[C, N, H, W]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            batch,
            height,
            width,
            data: vec![T::zero(); channels * batch * height * width],
        }
    }

    pub fn from_vec(channels: usize, batch: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let want = channels * batch * height * width;
        if data.len() != want {
            return Err(Error::Shape(format!(
                "tensor data has {} elements, shape [{channels}, {batch}, {height}, {width}] needs {want}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            batch,
            height,
            width,
            data,
        })
    }

    /// A batch of vectors, stored as `[dim, N, 1, 1]`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut out = Self::zeros(dim, n, 1, 1);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has length {}, expected {dim}",
                    row.len()
                )));
            }
            for (d, &v) in row.iter().enumerate() {
                out.data[d * n + i] = v;
            }
        }
        Ok(out)
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.channels, self.batch, self.height, self.width]
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: shape {:?} does not match {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// A tensor of the same shape holding `data`.
    pub fn with_data(&self, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), self.len());
        Self {
            channels: self.channels,
            batch: self.batch,
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.channels, self.batch, self.height, self.width)
    }

    /// All elements belonging to batch item `n`, in `[C, H, W]` order.
    pub fn item(&self, n: usize) -> Vec<T> {
        let p = self.plane();
        let mut out = Vec::with_capacity(self.channels * p);
        for c in 0..self.channels {
            let start = (c * self.batch + n) * p;
            out.extend_from_slice(&self.data[start..start + p]);
        }
        out
    }

    /// Column `n` of a `[dim, N, 1, 1]` tensor.
    pub fn row(&self, n: usize) -> Vec<T> {
        debug_assert_eq!(self.plane(), 1);
        (0..self.channels).map(|d| self.data[d * self.batch + n]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.batch).map(|n| self.row(n)).collect()
    }

    /// Selects a subset of batch items, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let p = self.plane();
        let mut out = Self::zeros(self.channels, indices.len(), self.height, self.width);
        for c in 0..self.channels {
            for (j, &n) in indices.iter().enumerate() {
                let src = (c * self.batch + n) * p;
                let dst = (c * indices.len() + j) * p;
                out.data[dst..dst + p].copy_from_slice(&self.data[src..src + p]);
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        let a = T::from_f64(alpha);
        for (s, &o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let (n, h, w) = (first.batch, first.height, first.width);
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.len()).sum());
        let mut channels = 0;
        for t in parts {
            if (t.batch, t.height, t.width) != (n, h, w) {
                return Err(Error::Shape(format!(
                    "concat: {:?} incompatible with batch/spatial {:?}",
                    t.shape(),
                    (n, h, w)
                )));
            }
            channels += t.channels;
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            channels,
            batch: n,
            height: h,
            width: w,
            data,
        })
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, sizes: &[usize]) -> Vec<Self> {
        debug_assert_eq!(sizes.iter().sum::<usize>(), self.channels);
        let stride = self.batch * self.plane();
        let mut offset = 0;
        sizes
            .iter()
            .map(|&c| {
                let t = Self {
                    channels: c,
                    batch: self.batch,
                    height: self.height,
                    width: self.width,
                    data: self.data[offset * stride..(offset + c) * stride].to_vec(),
                };
                offset += c;
                t
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            batch: self.batch,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Converts `[H, W, C]` images into one `[C, N, H, W]` tensor.
pub fn images_to_tensor<T: Real>(images: &[&[f32]], height: usize, width: usize, channels: usize) -> Result<Tensor<T>> {
    let n = images.len();
    let p = height * width;
    let mut out = Tensor::zeros(channels, n, height, width);
    for (i, img) in images.iter().enumerate() {
        if img.len() != p * channels {
            return Err(Error::Shape(format!(
                "image {i} has {} values, expected {height}x{width}x{channels}",
                img.len()
            )));
        }
        for (px, chunk) in img.chunks_exact(channels).enumerate() {
            for (c, &v) in chunk.iter().enumerate() {
                out.data[(c * n + i) * p + px] = T::from_f64(v as f64);
            }
        }
    }
    Ok(out)
}

/// Extracts batch item `n` of a `[C, N, H, W]` tensor as an `[H, W, C]` image.
pub fn tensor_to_image<T: Real>(t: &Tensor<T>, n: usize) -> Vec<f32> {
    let p = t.plane();
    let mut out = vec![0.0f32; p * t.channels];
    for c in 0..t.channels {
        let base = (c * t.batch + n) * p;
        for px in 0..p {
            out[px * t.channels + c] = t.data[base + px].to_f64() as f32;
        }
    }
    out
}

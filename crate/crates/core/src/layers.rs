//! Trainable building blocks with hand-written backward passes.
//!
//! Every layer accumulates parameter gradients into [`Param::grad`]; callers
//! zero them between optimizer steps.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Upper bound on im2col buffer size (elements) before splitting a batch.
const COL_BUDGET: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            value: vec![T::zero(); len],
            grad: vec![T::zero(); len],
        }
    }

    pub fn normal(name: impl Into<String>, shape: Vec<usize>, std: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(name, shape);
        let dist = Normal::new(0.0, std).expect("finite std");
        for v in &mut p.value {
            *v = T::from_f64(dist.sample(rng));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Anything owning a fixed, ordered list of parameters.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn flat_values(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    fn flat_grads(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    fn set_flat_values(&mut self, flat: &[T]) -> Result<()> {
        let total = self.num_params();
        if flat.len() != total {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} values, network has {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Hash of the exact bit patterns of every parameter value.
    fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in self.params() {
            p.name.hash(&mut h);
            for v in &p.value {
                v.to_f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

fn he_std(fan_in: usize, negative_slope: f64) -> f64 {
    (2.0 / ((1.0 + negative_slope * negative_slope) * fan_in as f64)).sqrt()
}

/// Initialization gain for a layer's weights.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// He-normal for a following (leaky) rectifier with the given slope.
    He(f64),
    /// Normal with an explicit standard deviation.
    Std(f64),
}

impl Init {
    fn std(self, fan_in: usize) -> f64 {
        match self {
            Init::He(slope) => he_std(fan_in, slope),
            Init::Std(s) => s,
        }
    }
}

/// 2-D convolution with square kernels, zero padding and a bias per output channel.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Param::normal(
                format!("{name}.weight"),
                vec![out_channels, in_channels, kernel, kernel],
                init.std(fan_in),
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), vec![out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// A fully connected layer: a 1x1 convolution applied to `[D, N, 1, 1]`.
    pub fn linear(name: &str, in_dim: usize, out_dim: usize, init: Init, rng: &mut impl Rng) -> Self {
        Self::new(name, in_dim, out_dim, 1, 1, 0, init, rng)
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        let ho = (height + 2 * self.padding - self.kernel) / self.stride + 1;
        let wo = (width + 2 * self.padding - self.kernel) / self.stride + 1;
        (ho, wo)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn chunk_images(&self, plane_out: usize) -> usize {
        (COL_BUDGET / (self.patch_len() * plane_out).max(1)).max(1)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name, self.in_channels, x.channels
            )));
        }
        if x.height + 2 * self.padding < self.kernel || x.width + 2 * self.padding < self.kernel {
            return Err(Error::Shape(format!(
                "{}: input {}x{} smaller than kernel {}",
                self.weight.name, x.height, x.width, self.kernel
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (ho, wo) = self.output_size(x.height, x.width);
        let n = x.batch;
        let p_out = ho * wo;
        let np = n * p_out;
        let k = self.patch_len();
        let mut out = Tensor::zeros(self.out_channels, n, ho, wo);
        for co in 0..self.out_channels {
            let b = self.bias.value[co];
            out.data[co * np..(co + 1) * np].iter_mut().for_each(|v| *v = b);
        }
        if self.is_pointwise() {
            // SAFETY: weight is out x k, x is k x np, out is out x np, all dense.
            unsafe {
                T::gemm(
                    self.out_channels,
                    k,
                    np,
                    T::one(),
                    self.weight.value.as_ptr(),
                    k as isize,
                    1,
                    x.data.as_ptr(),
                    np as isize,
                    1,
                    T::one(),
                    out.data.as_mut_ptr(),
                    np as isize,
                    1,
                );
            }
            return Ok(out);
        }
        let chunk = self.chunk_images(p_out);
        let mut col = vec![T::zero(); k * chunk.min(n) * p_out];
        let mut n0 = 0;
        while n0 < n {
            let n1 = (n0 + chunk).min(n);
            let cp = (n1 - n0) * p_out;
            im2col(
                x,
                self.kernel,
                self.stride,
                self.padding,
                ho,
                wo,
                n0,
                n1,
                &mut col[..k * cp],
            );
            // SAFETY: columns n0*p_out..n1*p_out of each output row are written.
            unsafe {
                T::gemm(
                    self.out_channels,
                    k,
                    cp,
                    T::one(),
                    self.weight.value.as_ptr(),
                    k as isize,
                    1,
                    col.as_ptr(),
                    cp as isize,
                    1,
                    T::one(),
                    out.data.as_mut_ptr().add(n0 * p_out),
                    np as isize,
                    1,
                );
            }
            n0 = n1;
        }
        Ok(out)
    }

    /// Backpropagates `dy` through the layer. Parameter gradients are
    /// accumulated; the input gradient is returned when `need_input_grad`.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        self.accumulate_param_grads(x, dy);
        need_input_grad.then(|| self.input_grad(x.height, x.width, dy))
    }

    fn accumulate_param_grads(&mut self, x: &Tensor<T>, dy: &Tensor<T>) {
        let (ho, wo) = (dy.height, dy.width);
        let n = x.batch;
        let p_out = ho * wo;
        let np = n * p_out;
        let k = self.patch_len();
        for co in 0..self.out_channels {
            let s: f64 = dy.data[co * np..(co + 1) * np].iter().map(|v| v.to_f64()).sum();
            self.bias.grad[co] += T::from_f64(s);
        }
        if self.is_pointwise() {
            // dW += dY (out x np) * X^T (np x k)
            unsafe {
                T::gemm(
                    self.out_channels,
                    np,
                    k,
                    T::one(),
                    dy.data.as_ptr(),
                    np as isize,
                    1,
                    x.data.as_ptr(),
                    1,
                    np as isize,
                    T::one(),
                    self.weight.grad.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
            return;
        }
        let chunk = self.chunk_images(p_out);
        let mut col = vec![T::zero(); k * chunk.min(n) * p_out];
        let mut n0 = 0;
        while n0 < n {
            let n1 = (n0 + chunk).min(n);
            let cp = (n1 - n0) * p_out;
            im2col(
                x,
                self.kernel,
                self.stride,
                self.padding,
                ho,
                wo,
                n0,
                n1,
                &mut col[..k * cp],
            );
            unsafe {
                T::gemm(
                    self.out_channels,
                    cp,
                    k,
                    T::one(),
                    dy.data.as_ptr().add(n0 * p_out),
                    np as isize,
                    1,
                    col.as_ptr(),
                    1,
                    cp as isize,
                    T::one(),
                    self.weight.grad.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
            n0 = n1;
        }
    }

    /// Gradient with respect to the input only; parameters are untouched.
    pub fn input_grad(&self, in_height: usize, in_width: usize, dy: &Tensor<T>) -> Tensor<T> {
        let (ho, wo) = (dy.height, dy.width);
        let n = dy.batch;
        let p_out = ho * wo;
        let np = n * p_out;
        let k = self.patch_len();
        let mut dx = Tensor::zeros(self.in_channels, n, in_height, in_width);
        if self.is_pointwise() {
            unsafe {
                T::gemm(
                    k,
                    self.out_channels,
                    np,
                    T::one(),
                    self.weight.value.as_ptr(),
                    1,
                    k as isize,
                    dy.data.as_ptr(),
                    np as isize,
                    1,
                    T::zero(),
                    dx.data.as_mut_ptr(),
                    np as isize,
                    1,
                );
            }
            return dx;
        }
        let chunk = self.chunk_images(p_out);
        let mut col = vec![T::zero(); k * chunk.min(n) * p_out];
        let mut n0 = 0;
        while n0 < n {
            let n1 = (n0 + chunk).min(n);
            let cp = (n1 - n0) * p_out;
            unsafe {
                T::gemm(
                    k,
                    self.out_channels,
                    cp,
                    T::one(),
                    self.weight.value.as_ptr(),
                    1,
                    k as isize,
                    dy.data.as_ptr().add(n0 * p_out),
                    np as isize,
                    1,
                    T::zero(),
                    col.as_mut_ptr(),
                    cp as isize,
                    1,
                );
            }
            col2im(
                &col[..k * cp],
                self.kernel,
                self.stride,
                self.padding,
                ho,
                wo,
                n0,
                n1,
                &mut dx,
            );
            n0 = n1;
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Range of output positions whose input coordinate `o * stride + offset`
/// lies in `[0, size)`.
#[inline]
fn valid_range(offset: isize, stride: usize, size: usize, out: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let hi_excl = if (size as isize) <= offset {
        0
    } else {
        ((size as isize - offset) + s - 1) / s
    };
    let lo = (lo as usize).min(out);
    let hi = (hi_excl.max(0) as usize).min(out);
    (lo, hi.max(lo))
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    n0: usize,
    n1: usize,
    col: &mut [T],
) {
    let (h, w, n) = (x.height, x.width, x.batch);
    let plane = h * w;
    let p_out = ho * wo;
    let cp = (n1 - n0) * p_out;
    for ci in 0..x.channels {
        for ky in 0..kernel {
            let (oy_lo, oy_hi) = valid_range(ky as isize - pad as isize, stride, h, ho);
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let dst_row = &mut col[row * cp..(row + 1) * cp];
                let x_off = kx as isize - pad as isize;
                let (ox_lo, ox_hi) = valid_range(x_off, stride, w, wo);
                for img in n0..n1 {
                    let src = &x.data[(ci * n + img) * plane..(ci * n + img + 1) * plane];
                    let dst = &mut dst_row[(img - n0) * p_out..(img - n0 + 1) * p_out];
                    for oy in 0..ho {
                        let d = &mut dst[oy * wo..(oy + 1) * wo];
                        if oy < oy_lo || oy >= oy_hi {
                            d.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let iy = (oy * stride + ky) - pad;
                        let srow = &src[iy * w..(iy + 1) * w];
                        d[..ox_lo].iter_mut().for_each(|v| *v = T::zero());
                        d[ox_hi..].iter_mut().for_each(|v| *v = T::zero());
                        if stride == 1 {
                            let start = (ox_lo as isize + x_off) as usize;
                            d[ox_lo..ox_hi].copy_from_slice(&srow[start..start + (ox_hi - ox_lo)]);
                        } else {
                            for ox in ox_lo..ox_hi {
                                d[ox] = srow[(ox * stride + kx) - pad];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    col: &[T],
    kernel: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    n0: usize,
    n1: usize,
    dx: &mut Tensor<T>,
) {
    let (h, w, n) = (dx.height, dx.width, dx.batch);
    let plane = h * w;
    let p_out = ho * wo;
    let cp = (n1 - n0) * p_out;
    for ci in 0..dx.channels {
        for ky in 0..kernel {
            let (oy_lo, oy_hi) = valid_range(ky as isize - pad as isize, stride, h, ho);
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let src_row = &col[row * cp..(row + 1) * cp];
                let x_off = kx as isize - pad as isize;
                let (ox_lo, ox_hi) = valid_range(x_off, stride, w, wo);
                for img in n0..n1 {
                    let dst = &mut dx.data[(ci * n + img) * plane..(ci * n + img + 1) * plane];
                    let src = &src_row[(img - n0) * p_out..(img - n0 + 1) * p_out];
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * stride + ky) - pad;
                        let drow = &mut dst[iy * w..(iy + 1) * w];
                        let s = &src[oy * wo..(oy + 1) * wo];
                        for ox in ox_lo..ox_hi {
                            drow[(ox * stride + kx) - pad] += s[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution with a 2x2 kernel and stride 2: doubles the
/// spatial size. Weight rows are indexed by `(out_channel, dy, dx)`.
#[derive(Clone, Debug)]
pub struct UpConv2x2<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl<T: Real> UpConv2x2<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, init: Init, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::normal(
                format!("{name}.weight"),
                vec![out_channels * 4, in_channels],
                init.std(in_channels),
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), vec![out_channels]),
            in_channels,
            out_channels,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name, self.in_channels, x.channels
            )));
        }
        let (n, h, w) = (x.batch, x.height, x.width);
        let np = n * h * w;
        let rows = self.out_channels * 4;
        let mut t = vec![T::zero(); rows * np];
        crate::tensor::matmul(
            rows,
            self.in_channels,
            np,
            &self.weight.value,
            false,
            &x.data,
            false,
            &mut t,
            T::zero(),
        );
        let mut out = Tensor::zeros(self.out_channels, n, 2 * h, 2 * w);
        let (ho, wo) = (2 * h, 2 * w);
        for co in 0..self.out_channels {
            let b = self.bias.value[co];
            for d in 0..4 {
                let (dy, dx) = (d / 2, d % 2);
                let trow = &t[(co * 4 + d) * np..(co * 4 + d + 1) * np];
                for img in 0..n {
                    let dst = &mut out.data[(co * n + img) * ho * wo..(co * n + img + 1) * ho * wo];
                    let src = &trow[img * h * w..(img + 1) * h * w];
                    for y in 0..h {
                        let drow = &mut dst[(2 * y + dy) * wo..(2 * y + dy + 1) * wo];
                        for xx in 0..w {
                            drow[2 * xx + dx] = src[y * w + xx] + b;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn gather(&self, dout: &Tensor<T>) -> Vec<T> {
        let (n, ho, wo) = (dout.batch, dout.height, dout.width);
        let (h, w) = (ho / 2, wo / 2);
        let np = n * h * w;
        let mut dt = vec![T::zero(); self.out_channels * 4 * np];
        for co in 0..self.out_channels {
            for d in 0..4 {
                let (dy, dx) = (d / 2, d % 2);
                let trow = &mut dt[(co * 4 + d) * np..(co * 4 + d + 1) * np];
                for img in 0..n {
                    let src = &dout.data[(co * n + img) * ho * wo..(co * n + img + 1) * ho * wo];
                    let dst = &mut trow[img * h * w..(img + 1) * h * w];
                    for y in 0..h {
                        let srow = &src[(2 * y + dy) * wo..(2 * y + dy + 1) * wo];
                        for xx in 0..w {
                            dst[y * w + xx] = srow[2 * xx + dx];
                        }
                    }
                }
            }
        }
        dt
    }

    pub fn backward(&mut self, x: &Tensor<T>, dout: &Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        let dt = self.gather(dout);
        let np = x.batch * x.height * x.width;
        let rows = self.out_channels * 4;
        let plane = dout.plane() * dout.batch;
        for co in 0..self.out_channels {
            let s: f64 = dout.data[co * plane..(co + 1) * plane].iter().map(|v| v.to_f64()).sum();
            self.bias.grad[co] += T::from_f64(s);
        }
        // dW (rows x in) += dT (rows x np) * X^T (np x in)
        crate::tensor::matmul(
            rows,
            np,
            self.in_channels,
            &dt,
            false,
            &x.data,
            true,
            &mut self.weight.grad,
            T::one(),
        );
        need_input_grad.then(|| {
            let mut dx = Tensor::zeros(self.in_channels, x.batch, x.height, x.width);
            crate::tensor::matmul(
                self.in_channels,
                rows,
                np,
                &self.weight.value,
                true,
                &dt,
                false,
                &mut dx.data,
                T::zero(),
            );
            dx
        })
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Masks `grad` by `output > 0`; works for rectifiers given their output.
pub fn relu_backward_inplace<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn leaky_relu_inplace<T: Real>(x: &mut Tensor<T>, slope: f64) {
    let s = T::from_f64(slope);
    x.data.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = *v * s
        }
    });
}

pub fn leaky_relu_backward_inplace<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>, slope: f64) {
    let s = T::from_f64(slope);
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        if y <= T::zero() {
            *g = *g * s;
        }
    }
}

pub fn tanh_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data.iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward_inplace<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        *g = *g * (T::one() - y * y);
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data.iter_mut().for_each(|v| *v = sigmoid(*v));
}

pub fn sigmoid_backward_inplace<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        *g = *g * y * (T::one() - y);
    }
}

/// Spatial mean: `[C, N, H, W] -> [C, N, 1, 1]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let p = x.plane();
    let inv = T::from_f64(1.0 / p as f64);
    let mut out = Tensor::zeros(x.channels, x.batch, 1, 1);
    for (o, chunk) in out.data.iter_mut().zip(x.data.chunks_exact(p)) {
        *o = chunk.iter().copied().sum::<T>() * inv;
    }
    out
}

pub fn global_avg_pool_backward<T: Real>(dy: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    let p = height * width;
    let inv = T::from_f64(1.0 / p as f64);
    let mut dx = Tensor::zeros(dy.channels, dy.batch, height, width);
    for (chunk, &g) in dx.data.chunks_exact_mut(p).zip(&dy.data) {
        chunk.iter_mut().for_each(|v| *v = g * inv);
    }
    dx
}

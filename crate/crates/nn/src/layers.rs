//! Convolution, max pooling, global average pooling and dense layers.
//!
//! Each layer caches what its backward pass needs during `forward`;
//! `backward` accumulates parameter gradients and returns the input gradient.

use rand::Rng;

use crate::tensor::{Scalar, Tensor};
use crate::NnError;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(shape: &[usize]) -> Param<T> {
        let len = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![T::zero(); len],
            grad: vec![T::zero(); len],
        }
    }

    /// Uniform in (−limit, limit).
    pub fn uniform(shape: &[usize], limit: f64, rng: &mut impl Rng) -> Param<T> {
        let mut p = Param::zeros(shape);
        for v in p.value.iter_mut() {
            *v = T::of(rng.gen_range(-limit..limit));
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output = ceil(input / stride); any odd padding goes after.
    Same,
    Valid,
}

/// Output size and leading pad along one axis.
pub fn out_dim(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize), NnError> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out.max(1) - 1) * stride + kernel).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < kernel {
                return Err(NnError::ShapeMismatch(format!("input {input} smaller than kernel {kernel}")));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pt: usize,
    pl: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let p = self.oh * self.ow;
        for ci in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = &mut cols[((ci * self.kh + ki) * self.kw + kj) * p..][..p];
                    for oy in 0..self.oh {
                        let y = (oy * self.stride + ki).wrapping_sub(self.pt);
                        for ox in 0..self.ow {
                            let xx = (ox * self.stride + kj).wrapping_sub(self.pl);
                            row[oy * self.ow + ox] = if y < self.h && xx < self.w {
                                x[(ci * self.h + y) * self.w + xx]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.oh * self.ow;
        for ci in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = &cols[((ci * self.kh + ki) * self.kw + kj) * p..][..p];
                    for oy in 0..self.oh {
                        let y = (oy * self.stride + ki).wrapping_sub(self.pt);
                        if y >= self.h {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let xx = (ox * self.stride + kj).wrapping_sub(self.pl);
                            if xx < self.w {
                                let d = &mut dx[(ci * self.h + y) * self.w + xx];
                                *d = *d + row[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// 1×1 stride-1 convolutions read the input as the column matrix directly.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1
    }
}

/// 2-D cross-correlation with bias and optional fused ReLU. Weights are
/// (out, in, kh, kw).
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: Padding,
    pub relu: bool,
    input: Option<Tensor<T>>,
    output: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// Fan-in scaled uniform init: limit √(6/fan_in) before a ReLU, √(3/fan_in)
    /// for a linear output. Bias starts at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
        relu: bool,
        rng: &mut impl Rng,
    ) -> Conv2d<T> {
        let fan_in = (in_channels * kernel.0 * kernel.1) as f64;
        let limit = (if relu { 6.0 } else { 3.0 } / fan_in).sqrt();
        Conv2d {
            weight: Param::uniform(&[out_channels, in_channels, kernel.0, kernel.1], limit, rng),
            bias: Param::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            relu,
            input: None,
            output: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        Ok((
            out_dim(h, self.kernel.0, self.stride, self.padding)?.0,
            out_dim(w, self.kernel.1, self.stride, self.padding)?.0,
        ))
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry, NnError> {
        if x.c() != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "conv expects {} channels, got {:?}",
                self.in_channels, x.shape
            )));
        }
        let (oh, pt) = out_dim(x.h(), self.kernel.0, self.stride, self.padding)?;
        let (ow, pl) = out_dim(x.w(), self.kernel.1, self.stride, self.padding)?;
        Ok(Geometry {
            c: x.c(),
            h: x.h(),
            w: x.w(),
            kh: self.kernel.0,
            kw: self.kernel.1,
            stride: self.stride,
            pt,
            pl,
            oh,
            ow,
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let g = self.geometry(x)?;
        let p = g.oh * g.ow;
        let ckk = g.c * g.kh * g.kw;
        let mut y = Tensor::zeros([x.n(), self.out_channels, g.oh, g.ow]);
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); ckk * p] };
        for n in 0..x.n() {
            let xs = x.sample(n);
            if !g.is_pointwise() {
                g.im2col(xs, &mut cols);
            }
            let src = if g.is_pointwise() { xs } else { &cols[..] };
            let ys = y.sample_mut(n);
            for (o, row) in ys.chunks_exact_mut(p).enumerate() {
                row.fill(self.bias.value[o]);
            }
            T::gemm(self.out_channels, ckk, p, &self.weight.value, false, src, false, ys, T::one());
        }
        if self.relu {
            y.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        debug_assert!(y.all_finite(), "non-finite conv output");
        self.input = Some(x.clone());
        if self.relu {
            self.output = Some(y.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.input.as_ref().ok_or(NnError::NoForward)?;
        let g = self.geometry(x)?;
        let p = g.oh * g.ow;
        let ckk = g.c * g.kh * g.kw;
        if dy.shape != [x.n(), self.out_channels, g.oh, g.ow] {
            return Err(NnError::ShapeMismatch(format!("conv gradient {:?}", dy.shape)));
        }
        let mut dy = dy.clone();
        if let Some(out) = &self.output {
            for (d, o) in dy.data.iter_mut().zip(&out.data) {
                if *o <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        let mut dx = Tensor::zeros(x.shape);
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); ckk * p] };
        let mut dcols = vec![T::zero(); ckk * p];
        for n in 0..x.n() {
            let xs = x.sample(n);
            if !g.is_pointwise() {
                g.im2col(xs, &mut cols);
            }
            let src = if g.is_pointwise() { xs } else { &cols[..] };
            let dys = dy.sample(n);
            T::gemm(self.out_channels, p, ckk, dys, false, src, true, &mut self.weight.grad, T::one());
            for (o, row) in dys.chunks_exact(p).enumerate() {
                let s = row.iter().fold(T::zero(), |a, &b| a + b);
                self.bias.grad[o] = self.bias.grad[o] + s;
            }
            T::gemm(ckk, self.out_channels, p, &self.weight.value, true, dys, false, &mut dcols, T::zero());
            if g.is_pointwise() {
                dx.sample_mut(n).copy_from_slice(&dcols);
            } else {
                g.col2im(&dcols, dx.sample_mut(n));
            }
        }
        Ok(dx)
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Max pooling; windows clipped at the border behave like −∞ padding.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub size: usize,
    pub stride: usize,
    pub padding: Padding,
    argmax: Vec<usize>,
    input_shape: Option<[usize; 4]>,
}

impl MaxPool2d {
    pub fn new(size: usize, stride: usize, padding: Padding) -> MaxPool2d {
        MaxPool2d {
            size,
            stride,
            padding,
            argmax: Vec::new(),
            input_shape: None,
        }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let [n, c, h, w] = x.shape;
        let (oh, pt) = out_dim(h, self.size, self.stride, self.padding)?;
        let (ow, pl) = out_dim(w, self.size, self.stride, self.padding)?;
        let mut y = Tensor::zeros([n, c, oh, ow]);
        self.argmax.clear();
        self.argmax.reserve(y.data.len());
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                let y0 = (oy * self.stride).saturating_sub(pt);
                let y1 = (oy * self.stride + self.size - pt).min(h);
                for ox in 0..ow {
                    let x0 = (ox * self.stride).saturating_sub(pl);
                    let x1 = (ox * self.stride + self.size - pl).min(w);
                    let mut best = base + y0 * w + x0;
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            let i = base + yy * w + xx;
                            if x.data[i] > x.data[best] {
                                best = i;
                            }
                        }
                    }
                    y.data[(plane * oh + oy) * ow + ox] = x.data[best];
                    self.argmax.push(best);
                }
            }
        }
        self.input_shape = Some(x.shape);
        Ok(y)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let shape = self.input_shape.ok_or(NnError::NoForward)?;
        if dy.data.len() != self.argmax.len() {
            return Err(NnError::ShapeMismatch(format!("pool gradient {:?}", dy.shape)));
        }
        let mut dx = Tensor::zeros(shape);
        for (&i, &d) in self.argmax.iter().zip(&dy.data) {
            dx.data[i] = dx.data[i] + d;
        }
        Ok(dx)
    }
}

/// Mean over each channel's spatial positions: (N, C, H, W) → (N, C, 1, 1).
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = x.shape;
        let inv = T::of(1.0 / (h * w) as f64);
        let data = x
            .data
            .chunks_exact(h * w)
            .map(|plane| plane.iter().fold(T::zero(), |a, &b| a + b) * inv)
            .collect();
        self.input_shape = Some(x.shape);
        Tensor { shape: [n, c, 1, 1], data }
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let shape = self.input_shape.ok_or(NnError::NoForward)?;
        let hw = shape[2] * shape[3];
        if dy.data.len() * hw != shape.iter().product::<usize>() {
            return Err(NnError::ShapeMismatch(format!("pool gradient {:?}", dy.shape)));
        }
        let inv = T::of(1.0 / hw as f64);
        let mut dx = Tensor::zeros(shape);
        for (plane, &d) in dx.data.chunks_exact_mut(hw).zip(&dy.data) {
            plane.fill(d * inv);
        }
        Ok(dx)
    }
}

/// Fully connected layer on (N, in, 1, 1) inputs; weights are (out, in).
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Dense<T> {
        Dense {
            weight: Param::uniform(&[outputs, inputs], (3.0 / inputs as f64).sqrt(), rng),
            bias: Param::zeros(&[outputs]),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let n = x.n();
        let (i, o) = (self.inputs(), self.outputs());
        if x.sample_len() != i {
            return Err(NnError::ShapeMismatch(format!("dense expects {i} inputs, got {:?}", x.shape)));
        }
        let mut y = Tensor::zeros([n, o, 1, 1]);
        for row in y.data.chunks_exact_mut(o) {
            row.copy_from_slice(&self.bias.value);
        }
        T::gemm(n, i, o, &x.data, false, &self.weight.value, true, &mut y.data, T::one());
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.input.as_ref().ok_or(NnError::NoForward)?;
        let n = x.n();
        let (i, o) = (self.inputs(), self.outputs());
        if dy.data.len() != n * o {
            return Err(NnError::ShapeMismatch(format!("dense gradient {:?}", dy.shape)));
        }
        T::gemm(o, n, i, &dy.data, true, &x.data, false, &mut self.weight.grad, T::one());
        for row in dy.data.chunks_exact(o) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        let mut dx = Tensor::zeros(x.shape);
        T::gemm(n, o, i, &dy.data, false, &self.weight.value, false, &mut dx.data, T::zero());
        Ok(dx)
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

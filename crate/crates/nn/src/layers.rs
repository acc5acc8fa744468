//! Layers with explicit forward caches and hand-derived backward passes.
//!
//! Forward calls never mutate a layer; they return the activations needed by
//! the matching backward call. Backward calls accumulate into the layer's
//! parameter gradients.

use rand::Rng;

use crate::error::{shape_err, NnError, Result};
use crate::linalg::{col2im, gemm, im2col, ConvGeometry};
use crate::param::{Param, Parameters};
use crate::tensor::{Shape, Tensor};

/// Which gradients a backward call should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Backprop {
    pub params: bool,
    pub input: bool,
}

impl Backprop {
    pub const FULL: Backprop = Backprop { params: true, input: true };
    pub const PARAMS_ONLY: Backprop = Backprop { params: true, input: false };
    pub const INPUT_ONLY: Backprop = Backprop { params: false, input: true };
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `out x (in * k * k)`
    pub weight: Param,
    pub bias: Option<Param>,
}

#[derive(Clone, Debug)]
pub struct Conv2dCache {
    geometry: ConvGeometry,
    cols: Vec<f32>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(NnError::Config(format!(
                "{name}: conv needs positive channels/kernel/stride, got in={in_channels} out={out_channels} k={kernel} s={stride}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::zeros(format!("{name}.weight"), &[out_channels, in_channels, kernel, kernel]),
            bias: bias.then(|| Param::zeros(format!("{name}.bias"), &[out_channels])),
        })
    }

    fn geometry(&self, input: Shape) -> Result<ConvGeometry> {
        if input.c != self.in_channels {
            return Err(shape_err("Conv2d", format!("{} input channels", self.in_channels), input));
        }
        ConvGeometry::new(input.c, input.h, input.w, self.kernel, self.stride, self.padding).ok_or_else(|| {
            shape_err(
                "Conv2d",
                format!("spatial size >= kernel {} (padding {})", self.kernel, self.padding),
                input,
            )
        })
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let g = self.geometry(input)?;
        Ok(Shape::new(self.out_channels, g.out_h, g.out_w))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv2dCache)> {
        let g = self.geometry(x.shape())?;
        let mut cols = vec![0.0f32; g.col_rows() * g.col_cols()];
        im2col(x.data(), &g, &mut cols);
        let n = g.col_cols();
        let mut y = Tensor::zeros(Shape::new(self.out_channels, g.out_h, g.out_w));
        gemm(self.out_channels, n, g.col_rows(), &self.weight.value, false, &cols, false, 0.0, y.data_mut());
        if let Some(b) = &self.bias {
            for (o, plane) in y.data_mut().chunks_exact_mut(n).enumerate() {
                plane.iter_mut().for_each(|v| *v += b.value[o]);
            }
        }
        Ok((y, Conv2dCache { geometry: g, cols }))
    }

    pub fn backward(&mut self, cache: &Conv2dCache, dy: &Tensor, mode: Backprop) -> Result<Option<Tensor>> {
        let g = &cache.geometry;
        let n = g.col_cols();
        dy.ensure_shape("Conv2d::backward", Shape::new(self.out_channels, g.out_h, g.out_w))?;
        if mode.params {
            gemm(
                self.out_channels,
                g.col_rows(),
                n,
                dy.data(),
                false,
                &cache.cols,
                true,
                1.0,
                &mut self.weight.grad,
            );
            if let Some(b) = &mut self.bias {
                for (o, plane) in dy.data().chunks_exact(n).enumerate() {
                    b.grad[o] += plane.iter().sum::<f32>();
                }
            }
        }
        if !mode.input {
            return Ok(None);
        }
        let mut dcols = vec![0.0f32; g.col_rows() * n];
        gemm(g.col_rows(), n, self.out_channels, &self.weight.value, true, dy.data(), false, 0.0, &mut dcols);
        let mut dx = Tensor::zeros(Shape::new(g.channels, g.in_h, g.in_w));
        col2im(&dcols, g, dx.data_mut());
        Ok(Some(dx))
    }
}

impl Parameters for Conv2d {
    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Fractionally strided convolution; the exact adjoint of [`Conv2d`] with the same geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `in x (out * k * k)`
    pub weight: Param,
    pub bias: Option<Param>,
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2dCache {
    geometry: ConvGeometry,
    input: Tensor,
}

impl ConvTranspose2d {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(NnError::Config(format!(
                "{name}: transposed conv needs positive channels/kernel/stride, got in={in_channels} out={out_channels} k={kernel} s={stride}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::zeros(format!("{name}.weight"), &[in_channels, out_channels, kernel, kernel]),
            bias: bias.then(|| Param::zeros(format!("{name}.bias"), &[out_channels])),
        })
    }

    /// Geometry of the forward convolution this layer is the transpose of.
    fn geometry(&self, input: Shape) -> Result<ConvGeometry> {
        if input.c != self.in_channels {
            return Err(shape_err(
                "ConvTranspose2d",
                format!("{} input channels", self.in_channels),
                input,
            ));
        }
        let span = |n: usize| {
            n.checked_sub(1)
                .map(|n1| n1 * self.stride + self.kernel)
                .and_then(|v| v.checked_sub(2 * self.padding))
                .filter(|&v| v > 0)
        };
        let (out_h, out_w) = match (span(input.h), span(input.w)) {
            (Some(h), Some(w)) => (h, w),
            _ => return Err(shape_err("ConvTranspose2d", "non-empty output", input)),
        };
        let g = ConvGeometry::new(self.out_channels, out_h, out_w, self.kernel, self.stride, self.padding)
            .filter(|g| g.out_h == input.h && g.out_w == input.w)
            .ok_or_else(|| shape_err("ConvTranspose2d", "invertible geometry", input))?;
        Ok(g)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let g = self.geometry(input)?;
        Ok(Shape::new(self.out_channels, g.in_h, g.in_w))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvTranspose2dCache)> {
        let g = self.geometry(x.shape())?;
        let n = g.col_cols();
        let mut cols = vec![0.0f32; g.col_rows() * n];
        gemm(g.col_rows(), n, self.in_channels, &self.weight.value, true, x.data(), false, 0.0, &mut cols);
        let mut y = Tensor::zeros(Shape::new(self.out_channels, g.in_h, g.in_w));
        col2im(&cols, &g, y.data_mut());
        if let Some(b) = &self.bias {
            let plane = g.in_h * g.in_w;
            for (o, p) in y.data_mut().chunks_exact_mut(plane).enumerate() {
                p.iter_mut().for_each(|v| *v += b.value[o]);
            }
        }
        Ok((
            y,
            ConvTranspose2dCache {
                geometry: g,
                input: x.clone(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &ConvTranspose2dCache, dy: &Tensor, mode: Backprop) -> Result<Option<Tensor>> {
        let g = &cache.geometry;
        dy.ensure_shape("ConvTranspose2d::backward", Shape::new(self.out_channels, g.in_h, g.in_w))?;
        let n = g.col_cols();
        let mut dcols = vec![0.0f32; g.col_rows() * n];
        im2col(dy.data(), g, &mut dcols);
        if mode.params {
            gemm(
                self.in_channels,
                g.col_rows(),
                n,
                cache.input.data(),
                false,
                &dcols,
                true,
                1.0,
                &mut self.weight.grad,
            );
            if let Some(b) = &mut self.bias {
                let plane = g.in_h * g.in_w;
                for (o, p) in dy.data().chunks_exact(plane).enumerate() {
                    b.grad[o] += p.iter().sum::<f32>();
                }
            }
        }
        if !mode.input {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(cache.input.shape());
        gemm(self.in_channels, n, g.col_rows(), &self.weight.value, false, &dcols, false, 0.0, dx.data_mut());
        Ok(Some(dx))
    }
}

impl Parameters for ConvTranspose2d {
    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Per-sample, per-channel normalization with a learned affine transform.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceNorm2d {
    pub channels: usize,
    pub eps: f32,
    pub gamma: Param,
    pub beta: Param,
}

#[derive(Clone, Debug)]
pub struct InstanceNormCache {
    shape: Shape,
    normalized: Vec<f32>,
    inv_std: Vec<f32>,
}

impl InstanceNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            channels,
            eps: 1e-5,
            gamma: Param::full(format!("{name}.gamma"), &[channels], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, InstanceNormCache)> {
        let shape = x.shape();
        if shape.c != self.channels {
            return Err(shape_err("InstanceNorm2d", format!("{} channels", self.channels), shape));
        }
        let plane = shape.plane();
        let mut y = Tensor::zeros(shape);
        let mut normalized = vec![0.0f32; x.len()];
        let mut inv_std = vec![0.0f32; shape.c];
        for c in 0..shape.c {
            let src = x.channel(c);
            let mean = src.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
            let var = src.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / plane as f64;
            let is = (1.0 / (var + self.eps as f64).sqrt()) as f32;
            inv_std[c] = is;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            let nrm = &mut normalized[c * plane..(c + 1) * plane];
            let out = &mut y.data_mut()[c * plane..(c + 1) * plane];
            for i in 0..plane {
                let xh = (src[i] - mean as f32) * is;
                nrm[i] = xh;
                out[i] = g * xh + b;
            }
        }
        Ok((y, InstanceNormCache { shape, normalized, inv_std }))
    }

    pub fn backward(&mut self, cache: &InstanceNormCache, dy: &Tensor, mode: Backprop) -> Result<Option<Tensor>> {
        dy.ensure_shape("InstanceNorm2d::backward", cache.shape)?;
        let plane = cache.shape.plane();
        let n = plane as f32;
        let mut dx = mode.input.then(|| Tensor::zeros(cache.shape));
        for c in 0..cache.shape.c {
            let d = &dy.data()[c * plane..(c + 1) * plane];
            let xh = &cache.normalized[c * plane..(c + 1) * plane];
            let sum_d: f32 = d.iter().sum();
            let sum_dxh: f32 = d.iter().zip(xh).map(|(a, b)| a * b).sum();
            if mode.params {
                self.gamma.grad[c] += sum_dxh;
                self.beta.grad[c] += sum_d;
            }
            if let Some(dx) = dx.as_mut() {
                let g = self.gamma.value[c];
                let k = g * cache.inv_std[c] / n;
                let out = &mut dx.data_mut()[c * plane..(c + 1) * plane];
                for i in 0..plane {
                    out[i] = k * (n * d[i] - sum_d - xh[i] * sum_dxh);
                }
            }
        }
        Ok(dx)
    }
}

impl Parameters for InstanceNorm2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Pointwise nonlinearities. The backward pass only needs the forward output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f32),
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Activation::LeakyRelu(a) => {
                if v > 0.0 {
                    v
                } else {
                    a * v
                }
            }
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the output `y = apply(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f32) -> f32 {
        match self {
            Activation::LeakyRelu(a) => {
                if y > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, x: &Tensor) -> Tensor {
        x.map(|v| self.apply(v))
    }

    pub fn backward(self, y: &Tensor, dy: &Tensor) -> Result<Tensor> {
        dy.ensure_shape("Activation::backward", y.shape())?;
        let mut dx = dy.clone();
        for (d, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= self.derivative_from_output(yv);
        }
        Ok(dx)
    }
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub rate: f32,
}

impl Dropout {
    pub fn new(rate: f32) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Self { rate })
    }

    /// Returns the masked tensor and the per-element scale applied (0 or 1/(1-rate)).
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &Tensor, rng: &mut R) -> (Tensor, Vec<f32>) {
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f32> = (0..x.len())
            .map(|_| if rng.random::<f32>() < self.rate { 0.0 } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        (y, mask)
    }

    pub fn backward(mask: &[f32], dy: &Tensor) -> Tensor {
        let mut dx = dy.clone();
        for (d, m) in dx.data_mut().iter_mut().zip(mask) {
            *d *= m;
        }
        dx
    }
}

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::None => v,
        }
    }
}

/// A 3-D convolution layer: kernel `(out, in, kt, kh, kw)`, one bias per
/// output channel, zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    kernel: Tensor,
    bias: Vec<f64>,
    stride: [usize; 3],
    padding: [usize; 3],
    activation: Activation,
}

impl ConvSpec {
    pub fn new(
        kernel: Tensor,
        bias: Vec<f64>,
        stride: [usize; 3],
        padding: [usize; 3],
        activation: Activation,
    ) -> Result<Self> {
        if kernel.ndim() != 5 {
            return Err(Error::shape(format!(
                "conv kernel must be 5-D (out, in, kt, kh, kw), got {:?}",
                kernel.shape()
            )));
        }
        if bias.len() != kernel.shape()[0] {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                kernel.shape()[0]
            )));
        }
        if stride.contains(&0) {
            return Err(Error::invalid(format!("stride {stride:?} has a zero component")));
        }
        Ok(ConvSpec {
            kernel,
            bias,
            stride,
            padding,
            activation,
        })
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn stride(&self) -> [usize; 3] {
        self.stride
    }

    pub fn padding(&self) -> [usize; 3] {
        self.padding
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_extent(&self) -> [usize; 3] {
        let s = self.kernel.shape();
        [s[2], s[3], s[4]]
    }

    /// Output `(T', H', W')` for an input of extent `(T, H, W)`.
    pub fn output_extent(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let k = self.kernel_extent();
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < k[a] {
                return Err(Error::shape(format!(
                    "kernel extent {k:?} larger than padded input {:?} (axis {a})",
                    [0, 1, 2].map(|i| input[i] + 2 * self.padding[i])
                )));
            }
            out[a] = (padded - k[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub mode: PoolMode,
    pub window: [usize; 3],
    pub stride: [usize; 3],
}

impl PoolSpec {
    pub fn new(mode: PoolMode, window: [usize; 3], stride: [usize; 3]) -> Result<Self> {
        let spec = PoolSpec { mode, window, stride };
        spec.validate()?;
        Ok(spec)
    }

    /// A 1x1x1 window, i.e. no pooling.
    pub fn identity() -> Self {
        PoolSpec {
            mode: PoolMode::Max,
            window: [1, 1, 1],
            stride: [1, 1, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.contains(&0) || self.stride.contains(&0) {
            return Err(Error::invalid(format!(
                "pool window {:?} / stride {:?} must be positive",
                self.window, self.stride
            )));
        }
        Ok(())
    }

    pub fn output_extent(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let mut out = [0; 3];
        for a in 0..3 {
            if self.window[a] > input[a] {
                return Err(Error::shape(format!(
                    "pool window {:?} larger than input {input:?}",
                    self.window
                )));
            }
            out[a] = (input[a] - self.window[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

/// Direct 3-D convolution with zero padding, `input` shaped `(C, T, H, W)`.
pub fn conv3d(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (c, t, h, w) = input.dims4()?;
    if c != spec.in_channels() {
        return Err(Error::shape(format!(
            "input has {c} channels, kernel expects {}",
            spec.in_channels()
        )));
    }
    let [ot, oh, ow] = spec.output_extent([t, h, w])?;
    let [kt, kh, kw] = spec.kernel_extent();
    let [st, sh, sw] = spec.stride;
    let [pt, ph, pw] = spec.padding;
    let oc = spec.out_channels();
    let x = input.data();
    let k = spec.kernel.data();
    let k_vol = kt * kh * kw;
    let mut out = vec![0.0; oc * ot * oh * ow];

    // Rows of the kernel falling into the zero padding are skipped via the
    // valid index ranges below rather than by materialising a padded copy.
    let valid = |o: usize, stride: usize, pad: usize, ksize: usize, extent: usize| {
        let origin = (o * stride) as isize - pad as isize;
        let lo = (-origin).max(0) as usize;
        let hi = ((extent as isize - origin).min(ksize as isize)).max(0) as usize;
        (origin, lo, hi)
    };

    for o in 0..oc {
        let bias = spec.bias[o];
        for zt in 0..ot {
            let (t0, kt_lo, kt_hi) = valid(zt, st, pt, kt, t);
            for zy in 0..oh {
                let (y0, ky_lo, ky_hi) = valid(zy, sh, ph, kh, h);
                for zx in 0..ow {
                    let (x0, kx_lo, kx_hi) = valid(zx, sw, pw, kw, w);
                    let mut acc = 0.0;
                    for ci in 0..c {
                        let kbase = (o * c + ci) * k_vol;
                        let xbase = ci * t * h * w;
                        for a in kt_lo..kt_hi {
                            let ti = (t0 + a as isize) as usize;
                            for b in ky_lo..ky_hi {
                                let yi = (y0 + b as isize) as usize;
                                let xrow = xbase + (ti * h + yi) * w;
                                let krow = kbase + (a * kh + b) * kw;
                                for d in kx_lo..kx_hi {
                                    let xi = (x0 + d as isize) as usize;
                                    acc += k[krow + d] * x[xrow + xi];
                                }
                            }
                        }
                    }
                    out[((o * ot + zt) * oh + zy) * ow + zx] = spec.activation.apply(acc + bias);
                }
            }
        }
    }
    Tensor::new(vec![oc, ot, oh, ow], out)
}

/// Applies a convolution to a 3-D `(C, H, W)` map by treating it as a
/// single-frame clip. The kernel must have temporal extent 1 (or temporal
/// padding to cover it) and the result keeps only the spatial axes.
pub fn conv_spatial(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    let clip = input.clone().reshape(vec![c, 1, h, w])?;
    let out = conv3d(&clip, spec)?;
    let (oc, ot, oh, ow) = out.dims4()?;
    if ot != 1 {
        return Err(Error::shape(format!(
            "spatial convolution produced {ot} frames; use temporal extent 1"
        )));
    }
    out.reshape(vec![oc, oh, ow])
}

/// Max or average pooling over `(T, H, W)` windows, channels independent.
pub fn pool3d(input: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    let (c, t, h, w) = input.dims4()?;
    let [ot, oh, ow] = spec.output_extent([t, h, w])?;
    let [wt, wh, ww] = spec.window;
    let [st, sh, sw] = spec.stride;
    let x = input.data();
    let inv = 1.0 / (wt * wh * ww) as f64;
    let mut out = Vec::with_capacity(c * ot * oh * ow);
    for ci in 0..c {
        let base = ci * t * h * w;
        for zt in 0..ot {
            for zy in 0..oh {
                for zx in 0..ow {
                    let mut acc = match spec.mode {
                        PoolMode::Max => f64::NEG_INFINITY,
                        PoolMode::Avg => 0.0,
                    };
                    for a in 0..wt {
                        for b in 0..wh {
                            let row = base + ((zt * st + a) * h + zy * sh + b) * w + zx * sw;
                            for &v in &x[row..row + ww] {
                                match spec.mode {
                                    PoolMode::Max => acc = acc.max(v),
                                    PoolMode::Avg => acc += v,
                                }
                            }
                        }
                    }
                    if spec.mode == PoolMode::Avg {
                        acc *= inv;
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::new(vec![c, ot, oh, ow], out)
}

//! Dense row-major `f64` tensors and the handful of kernels the feature
//! extractor and pose heads are built from.
//!
//! Shapes follow `(channels, time, height, width)` for 4-D tensors and
//! `(channels, height, width)` for 3-D ones.

mod conv;
mod fixture;
mod fuse;

pub use conv::{conv3d, conv_spatial, pool3d, Activation, ConvSpec, PoolMode, PoolSpec};
pub use fixture::{parse_tensor, read_tensor, write_tensor, format_tensor};
pub use fuse::{bilinear_pool, bilinear_pool_raw, fuse_concat, resize_bilinear, sample_bilinear};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::shape("tensor needs at least one dimension"));
        }
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, (0..n).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Flat offset of a multi-index. Panics on rank mismatch or out-of-range indices.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of range for {:?}", self.shape);
            off = off * d + i;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shape as `(C, T, H, W)`; fails unless the tensor is 4-D.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, t, h, w] => Ok((c, t, h, w)),
            _ => Err(Error::shape(format!("expected 4-D tensor, got {:?}", self.shape))),
        }
    }

    /// Shape as `(C, H, W)`; fails unless the tensor is 3-D.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!("expected 3-D tensor, got {:?}", self.shape))),
        }
    }

    /// Channel `c` of a 3-D tensor as a `(1, H, W)` tensor.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        let (ch, h, w) = self.dims3()?;
        if c >= ch {
            return Err(Error::shape(format!("channel {c} out of range ({ch})")));
        }
        let plane = h * w;
        Tensor::new(vec![1, h, w], self.data[c * plane..(c + 1) * plane].to_vec())
    }

    /// Frame `t` of a 4-D tensor as a `(C, H, W)` tensor.
    pub fn frame(&self, t: usize) -> Result<Tensor> {
        let (c, tt, h, w) = self.dims4()?;
        if t >= tt {
            return Err(Error::shape(format!("frame {t} out of range ({tt})")));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(c * plane);
        for ci in 0..c {
            let start = (ci * tt + t) * plane;
            out.extend_from_slice(&self.data[start..start + plane]);
        }
        Tensor::new(vec![c, h, w], out)
    }

    /// Stacks `(C, H, W)` frames along a new time axis.
    pub fn stack_frames(frames: &[Tensor]) -> Result<Tensor> {
        let first = frames
            .first()
            .ok_or_else(|| Error::shape("cannot stack zero frames"))?;
        let (c, h, w) = first.dims3()?;
        let t = frames.len();
        let plane = h * w;
        let mut data = vec![0.0; c * t * plane];
        for (ti, f) in frames.iter().enumerate() {
            if f.shape() != first.shape() {
                return Err(Error::shape(format!(
                    "frame {ti} has shape {:?}, expected {:?}",
                    f.shape(),
                    first.shape()
                )));
            }
            for ci in 0..c {
                let dst = (ci * t + ti) * plane;
                data[dst..dst + plane].copy_from_slice(&f.data[ci * plane..(ci + 1) * plane]);
            }
        }
        Tensor::new(vec![c, t, h, w], data)
    }

    /// Mean over the time axis of a 4-D tensor, giving `(C, H, W)`.
    pub fn mean_over_time(&self) -> Result<Tensor> {
        let (c, t, h, w) = self.dims4()?;
        let plane = h * w;
        let mut out = vec![0.0; c * plane];
        for ci in 0..c {
            let dst = &mut out[ci * plane..(ci + 1) * plane];
            for ti in 0..t {
                let src = &self.data[(ci * t + ti) * plane..(ci * t + ti + 1) * plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
            let inv = 1.0 / t as f64;
            dst.iter_mut().for_each(|v| *v *= inv);
        }
        Tensor::new(vec![c, h, w], out)
    }

    /// Concatenates tensors along axis 0. Trailing dims must agree.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("cannot concatenate zero tensors"))?;
        let tail = &first.shape[1..];
        let mut channels = 0;
        let mut data = Vec::new();
        for (i, p) in parts.iter().enumerate() {
            if &p.shape[1..] != tail {
                return Err(Error::shape(format!(
                    "part {i} has trailing shape {:?}, expected {tail:?}",
                    &p.shape[1..]
                )));
            }
            channels += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![channels];
        shape.extend_from_slice(tail);
        Tensor::new(shape, data)
    }

    pub fn add_scaled(&self, other: &Tensor, scale: f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + scale * b)
                .collect(),
        })
    }
}

//! Spatiotemporal feature extraction: clip preprocessing, a stacked
//! conv/pool backbone, a parallel attention branch, and bilinear fusion of
//! the two into a flat feature vector.

mod weights;

pub use weights::{load_bundle, save_bundle, C3dArch, MANIFEST_NAME};
pub(crate) use weights::random_conv;

use crate::error::{Error, Result};
use crate::tensor::{
    bilinear_pool, conv3d, conv_spatial, fuse_concat, pool3d, resize_bilinear, ConvSpec, PoolSpec,
    Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Tensor,
    pixel_range: (f64, f64),
    frame_interval_us: u64,
}

impl VideoClip {
    pub fn new(frames: Tensor, pixel_range: (f64, f64), frame_interval_us: u64) -> Result<Self> {
        frames.dims4()?;
        let (lo, hi) = pixel_range;
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "degenerate pixel range ({lo}, {hi})"
            )));
        }
        if frames.data().iter().any(|&v| v < lo || v > hi) {
            return Err(Error::invalid(format!(
                "pixel values outside range ({lo}, {hi})"
            )));
        }
        Ok(VideoClip {
            frames,
            pixel_range,
            frame_interval_us,
        })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn pixel_range(&self) -> (f64, f64) {
        self.pixel_range
    }

    pub fn frame_interval_us(&self) -> u64 {
        self.frame_interval_us
    }
}

/// Maps pixels affinely onto `[0, 1]` and resizes every frame to `target`.
pub fn preprocess_clip(clip: &VideoClip, target: (usize, usize)) -> Result<Tensor> {
    let (lo, hi) = clip.pixel_range;
    if lo == hi {
        return Err(Error::invalid("degenerate pixel range"));
    }
    let scale = 1.0 / (hi - lo);
    let normalised = clip.frames.map(|v| ((v - lo) * scale).clamp(0.0, 1.0));
    let (_, t, _, _) = normalised.dims4()?;
    let frames = (0..t)
        .map(|ti| resize_bilinear(&normalised.frame(ti)?, target.0, target.1))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack_frames(&frames)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub conv: ConvSpec,
    pub pool: PoolSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct C3dConfig {
    pub layers: Vec<Stage>,
    pub st_head: ConvSpec,
    pub attention_layers: Vec<Stage>,
    pub input_size: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub per_layer_pools: Vec<Tensor>,
    pub fused: Tensor,
    pub spatiotemporal: Tensor,
    /// Spatially softmax-normalised attention map, one distribution per channel.
    pub attention: Tensor,
    pub bilinear: Tensor,
    pub output: Vec<f64>,
}

fn check_stack(
    stages: &[Stage],
    branch: &'static str,
    channels: usize,
    extent: [usize; 3],
) -> Result<(usize, Vec<[usize; 3]>)> {
    if stages.is_empty() {
        return Err(Error::invalid(format!("{branch} branch has no layers")));
    }
    let mut c = channels;
    let mut ext = extent;
    let mut extents = Vec::with_capacity(stages.len());
    for (i, s) in stages.iter().enumerate() {
        if s.conv.in_channels() != c {
            return Err(Error::shape(format!(
                "expects {} input channels, previous stage yields {c}",
                s.conv.in_channels()
            ))
            .in_layer(branch, i));
        }
        ext = s.conv.output_extent(ext).map_err(|e| e.in_layer(branch, i))?;
        ext = s.pool.output_extent(ext).map_err(|e| e.in_layer(branch, i))?;
        c = s.conv.out_channels();
        extents.push(ext);
    }
    Ok((c, extents))
}

impl C3dConfig {
    /// Checks channel and extent chaining for an input of `channels x extent`
    /// without touching any data.
    pub fn validate(&self, channels: usize, extent: [usize; 3]) -> Result<()> {
        let (_, _) = check_stack(&self.layers, "backbone", channels, extent)?;
        let fused_channels: usize = self.layers.iter().map(|s| s.conv.out_channels()).sum();
        if self.st_head.in_channels() != fused_channels {
            return Err(Error::shape(format!(
                "st head expects {} channels, fused map has {fused_channels}",
                self.st_head.in_channels()
            ))
            .in_layer("st_head", 0));
        }
        let spatial = [1, extent[1], extent[2]];
        let st_ext = self
            .st_head
            .output_extent(spatial)
            .map_err(|e| e.in_layer("st_head", 0))?;
        if st_ext[0] != 1 {
            return Err(Error::shape("st head must keep a single frame").in_layer("st_head", 0));
        }
        check_stack(&self.attention_layers, "attention", channels, extent)?;
        Ok(())
    }
}

/// Softmax over all spatial positions, independently per channel.
pub fn spatial_softmax(map: &Tensor) -> Result<Tensor> {
    let (c, h, w) = map.dims3()?;
    let plane = h * w;
    let mut out = map.data().to_vec();
    for ci in 0..c {
        let p = &mut out[ci * plane..(ci + 1) * plane];
        let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in p.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        p.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::new(vec![c, h, w], out)
}

fn run_stack(x: &Tensor, stages: &[Stage], branch: &'static str) -> Result<Vec<Tensor>> {
    let mut pooled = Vec::with_capacity(stages.len());
    let mut cur = x.clone();
    for (i, s) in stages.iter().enumerate() {
        let conv = conv3d(&cur, &s.conv).map_err(|e| e.in_layer(branch, i))?;
        cur = pool3d(&conv, &s.pool).map_err(|e| e.in_layer(branch, i))?;
        pooled.push(cur.clone());
    }
    Ok(pooled)
}

pub fn c3d_forward(x: &Tensor, cfg: &C3dConfig) -> Result<FeatureBundle> {
    let (c, t, h, w) = x.dims4()?;
    cfg.validate(c, [t, h, w])?;

    let per_layer_pools = run_stack(x, &cfg.layers, "backbone")?;
    let collapsed = per_layer_pools
        .iter()
        .map(Tensor::mean_over_time)
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_concat(&collapsed, h, w)?;
    let spatiotemporal = conv_spatial(&fused, &cfg.st_head)?;
    let (_, sh, sw) = spatiotemporal.dims3()?;

    let att_pools = run_stack(x, &cfg.attention_layers, "attention")?;
    let att = att_pools
        .last()
        .expect("attention branch validated non-empty")
        .mean_over_time()?;
    let attention = spatial_softmax(&resize_bilinear(&att, sh, sw)?)?;

    let bilinear = bilinear_pool(&spatiotemporal, &attention)?;
    let output = bilinear.data().to_vec();
    Ok(FeatureBundle {
        per_layer_pools,
        fused,
        spatiotemporal,
        attention,
        bilinear,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Activation, PoolMode};

    fn unit_conv(c_in: usize, c_out: usize) -> ConvSpec {
        let k = Tensor::from_fn(vec![c_out, c_in, 1, 1, 1], |i| {
            if i / c_in == i % c_in { 1.0 } else { 0.0 }
        })
        .unwrap();
        ConvSpec::new(k, vec![0.0; c_out], [1, 1, 1], [0, 0, 0], Activation::None).unwrap()
    }

    fn identity_cfg() -> C3dConfig {
        C3dConfig {
            layers: vec![Stage {
                conv: unit_conv(1, 1),
                pool: PoolSpec::identity(),
            }],
            st_head: unit_conv(1, 1),
            attention_layers: vec![Stage {
                conv: unit_conv(1, 1),
                pool: PoolSpec::identity(),
            }],
            input_size: (4, 4),
        }
    }

    #[test]
    fn preprocess_endpoints_and_constants() {
        let frames = Tensor::new(vec![1, 1, 1, 2], vec![0.0, 255.0]).unwrap();
        let clip = VideoClip::new(frames, (0.0, 255.0), 33_333).unwrap();
        let out = preprocess_clip(&clip, (1, 2)).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0]);

        let frames = Tensor::full(vec![1, 3, 5, 7], 128.0).unwrap();
        let clip = VideoClip::new(frames, (0.0, 255.0), 33_333).unwrap();
        let out = preprocess_clip(&clip, (9, 4)).unwrap();
        assert_eq!(out.shape(), &[1, 3, 9, 4]);
        assert!(out.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-15));
    }

    #[test]
    fn degenerate_pixel_range_rejected() {
        let frames = Tensor::full(vec![1, 1, 2, 2], 3.0).unwrap();
        assert!(VideoClip::new(frames.clone(), (3.0, 3.0), 1).is_err());
        assert!(VideoClip::new(frames, (0.0, 2.0), 1).is_err());
    }

    #[test]
    fn constants_propagate() {
        let x = Tensor::full(vec![1, 2, 4, 4], 0.7).unwrap();
        let b = c3d_forward(&x, &identity_cfg()).unwrap();
        assert!(b.spatiotemporal.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        assert!(b.attention.data().iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
        assert_eq!(b.output.len(), 1);
        assert!((b.output[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zeros_propagate() {
        let x = Tensor::zeros(vec![1, 2, 4, 4]).unwrap();
        let b = c3d_forward(&x, &identity_cfg()).unwrap();
        assert!(b.output.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chaining_error_names_layer() {
        let mut cfg = identity_cfg();
        cfg.layers.push(Stage {
            conv: unit_conv(3, 2),
            pool: PoolSpec::new(PoolMode::Max, [1, 2, 2], [1, 2, 2]).unwrap(),
        });
        let x = Tensor::zeros(vec![1, 2, 4, 4]).unwrap();
        match c3d_forward(&x, &cfg) {
            Err(Error::Layer { branch, index, .. }) => {
                assert_eq!(branch, "backbone");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let m = Tensor::from_fn(vec![3, 5, 4], |i| (i as f64 * 0.37).sin() * 4.0).unwrap();
        let s = spatial_softmax(&m).unwrap();
        for c in 0..3 {
            let sum: f64 = s.data()[c * 20..(c + 1) * 20].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

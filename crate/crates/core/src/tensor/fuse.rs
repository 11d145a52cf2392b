use super::Tensor;
use crate::error::{Error, Result};

/// Corner-aligned source coordinate for output index `i`.
#[inline]
fn source_coord(i: usize, out: usize, input: usize) -> f64 {
    if out == 1 {
        (input as f64 - 1.0) * 0.5
    } else {
        i as f64 * (input as f64 - 1.0) / (out as f64 - 1.0)
    }
}

/// Bilinear lookup in a row-major `h x w` plane at continuous `(x, y)`
/// (x = column, y = row). Coordinates outside the plane clamp to the border.
pub fn sample_bilinear(plane: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    debug_assert_eq!(plane.len(), h * w);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Per-channel bilinear resize of a `(C, H, W)` tensor with corner-aligned
/// sampling.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(input.clone());
    }
    let xs: Vec<f64> = (0..out_w).map(|i| source_coord(i, out_w, w)).collect();
    let ys: Vec<f64> = (0..out_h).map(|i| source_coord(i, out_h, h)).collect();
    let plane = h * w;
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ci in 0..c {
        let src = &input.data()[ci * plane..(ci + 1) * plane];
        for &y in &ys {
            for &x in &xs {
                out.push(sample_bilinear(src, h, w, x, y));
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

fn resize_any(map: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    match map.ndim() {
        3 => resize_bilinear(map, target_h, target_w),
        4 => {
            let (_, t, _, _) = map.dims4()?;
            let frames = (0..t)
                .map(|ti| resize_bilinear(&map.frame(ti)?, target_h, target_w))
                .collect::<Result<Vec<_>>>()?;
            Tensor::stack_frames(&frames)
        }
        _ => Err(Error::shape(format!(
            "fuse expects 3-D or 4-D maps, got {:?}",
            map.shape()
        ))),
    }
}

/// Resizes every map to a common spatial size and concatenates channels.
/// 4-D maps must share their time extent.
pub fn fuse_concat(maps: &[Tensor], target_h: usize, target_w: usize) -> Result<Tensor> {
    let first = maps
        .first()
        .ok_or_else(|| Error::invalid("fuse_concat needs at least one map"))?;
    let rank = first.ndim();
    for (i, m) in maps.iter().enumerate() {
        if m.ndim() != rank {
            return Err(Error::shape(format!("map {i} has rank {}, expected {rank}", m.ndim())));
        }
        if rank == 4 && m.shape()[1] != first.shape()[1] {
            return Err(Error::shape(format!(
                "map {i} has {} frames, expected {}",
                m.shape()[1],
                first.shape()[1]
            )));
        }
    }
    let resized = maps
        .iter()
        .map(|m| resize_any(m, target_h, target_w))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = resized.iter().collect();
    Tensor::concat_channels(&refs)
}

/// Sum over spatial positions of the outer product `feature[:, p] x attention[:, p]`,
/// without normalisation. Output shape `(C1, C2)`.
pub fn bilinear_pool_raw(feature: &Tensor, attention: &Tensor) -> Result<Tensor> {
    let (c1, h1, w1) = feature.dims3()?;
    let (c2, h2, w2) = attention.dims3()?;
    if (h1, w1) != (h2, w2) {
        return Err(Error::shape(format!(
            "bilinear pooling spatial mismatch: {h1}x{w1} vs {h2}x{w2}"
        )));
    }
    let plane = h1 * w1;
    let f = feature.data();
    let a = attention.data();
    let mut out = vec![0.0; c1 * c2];
    for i in 0..c1 {
        let fi = &f[i * plane..(i + 1) * plane];
        for j in 0..c2 {
            let aj = &a[j * plane..(j + 1) * plane];
            out[i * c2 + j] = fi.iter().zip(aj).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(vec![c1, c2], out)
}

/// Bilinear pooling followed by signed square root and global L2
/// normalisation. An all-zero matrix is returned unnormalised.
pub fn bilinear_pool(feature: &Tensor, attention: &Tensor) -> Result<Tensor> {
    let raw = bilinear_pool_raw(feature, attention)?;
    let rooted = raw.map(|v| v.signum() * v.abs().sqrt());
    let norm = rooted.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(rooted);
    }
    Ok(rooted.map(|v| v / norm))
}

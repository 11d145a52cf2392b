use super::{DecoderOutputs, KeypointCandidate};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Strict local maxima within Chebyshev radius `nms_radius` that reach
/// `threshold`, sorted by descending score with ties in (row, col) order.
/// Accepts a `(1, H, W)` or `(H, W)` map.
pub fn detect_peaks(
    heatmap: &Tensor,
    kp_index: usize,
    threshold: f64,
    nms_radius: usize,
) -> Result<Vec<KeypointCandidate>> {
    let (h, w) = match *heatmap.shape() {
        [1, h, w] | [h, w] => (h, w),
        _ => {
            return Err(Error::shape(format!(
                "peak detection expects a single-channel map, got {:?}",
                heatmap.shape()
            )))
        }
    };
    Ok(peaks_in_plane(heatmap.data(), h, w, kp_index, threshold, nms_radius))
}

pub(crate) fn peaks_in_plane(
    plane: &[f64],
    h: usize,
    w: usize,
    kp_index: usize,
    threshold: f64,
    nms_radius: usize,
) -> Vec<KeypointCandidate> {
    let r = nms_radius.max(1);
    let mut found = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = plane[y * w + x];
            if !(v >= threshold) {
                continue;
            }
            let y_lo = y.saturating_sub(r);
            let y_hi = (y + r).min(h - 1);
            let x_lo = x.saturating_sub(r);
            let x_hi = (x + r).min(w - 1);
            let strict_max = (y_lo..=y_hi).all(|yy| {
                (x_lo..=x_hi).all(|xx| (yy == y && xx == x) || plane[yy * w + xx] < v)
            });
            if strict_max {
                found.push((y, x, v));
            }
        }
    }
    // Raster order is already (row, col) ascending; the stable sort keeps it for ties.
    found.sort_by(|a, b| b.2.total_cmp(&a.2));
    found
        .into_iter()
        .map(|(y, x, v)| KeypointCandidate {
            kp_index,
            x: x as f64,
            y: y as f64,
            score: v.clamp(0.0, 1.0),
        })
        .collect()
}

/// Peaks for every keypoint channel of `outputs`, indexed by keypoint type.
pub fn detect_all_peaks(
    outputs: &DecoderOutputs,
    threshold: f64,
    nms_radius: usize,
) -> Vec<Vec<KeypointCandidate>> {
    let (k, h, w) = (
        outputs.heatmaps.shape()[0],
        outputs.height(),
        outputs.width(),
    );
    (0..k)
        .map(|ki| peaks_in_plane(outputs.heatmap_plane(ki), h, w, ki, threshold, nms_radius))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(h: usize, w: usize, centers: &[(f64, f64)]) -> Tensor {
        Tensor::from_fn(vec![1, h, w], |i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            centers
                .iter()
                .map(|&(cy, cx)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * 2.0)).exp())
                .fold(0.0, f64::max)
        })
        .unwrap()
    }

    #[test]
    fn single_blob() {
        let hm = blob(24, 24, &[(10.0, 12.0)]);
        let p = detect_peaks(&hm, 3, 0.1, 2).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].x, p[0].y, p[0].kp_index), (12.0, 10.0, 3));
        assert_eq!(p[0].score, 1.0);
    }

    #[test]
    fn zero_map_has_no_peaks() {
        let hm = Tensor::zeros(vec![1, 8, 8]).unwrap();
        assert!(detect_peaks(&hm, 0, 0.1, 1).unwrap().is_empty());
    }

    #[test]
    fn plateau_is_not_a_strict_maximum() {
        let hm = Tensor::full(vec![1, 5, 5], 0.8).unwrap();
        assert!(detect_peaks(&hm, 0, 0.1, 1).unwrap().is_empty());
    }

    #[test]
    fn ties_break_by_row_then_col() {
        let mut hm = Tensor::zeros(vec![1, 9, 9]).unwrap();
        hm.set(&[0, 6, 1], 0.9);
        hm.set(&[0, 1, 7], 0.9);
        hm.set(&[0, 1, 2], 0.9);
        hm.set(&[0, 4, 4], 0.95);
        let p = detect_peaks(&hm, 0, 0.5, 1).unwrap();
        let coords: Vec<_> = p.iter().map(|c| (c.y as usize, c.x as usize)).collect();
        assert_eq!(coords, vec![(4, 4), (1, 2), (1, 7), (6, 1)]);
    }
}

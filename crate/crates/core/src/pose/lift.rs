use super::PoseSkeleton;
use crate::error::{Error, Result};
use crate::tensor::{sample_bilinear, Tensor};

/// Sets each joint's z to the bilinear depth sample at its (x, y). Joints
/// outside the map are sampled at the clamped border position and the
/// skeleton is flagged.
pub fn lift_to_3d(skeletons: &[PoseSkeleton], depth_map: &Tensor) -> Result<Vec<PoseSkeleton>> {
    let (h, w) = match *depth_map.shape() {
        [1, h, w] | [h, w] => (h, w),
        _ => {
            return Err(Error::shape(format!(
                "depth map must be single-channel, got {:?}",
                depth_map.shape()
            )))
        }
    };
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    Ok(skeletons
        .iter()
        .map(|s| {
            let mut out = s.clone();
            for j in out.joints.iter_mut().flatten() {
                if j.x < 0.0 || j.y < 0.0 || j.x > xmax || j.y > ymax {
                    out.clamped = true;
                }
                j.z = sample_bilinear(depth_map.data(), h, w, j.x, j.y);
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Joint;

    fn skel(points: &[(f64, f64)]) -> PoseSkeleton {
        PoseSkeleton {
            person_id: 0,
            joints: points
                .iter()
                .map(|&(x, y)| Some(Joint { x, y, z: 0.0, score: 1.0 }))
                .collect(),
            total_score: 1.0,
            clamped: false,
        }
    }

    #[test]
    fn constant_and_ramp() {
        let s = skel(&[(2.5, 3.0), (7.0, 1.25)]);
        let d = Tensor::full(vec![1, 8, 10], 4.2).unwrap();
        let out = lift_to_3d(std::slice::from_ref(&s), &d).unwrap();
        assert!(out[0].joints.iter().flatten().all(|j| j.z == 4.2));
        assert!(!out[0].clamped);

        let ramp = Tensor::from_fn(vec![1, 8, 10], |i| (i % 10) as f64).unwrap();
        let out = lift_to_3d(&[s], &ramp).unwrap();
        let z: Vec<f64> = out[0].joints.iter().flatten().map(|j| j.z).collect();
        assert!((z[0] - 2.5).abs() < 1e-12);
        assert!((z[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn outside_joints_are_clamped_and_flagged() {
        let ramp = Tensor::from_fn(vec![1, 4, 4], |i| (i % 4) as f64).unwrap();
        let out = lift_to_3d(&[skel(&[(-2.0, 1.0), (9.0, 1.0)])], &ramp).unwrap();
        assert!(out[0].clamped);
        let z: Vec<f64> = out[0].joints.iter().flatten().map(|j| j.z).collect();
        assert_eq!(z, vec![0.0, 3.0]);
        let x: Vec<f64> = out[0].joints.iter().flatten().map(|j| j.x).collect();
        assert_eq!(x, vec![-2.0, 9.0]);
    }
}

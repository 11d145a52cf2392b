//! Multi-person pose decoding: heatmap and part-affinity-field heads with
//! refinement stages, peak extraction, PAF limb scoring, greedy assembly
//! into skeletons, and depth-map lifting to 3-D.

mod group;
mod heads;
mod jsonl;
mod lift;
mod peaks;

pub use group::{group_poses, match_limbs, score_limb, LimbConnection};
pub use heads::{heads_forward, DecoderHeads, HeadSet};
pub use jsonl::{parse_frame_record, FrameRecord, PersonRecord};
pub use lift::lift_to_3d;
pub use peaks::{detect_all_peaks, detect_peaks};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimbTopology {
    keypoint_names: Vec<String>,
    limbs: Vec<(usize, usize)>,
}

impl LimbTopology {
    pub fn new(keypoint_names: Vec<String>, limbs: Vec<(usize, usize)>) -> Result<Self> {
        let k = keypoint_names.len();
        if k == 0 {
            return Err(Error::invalid("topology needs at least one keypoint"));
        }
        // Union-find over keypoint types; a repeated union means a cycle.
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut used = vec![false; k];
        for (li, &(a, b)) in limbs.iter().enumerate() {
            if a >= k || b >= k {
                return Err(Error::invalid(format!("limb {li} ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::invalid(format!("limb {li} is a self-loop")));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::invalid(format!("limb {li} closes a cycle")));
            }
            parent[ra] = rb;
            used[a] = true;
            used[b] = true;
        }
        if k > 1 {
            if let Some(orphan) = used.iter().position(|u| !u) {
                return Err(Error::invalid(format!(
                    "keypoint {orphan} ({}) is not on any limb",
                    keypoint_names[orphan]
                )));
            }
        }
        Ok(LimbTopology {
            keypoint_names,
            limbs,
        })
    }

    /// The 14-joint body used by the scene simulator.
    pub fn standard() -> Self {
        let names = [
            "head", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow",
            "l_wrist", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
        ];
        let limbs = vec![
            (1, 0),
            (1, 2),
            (2, 3),
            (3, 4),
            (1, 5),
            (5, 6),
            (6, 7),
            (1, 8),
            (8, 9),
            (9, 10),
            (1, 11),
            (11, 12),
            (12, 13),
        ];
        LimbTopology::new(names.iter().map(|s| s.to_string()).collect(), limbs)
            .expect("standard topology is a tree")
    }

    pub fn keypoint_names(&self) -> &[String] {
        &self.keypoint_names
    }

    pub fn limbs(&self) -> &[(usize, usize)] {
        &self.limbs
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoint_names.len()
    }

    pub fn num_limbs(&self) -> usize {
        self.limbs.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.keypoint_names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutputs {
    /// `(K, H, W)`, one confidence map per keypoint type.
    pub heatmaps: Tensor,
    /// `(2L, H, W)`; channels `2l` and `2l + 1` hold the x and y components for limb `l`.
    pub pafs: Tensor,
    pub stages: usize,
}

impl DecoderOutputs {
    pub fn new(heatmaps: Tensor, pafs: Tensor, stages: usize, topo: &LimbTopology) -> Result<Self> {
        let out = DecoderOutputs {
            heatmaps,
            pafs,
            stages,
        };
        out.check(topo)?;
        Ok(out)
    }

    pub fn check(&self, topo: &LimbTopology) -> Result<()> {
        let (k, h, w) = self.heatmaps.dims3()?;
        let (p, ph, pw) = self.pafs.dims3()?;
        if k != topo.num_keypoints() {
            return Err(Error::shape(format!(
                "{k} heatmap channels for {} keypoints",
                topo.num_keypoints()
            )));
        }
        if p != 2 * topo.num_limbs() {
            return Err(Error::shape(format!(
                "{p} PAF channels for {} limbs",
                topo.num_limbs()
            )));
        }
        if (h, w) != (ph, pw) {
            return Err(Error::shape("heatmap and PAF spatial sizes differ"));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.heatmaps.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.heatmaps.shape()[2]
    }

    fn plane(t: &Tensor, c: usize) -> &[f64] {
        let plane = t.shape()[1] * t.shape()[2];
        &t.data()[c * plane..(c + 1) * plane]
    }

    pub fn heatmap_plane(&self, k: usize) -> &[f64] {
        Self::plane(&self.heatmaps, k)
    }

    pub fn paf_planes(&self, limb: usize) -> (&[f64], &[f64]) {
        (
            Self::plane(&self.pafs, 2 * limb),
            Self::plane(&self.pafs, 2 * limb + 1),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointCandidate {
    pub kp_index: usize,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSkeleton {
    pub person_id: usize,
    /// Indexed by keypoint type.
    pub joints: Vec<Option<Joint>>,
    pub total_score: f64,
    /// Set when lifting had to clamp a joint to the depth map border.
    pub clamped: bool,
}

impl PoseSkeleton {
    pub fn joint_count(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }

    /// Scales x and y, e.g. from heatmap to frame coordinates.
    pub fn scaled(&self, sx: f64, sy: f64) -> PoseSkeleton {
        let mut s = self.clone();
        for j in s.joints.iter_mut().flatten() {
            j.x *= sx;
            j.y *= sy;
        }
        s
    }

    /// Diagonal of the axis-aligned box around the present joints.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut it = self.joints.iter().flatten();
        let Some(first) = it.next() else { return 0.0 };
        let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
        for j in it {
            x0 = x0.min(j.x);
            x1 = x1.max(j.x);
            y0 = y0.min(j.y);
            y1 = y1.max(j.y);
        }
        (x1 - x0).hypot(y1 - y0)
    }
}

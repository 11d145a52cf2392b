use super::{DecoderOutputs, Joint, KeypointCandidate, LimbTopology, PoseSkeleton};
use crate::error::{Error, Result};
use crate::tensor::{sample_bilinear, Tensor};

/// An accepted pairing for one limb: candidate `src` of the limb's source
/// keypoint type with candidate `dst` of its destination type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbConnection {
    pub limb: usize,
    pub src: usize,
    pub dst: usize,
    pub score: f64,
}

pub(crate) fn score_limb_planes(
    paf_x: &[f64],
    paf_y: &[f64],
    h: usize,
    w: usize,
    a: &KeypointCandidate,
    b: &KeypointCandidate,
    samples: usize,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::invalid("limb scoring needs at least two samples"));
    }
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return Err(Error::invalid("zero-length limb segment"));
    }
    let (ux, uy) = (dx / len, dy / len);
    let step = 1.0 / (samples - 1) as f64;
    let mut acc = 0.0;
    for s in 0..samples {
        let t = s as f64 * step;
        let (px, py) = (a.x + t * dx, a.y + t * dy);
        let vx = sample_bilinear(paf_x, h, w, px, py);
        let vy = sample_bilinear(paf_y, h, w, px, py);
        acc += vx * ux + vy * uy;
    }
    Ok(acc / samples as f64)
}

/// Mean alignment between the PAF and the unit direction `a -> b`, sampled
/// at `samples` evenly spaced points on the segment. `paf_x` and `paf_y` are
/// `(1, H, W)` or `(H, W)` maps of equal shape.
pub fn score_limb(
    paf_x: &Tensor,
    paf_y: &Tensor,
    a: &KeypointCandidate,
    b: &KeypointCandidate,
    samples: usize,
) -> Result<f64> {
    if paf_x.shape() != paf_y.shape() {
        return Err(Error::shape("PAF component shapes differ"));
    }
    let (h, w) = match *paf_x.shape() {
        [1, h, w] | [h, w] => (h, w),
        _ => return Err(Error::shape(format!("bad PAF plane shape {:?}", paf_x.shape()))),
    };
    score_limb_planes(paf_x.data(), paf_y.data(), h, w, a, b, samples)
}

/// Greedy per-limb matching: every candidate pair is scored, pairs below
/// `limb_threshold` are dropped, and the rest are accepted in descending
/// score order while both endpoints are still free for that limb.
pub fn match_limbs(
    candidates: &[Vec<KeypointCandidate>],
    outputs: &DecoderOutputs,
    topo: &LimbTopology,
    limb_threshold: f64,
    samples: usize,
) -> Result<Vec<Vec<LimbConnection>>> {
    if candidates.len() != topo.num_keypoints() {
        return Err(Error::shape(format!(
            "{} candidate lists for {} keypoints",
            candidates.len(),
            topo.num_keypoints()
        )));
    }
    let (h, w) = (outputs.height(), outputs.width());
    let mut all = Vec::with_capacity(topo.num_limbs());
    for (limb, &(ka, kb)) in topo.limbs().iter().enumerate() {
        let (px, py) = outputs.paf_planes(limb);
        let mut pairs = Vec::new();
        for (i, a) in candidates[ka].iter().enumerate() {
            for (j, b) in candidates[kb].iter().enumerate() {
                if a.x == b.x && a.y == b.y {
                    continue;
                }
                let score = score_limb_planes(px, py, h, w, a, b, samples)?;
                if score >= limb_threshold {
                    pairs.push(LimbConnection {
                        limb,
                        src: i,
                        dst: j,
                        score,
                    });
                }
            }
        }
        // Pairs were generated in (src, dst) order, so the stable sort keeps
        // index order among equal scores.
        pairs.sort_by(|p, q| q.score.total_cmp(&p.score));
        let mut used_src = vec![false; candidates[ka].len()];
        let mut used_dst = vec![false; candidates[kb].len()];
        let mut accepted = Vec::new();
        for p in pairs {
            if !used_src[p.src] && !used_dst[p.dst] {
                used_src[p.src] = true;
                used_dst[p.dst] = true;
                accepted.push(p);
            }
        }
        all.push(accepted);
    }
    Ok(all)
}

struct Partial {
    slots: Vec<Option<usize>>,
    limb_score: f64,
    alive: bool,
}

/// Assembles keypoint candidates into skeletons by merging accepted limbs
/// that share endpoints. Each candidate ends up in at most one skeleton.
pub fn group_poses(
    candidates: &[Vec<KeypointCandidate>],
    outputs: &DecoderOutputs,
    topo: &LimbTopology,
    limb_threshold: f64,
    samples: usize,
) -> Result<Vec<PoseSkeleton>> {
    let connections = match_limbs(candidates, outputs, topo, limb_threshold, samples)?;
    let k = topo.num_keypoints();
    let mut owner: Vec<Vec<Option<usize>>> =
        candidates.iter().map(|c| vec![None; c.len()]).collect();
    let mut parts: Vec<Partial> = Vec::new();

    for conn in connections.iter().flatten() {
        let (ka, kb) = topo.limbs()[conn.limb];
        match (owner[ka][conn.src], owner[kb][conn.dst]) {
            (None, None) => {
                let mut slots = vec![None; k];
                slots[ka] = Some(conn.src);
                slots[kb] = Some(conn.dst);
                owner[ka][conn.src] = Some(parts.len());
                owner[kb][conn.dst] = Some(parts.len());
                parts.push(Partial {
                    slots,
                    limb_score: conn.score,
                    alive: true,
                });
            }
            (Some(s), None) => {
                if parts[s].slots[kb].is_none() {
                    parts[s].slots[kb] = Some(conn.dst);
                    parts[s].limb_score += conn.score;
                    owner[kb][conn.dst] = Some(s);
                }
            }
            (None, Some(s)) => {
                if parts[s].slots[ka].is_none() {
                    parts[s].slots[ka] = Some(conn.src);
                    parts[s].limb_score += conn.score;
                    owner[ka][conn.src] = Some(s);
                }
            }
            (Some(s), Some(t)) if s != t => {
                let disjoint = parts[s]
                    .slots
                    .iter()
                    .zip(&parts[t].slots)
                    .all(|(a, b)| a.is_none() || b.is_none());
                if disjoint {
                    let moved = std::mem::take(&mut parts[t].slots);
                    for (kp, slot) in moved.into_iter().enumerate() {
                        if let Some(ci) = slot {
                            parts[s].slots[kp] = Some(ci);
                            owner[kp][ci] = Some(s);
                        }
                    }
                    parts[s].limb_score += parts[t].limb_score + conn.score;
                    parts[t].alive = false;
                }
            }
            _ => {}
        }
    }

    let mut skeletons: Vec<(PoseSkeleton, (usize, usize))> = parts
        .into_iter()
        .filter(|p| p.alive)
        .filter_map(|p| {
            let joints: Vec<Option<Joint>> = p
                .slots
                .iter()
                .enumerate()
                .map(|(kp, slot)| {
                    slot.map(|ci| {
                        let c = &candidates[kp][ci];
                        Joint {
                            x: c.x,
                            y: c.y,
                            z: 0.0,
                            score: c.score,
                        }
                    })
                })
                .collect();
            let key = p
                .slots
                .iter()
                .enumerate()
                .find_map(|(kp, s)| s.map(|ci| (kp, ci)))?;
            let joint_score: f64 = joints.iter().flatten().map(|j| j.score).sum();
            let skel = PoseSkeleton {
                person_id: 0,
                total_score: (joint_score + p.limb_score).max(0.0),
                joints,
                clamped: false,
            };
            (skel.joint_count() >= 2).then_some((skel, key))
        })
        .collect();
    skeletons.sort_by(|(a, ka), (b, kb)| {
        b.total_score
            .total_cmp(&a.total_score)
            .then_with(|| ka.cmp(kb))
    });
    Ok(skeletons
        .into_iter()
        .enumerate()
        .map(|(i, (mut s, _))| {
            s.person_id = i;
            s
        })
        .collect())
}

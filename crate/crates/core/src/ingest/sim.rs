//! Deterministic synthetic scenes: articulated stick figures moving along
//! smooth seeded trajectories, rendered to grayscale frames, with matching
//! ground-truth joints, depth maps, IMU traces for the first person's root
//! joint, and oracle heatmaps/PAFs rendered straight from the ground truth.

use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::wire::{decode_prefix, encode_message, MsgType};
use super::{ImuSample, SensorFrame};
use crate::error::{Error, Result};
use crate::pose::{DecoderOutputs, Joint, LimbTopology, PoseSkeleton};
use crate::tensor::{format_tensor, parse_tensor, Tensor};

pub const GRAVITY: f64 = 9.81;
const BACKGROUND_DEPTH: f64 = 10.0;
const BACKGROUND_LEVEL: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub width: u16,
    pub height: u16,
    pub frames: usize,
    pub fps: f64,
    pub persons: usize,
    /// Scales every motion amplitude; 0 gives a static scene.
    pub motion: f64,
    /// Minimum gap in pixels between person bounding boxes over the whole
    /// clip. `None` lets persons overlap.
    pub margin: Option<f64>,
    pub imu_per_frame: usize,
    pub meters_per_pixel: f64,
    pub max_retries: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 96,
            height: 96,
            frames: 8,
            fps: 30.0,
            persons: 2,
            motion: 1.0,
            margin: Some(4.0),
            imu_per_frame: 4,
            meters_per_pixel: 0.02,
            max_retries: 64,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.persons) {
            return Err(Error::invalid(format!("1-3 persons supported, got {}", self.persons)));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::invalid("frames must be at least 32x32"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::invalid("fps must be positive"));
        }
        if self.imu_per_frame == 0 {
            return Err(Error::invalid("imu_per_frame must be at least 1"));
        }
        if !(self.motion >= 0.0 && self.motion.is_finite()) {
            return Err(Error::invalid("motion scale must be non-negative"));
        }
        Ok(())
    }

    fn frame_time(&self, f: usize) -> f64 {
        f as f64 / self.fps
    }

    fn frame_timestamp_us(&self, f: usize) -> u64 {
        (self.frame_time(f) * 1e6).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonTruth {
    pub id: usize,
    /// `(x, y, z)` per keypoint of the standard topology; x = column, y = row.
    pub joints: Vec<[f64; 3]>,
}

impl PersonTruth {
    pub fn skeleton(&self) -> PoseSkeleton {
        PoseSkeleton {
            person_id: self.id,
            joints: self
                .joints
                .iter()
                .map(|&[x, y, z]| Some(Joint { x, y, z, score: 1.0 }))
                .collect(),
            total_score: self.joints.len() as f64,
            clamped: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub frame: usize,
    pub timestamp_us: u64,
    pub persons: Vec<PersonTruth>,
}

impl FrameTruth {
    pub fn skeletons(&self) -> Vec<PoseSkeleton> {
        self.persons.iter().map(PersonTruth::skeleton).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub seed: u64,
    /// Seed that produced the accepted layout after any retries.
    pub effective_seed: u64,
    pub frames: Vec<SensorFrame>,
    pub imu: Vec<ImuSample>,
    pub truth: Vec<FrameTruth>,
    /// One `(1, H, W)` map per frame.
    pub depth: Vec<Tensor>,
}

/// Sinusoid `base + amp * sin(omega t + phase)`.
#[derive(Debug, Clone, Copy)]
struct Wave {
    base: f64,
    amp: f64,
    omega: f64,
    phase: f64,
}

impl Wave {
    fn sample(rng: &mut ChaCha8Rng, base: f64, amp: f64, motion: f64) -> Self {
        Wave {
            base,
            amp: amp * motion,
            omega: 2.0 * PI * rng.random_range(0.5..1.5),
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.base + self.amp * (self.omega * t + self.phase).sin()
    }

    fn rate(&self, t: f64) -> f64 {
        self.amp * self.omega * (self.omega * t + self.phase).cos()
    }

    fn accel(&self, t: f64) -> f64 {
        -self.amp * self.omega * self.omega * (self.omega * t + self.phase).sin()
    }
}

struct Figure {
    size: f64,
    root: (Wave, Wave),
    lean: Wave,
    upper_arm: [Wave; 2],
    forearm: [Wave; 2],
    thigh: [Wave; 2],
    shin: [Wave; 2],
    depth: f64,
    joint_depth: Vec<f64>,
}

impl Figure {
    fn sample(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Self {
        let h = spec.height as f64;
        let size = h * rng.random_range(0.30..0.40) / (spec.persons as f64).sqrt().max(1.0) * 1.2;
        let m = spec.motion;
        let pair = |rng: &mut ChaCha8Rng, lo: f64, hi: f64, amp: f64| {
            [0, 1].map(|_| {
                let base = rng.random_range(lo..hi);
                Wave::sample(rng, base, amp, m)
            })
        };
        let upper_arm = pair(rng, 0.45, 1.05, 0.20);
        let forearm = pair(rng, 0.15, 0.55, 0.20);
        let thigh = pair(rng, 0.08, 0.30, 0.10);
        let shin = pair(rng, -0.10, 0.10, 0.10);
        let (ax, ay) = (rng.random_range(1.0..4.0), rng.random_range(0.3..1.5));
        let root = (Wave::sample(rng, 0.0, ax, m), Wave::sample(rng, 0.0, ay, m));
        let lean = Wave::sample(rng, 0.0, 0.08, m);
        let depth = rng.random_range(3.0..6.0);
        let joint_depth = (0..14).map(|_| rng.random_range(-0.15..0.15)).collect();
        Figure {
            size,
            root,
            lean,
            upper_arm,
            forearm,
            thigh,
            shin,
            depth,
            joint_depth,
        }
    }

    /// Joint positions relative to the root (hip centre) at time `t`.
    fn pose(&self, t: f64) -> Vec<(f64, f64)> {
        let s = self.size;
        let lean = self.lean.at(t);
        let (sl, cl) = lean.sin_cos();
        // Upper body rotates about the root by the lean angle.
        let rot = |x: f64, y: f64| (x * cl - y * sl, x * sl + y * cl);
        // Direction hanging down, rotated outward by `a` toward side `sign`.
        let limb = |from: (f64, f64), a: f64, sign: f64, len: f64, lean: bool| {
            let (dx, dy) = (sign * a.sin() * len, a.cos() * len);
            let (dx, dy) = if lean { rot(dx, dy) } else { (dx, dy) };
            (from.0 + dx, from.1 + dy)
        };
        let neck = rot(0.0, -0.30 * s);
        let head = rot(0.0, -0.43 * s);
        let mut j = vec![(0.0, 0.0); 14];
        j[0] = head;
        j[1] = neck;
        // Subject faces the camera: their right side is image-left.
        for (side, sign) in [(0usize, -1.0), (1, 1.0)] {
            let sh = {
                let (x, y) = rot(sign * 0.11 * s, -0.28 * s);
                (x, y)
            };
            let ua = self.upper_arm[side].at(t);
            let el = limb(sh, ua, sign, 0.16 * s, true);
            let wr = limb(el, ua + self.forearm[side].at(t), sign, 0.15 * s, true);
            let hip = (sign * 0.07 * s, 0.0);
            let th = self.thigh[side].at(t);
            let kn = limb(hip, th, sign, 0.22 * s, false);
            let an = limb(kn, th + self.shin[side].at(t), sign, 0.21 * s, false);
            let base = if side == 0 { 2 } else { 5 };
            j[base] = sh;
            j[base + 1] = el;
            j[base + 2] = wr;
            let leg = if side == 0 { 8 } else { 11 };
            j[leg] = hip;
            j[leg + 1] = kn;
            j[leg + 2] = an;
        }
        j
    }

    fn root_offset(&self, t: f64) -> (f64, f64) {
        (self.root.0.at(t), self.root.1.at(t))
    }
}

struct Layout {
    figures: Vec<(Figure, (f64, f64))>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn bbox(points: impl Iterator<Item = (f64, f64)>) -> [f64; 4] {
    points.fold(
        [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        |b, (x, y)| [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)],
    )
}

fn try_layout(spec: &SceneSpec, seed: u64) -> Option<Layout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let border = 3.0;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut figures = Vec::new();
    let mut boxes: Vec<[f64; 4]> = Vec::new();
    for _ in 0..spec.persons {
        let fig = Figure::sample(&mut rng, spec);
        // Extent relative to the initial root over the whole clip.
        let rel = bbox((0..spec.frames.max(1)).flat_map(|f| {
            let t = spec.frame_time(f);
            let (ox, oy) = fig.root_offset(t);
            fig.pose(t).into_iter().map(move |(x, y)| (x + ox, y + oy))
        }));
        let (x_lo, x_hi) = (border - rel[0], w - 1.0 - border - rel[2]);
        let (y_lo, y_hi) = (border - rel[1], h - 1.0 - border - rel[3]);
        if x_lo >= x_hi || y_lo >= y_hi {
            return None;
        }
        let root = (rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi));
        let b = [rel[0] + root.0, rel[1] + root.1, rel[2] + root.0, rel[3] + root.1];
        if let Some(m) = spec.margin {
            let clash = boxes.iter().any(|o| {
                b[0] - m < o[2] && o[0] - m < b[2] && b[1] - m < o[3] && o[1] - m < b[3]
            });
            if clash {
                return None;
            }
        }
        boxes.push(b);
        figures.push((fig, root));
    }
    Some(Layout { figures })
}

fn dist_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).hypot(py - cy), t)
}

fn render_frame(spec: &SceneSpec, persons: &[PersonTruth], topo: &LimbTopology) -> Vec<u8> {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut img = vec![0.0f64; w * h];
    for p in persons {
        for &(a, b) in topo.limbs() {
            let pa = (p.joints[a][0], p.joints[a][1]);
            let pb = (p.joints[b][0], p.joints[b][1]);
            let (x0, x1) = (pa.0.min(pb.0).floor() as isize - 2, pa.0.max(pb.0).ceil() as isize + 2);
            let (y0, y1) = (pa.1.min(pb.1).floor() as isize - 2, pa.1.max(pb.1).ceil() as isize + 2);
            for y in y0.max(0)..=y1.min(h as isize - 1) {
                for x in x0.max(0)..=x1.min(w as isize - 1) {
                    let (d, _) = dist_to_segment(x as f64, y as f64, pa, pb);
                    // Coverage of a segment 1 px wide, linearly anti-aliased.
                    let cov = (1.0 - (d - 0.5).max(0.0)).clamp(0.0, 1.0) * 0.6;
                    let px = &mut img[y as usize * w + x as usize];
                    *px = px.max(cov);
                }
            }
        }
        for j in &p.joints {
            let (cx, cy) = (j[0], j[1]);
            for y in (cy as isize - 4).max(0)..=(cy as isize + 4).min(h as isize - 1) {
                for x in (cx as isize - 4).max(0)..=(cx as isize + 4).min(w as isize - 1) {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let v = (-d2 / (2.0 * 1.2 * 1.2)).exp();
                    let px = &mut img[y as usize * w + x as usize];
                    *px = px.max(v);
                }
            }
        }
    }
    img.iter()
        .map(|&v| (BACKGROUND_LEVEL + v * (255.0 - BACKGROUND_LEVEL)).round().clamp(0.0, 255.0) as u8)
        .collect()
}

fn render_depth(spec: &SceneSpec, persons: &[PersonTruth], topo: &LimbTopology) -> Tensor {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut depth = vec![BACKGROUND_DEPTH; w * h];
    // Nearer surfaces overwrite farther ones.
    let mut order: Vec<&PersonTruth> = persons.iter().collect();
    order.sort_by(|a, b| b.joints[1][2].total_cmp(&a.joints[1][2]));
    for p in order {
        for &(a, b) in topo.limbs() {
            let (ja, jb) = (p.joints[a], p.joints[b]);
            let (pa, pb) = ((ja[0], ja[1]), (jb[0], jb[1]));
            let (x0, x1) = (pa.0.min(pb.0).floor() as isize - 3, pa.0.max(pb.0).ceil() as isize + 3);
            let (y0, y1) = (pa.1.min(pb.1).floor() as isize - 3, pa.1.max(pb.1).ceil() as isize + 3);
            for y in y0.max(0)..=y1.min(h as isize - 1) {
                for x in x0.max(0)..=x1.min(w as isize - 1) {
                    let (d, t) = dist_to_segment(x as f64, y as f64, pa, pb);
                    if d <= 2.5 {
                        let z = ja[2] + t * (jb[2] - ja[2]);
                        let px = &mut depth[y as usize * w + x as usize];
                        *px = px.min(z);
                    }
                }
            }
        }
        // Joint neighbourhoods carry the joint's own depth exactly.
        for j in &p.joints {
            let (cx, cy) = (j[0].round() as isize, j[1].round() as isize);
            for y in (cy - 1).max(0)..=(cy + 1).min(h as isize - 1) {
                for x in (cx - 1).max(0)..=(cx + 1).min(w as isize - 1) {
                    depth[y as usize * w + x as usize] = j[2];
                }
            }
        }
    }
    Tensor::new(vec![1, h, w], depth).expect("depth dims are positive")
}

pub fn simulate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let topo = LimbTopology::standard();
    let mut attempt = 0;
    let mut s = seed;
    let (layout, effective_seed) = loop {
        if let Some(l) = try_layout(spec, s) {
            break (l, s);
        }
        s = splitmix(s);
        attempt += 1;
        if attempt > spec.max_retries {
            return Err(Error::Scene(format!(
                "no valid layout for {} persons after {} retries",
                spec.persons, spec.max_retries
            )));
        }
    };

    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    let mut depth = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let t = spec.frame_time(f);
        let persons: Vec<PersonTruth> = layout
            .figures
            .iter()
            .enumerate()
            .map(|(id, (fig, root))| {
                let (ox, oy) = fig.root_offset(t);
                let joints = fig
                    .pose(t)
                    .into_iter()
                    .zip(&fig.joint_depth)
                    .map(|((x, y), dz)| [x + root.0 + ox, y + root.1 + oy, fig.depth + dz])
                    .collect();
                PersonTruth { id, joints }
            })
            .collect();
        let pixels = render_frame(spec, &persons, &topo);
        frames.push(SensorFrame::new(
            f as u32,
            spec.frame_timestamp_us(f),
            spec.width,
            spec.height,
            1,
            pixels,
        )?);
        depth.push(render_depth(spec, &persons, &topo));
        truth.push(FrameTruth {
            frame: f,
            timestamp_us: spec.frame_timestamp_us(f),
            persons,
        });
    }

    let (fig, _) = &layout.figures[0];
    let mpp = spec.meters_per_pixel;
    let n_imu = spec.frames * spec.imu_per_frame;
    let imu = (0..n_imu)
        .map(|i| {
            let t = i as f64 / (spec.fps * spec.imu_per_frame as f64);
            ImuSample {
                seq: i as u32,
                timestamp_us: (t * 1e6).round() as u64,
                accel: [fig.root.0.accel(t) * mpp, fig.root.1.accel(t) * mpp, GRAVITY],
                gyro: [0.0, 0.0, fig.lean.rate(t)],
            }
        })
        .collect();

    Ok(Scene {
        spec: spec.clone(),
        seed,
        effective_seed,
        frames,
        imu,
        truth,
        depth,
    })
}

/// Ground-truth heatmaps (max of per-person Gaussians) and PAFs (unit limb
/// direction inside a band of half-width `paf_width`, averaged where persons
/// overlap) at `h x w`, in the same pixel frame as the truth coordinates.
pub fn oracle_maps(
    truth: &FrameTruth,
    topo: &LimbTopology,
    h: usize,
    w: usize,
    sigma: f64,
    paf_width: f64,
) -> Result<DecoderOutputs> {
    let k = topo.num_keypoints();
    let l = topo.num_limbs();
    let plane = h * w;
    let mut heat = vec![0.0f64; k * plane];
    let inv = 1.0 / (2.0 * sigma * sigma);
    let reach = (4.0 * sigma).ceil() as isize;
    for p in &truth.persons {
        for (ki, j) in p.joints.iter().enumerate() {
            let (cx, cy) = (j[0], j[1]);
            let (xr, yr) = (cx.round() as isize, cy.round() as isize);
            for y in (yr - reach).max(0)..=(yr + reach).min(h as isize - 1) {
                for x in (xr - reach).max(0)..=(xr + reach).min(w as isize - 1) {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let v = (-d2 * inv).exp();
                    let px = &mut heat[ki * plane + y as usize * w + x as usize];
                    *px = px.max(v);
                }
            }
        }
    }
    let mut paf = vec![0.0f64; 2 * l * plane];
    let mut count = vec![0u32; plane];
    for (li, &(a, b)) in topo.limbs().iter().enumerate() {
        count.iter_mut().for_each(|c| *c = 0);
        for p in &truth.persons {
            let (pa, pb) = (p.joints[a], p.joints[b]);
            let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
            let len = dx.hypot(dy);
            if len == 0.0 {
                continue;
            }
            let (ux, uy) = (dx / len, dy / len);
            let (x0, x1) = (
                (pa[0].min(pb[0]) - paf_width).floor().max(0.0) as usize,
                ((pa[0].max(pb[0]) + paf_width).ceil() as usize).min(w - 1),
            );
            let (y0, y1) = (
                (pa[1].min(pb[1]) - paf_width).floor().max(0.0) as usize,
                ((pa[1].max(pb[1]) + paf_width).ceil() as usize).min(h - 1),
            );
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (rx, ry) = (x as f64 - pa[0], y as f64 - pa[1]);
                    let along = rx * ux + ry * uy;
                    let across = (rx * uy - ry * ux).abs();
                    if along >= 0.0 && along <= len && across <= paf_width {
                        let i = y * w + x;
                        paf[2 * li * plane + i] += ux;
                        paf[(2 * li + 1) * plane + i] += uy;
                        count[i] += 1;
                    }
                }
            }
        }
        for (i, &c) in count.iter().enumerate() {
            if c > 1 {
                paf[2 * li * plane + i] /= c as f64;
                paf[(2 * li + 1) * plane + i] /= c as f64;
            }
        }
    }
    DecoderOutputs::new(
        Tensor::new(vec![k, h, w], heat)?,
        Tensor::new(vec![2 * l, h, w], paf)?,
        1,
        topo,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFiles {
    pub frames: String,
    pub imu: String,
    pub ground_truth: String,
    pub depth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub seed: u64,
    pub frames: usize,
    pub fps: f64,
    pub persons: usize,
    pub files: ManifestFiles,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn truth_line(t: &FrameTruth, topo: &LimbTopology) -> Result<String> {
    let persons: Vec<Value> = t
        .persons
        .iter()
        .map(|p| {
            let joints: Map<String, Value> = topo
                .keypoint_names()
                .iter()
                .zip(&p.joints)
                .map(|(n, j)| (n.clone(), serde_json::json!(j)))
                .collect();
            serde_json::json!({ "id": p.id, "joints": joints })
        })
        .collect();
    Ok(serde_json::to_string(&serde_json::json!({
        "frame": t.frame,
        "timestamp_us": t.timestamp_us,
        "persons": persons,
    }))?)
}

pub fn parse_truth_line(line: &str, topo: &LimbTopology) -> Result<FrameTruth> {
    #[derive(Deserialize)]
    struct P {
        id: usize,
        joints: Map<String, Value>,
    }
    #[derive(Deserialize)]
    struct F {
        frame: usize,
        timestamp_us: u64,
        persons: Vec<P>,
    }
    let f: F = serde_json::from_str(line)?;
    let persons = f
        .persons
        .into_iter()
        .map(|p| {
            let mut joints = vec![[0.0; 3]; topo.num_keypoints()];
            let mut seen = vec![false; topo.num_keypoints()];
            for (name, v) in p.joints {
                let k = topo
                    .index_of(&name)
                    .ok_or_else(|| Error::Parse(format!("unknown joint {name:?}")))?;
                joints[k] = serde_json::from_value(v)?;
                seen[k] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Parse(format!("person {} is missing joints", p.id)));
            }
            Ok(PersonTruth { id: p.id, joints })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameTruth {
        frame: f.frame,
        timestamp_us: f.timestamp_us,
        persons,
    })
}

/// Writes frames and IMU samples as wire-format streams (each terminated by
/// an end-of-stream message), ground truth as JSON lines, depth maps as one
/// `(T, H, W)` tensor fixture, and the manifest tying them together.
pub fn write_scene(dir: impl AsRef<Path>, scene: &Scene) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let topo = LimbTopology::standard();
    let files = ManifestFiles {
        frames: "frames.bin".into(),
        imu: "imu.bin".into(),
        ground_truth: "ground_truth.jsonl".into(),
        depth: "depth.txt".into(),
    };

    let mut stream = Vec::new();
    for f in &scene.frames {
        stream.extend(f.encode());
    }
    stream.extend(encode_message(MsgType::EndOfStream, &[])?);
    fs::write(dir.join(&files.frames), stream)?;

    let mut stream = Vec::new();
    for s in &scene.imu {
        stream.extend(s.encode());
    }
    stream.extend(encode_message(MsgType::EndOfStream, &[])?);
    fs::write(dir.join(&files.imu), stream)?;

    let mut gt = fs::File::create(dir.join(&files.ground_truth))?;
    for t in &scene.truth {
        writeln!(gt, "{}", truth_line(t, &topo)?)?;
    }

    let depth_text = if scene.depth.is_empty() {
        String::new()
    } else {
        let (h, w) = (scene.depth[0].shape()[1], scene.depth[0].shape()[2]);
        let data: Vec<f64> = scene.depth.iter().flat_map(|d| d.data().iter().copied()).collect();
        format_tensor(&Tensor::new(vec![scene.depth.len(), h, w], data)?)
    };
    fs::write(dir.join(&files.depth), depth_text)?;

    let manifest = SceneManifest {
        seed: scene.seed,
        frames: scene.frames.len(),
        fps: scene.spec.fps,
        persons: scene.spec.persons,
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// A scene read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub frames: Vec<SensorFrame>,
    pub imu: Vec<ImuSample>,
    pub truth: Vec<FrameTruth>,
    pub depth: Vec<Tensor>,
}

/// Decodes a wire stream up to its end-of-stream marker. Errors carry the
/// index of the message that failed.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<(MsgType, Vec<u8>)>> {
    let mut at = 0;
    let mut out = Vec::new();
    loop {
        if at == bytes.len() {
            return Ok(out);
        }
        let (t, payload, used) = decode_prefix(&bytes[at..]).map_err(|e| Error::Stream {
            frame: out.len(),
            message: e.to_string(),
        })?;
        at += used;
        if t == MsgType::EndOfStream {
            return Ok(out);
        }
        out.push((t, payload));
    }
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(with_path(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(with_path(path))
}

pub fn load_scene(manifest_path: impl AsRef<Path>) -> Result<LoadedScene> {
    let manifest_path = manifest_path.as_ref();
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest: SceneManifest = serde_json::from_str(&read_text(manifest_path)?)
        .map_err(|e| Error::Config(format!("manifest {}: {e}", manifest_path.display())))?;
    let topo = LimbTopology::standard();

    let mut frames = Vec::new();
    for (i, (t, p)) in decode_stream(&read_bytes(&dir.join(&manifest.files.frames))?)?
        .into_iter()
        .enumerate()
    {
        if t != MsgType::Camera {
            return Err(Error::Stream {
                frame: i,
                message: format!("expected camera message, got {t:?}"),
            });
        }
        let f = SensorFrame::from_payload(&p).map_err(|e| Error::Stream {
            frame: i,
            message: e.to_string(),
        })?;
        frames.push(f);
    }
    let mut imu = Vec::new();
    for (i, (t, p)) in decode_stream(&read_bytes(&dir.join(&manifest.files.imu))?)?
        .into_iter()
        .enumerate()
    {
        if t != MsgType::Imu {
            return Err(Error::Stream {
                frame: i,
                message: format!("expected imu message, got {t:?}"),
            });
        }
        imu.push(ImuSample::from_payload(&p).map_err(|e| Error::Stream {
            frame: i,
            message: e.to_string(),
        })?);
    }

    let truth = read_text(&dir.join(&manifest.files.ground_truth))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_truth_line(l, &topo))
        .collect::<Result<Vec<_>>>()?;

    let depth_text = read_text(&dir.join(&manifest.files.depth))?;
    let depth = if depth_text.trim().is_empty() {
        Vec::new()
    } else {
        let all = parse_tensor(&depth_text)?;
        let [t, h, w] = *all.shape() else {
            return Err(Error::Parse("depth fixture must be (T, H, W)".into()));
        };
        all.data()
            .chunks(h * w)
            .take(t)
            .map(|c| Tensor::new(vec![1, h, w], c.to_vec()))
            .collect::<Result<Vec<_>>>()?
    };

    if frames.len() != manifest.frames {
        return Err(Error::Stream {
            frame: frames.len(),
            message: format!("manifest lists {} frames, stream has {}", manifest.frames, frames.len()),
        });
    }
    Ok(LoadedScene {
        manifest,
        frames,
        imu,
        truth,
        depth,
    })
}

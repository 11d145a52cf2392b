//! End-to-end orchestration: clip assembly, feature extraction, decoding,
//! classification, depth lifting, evaluation, tuning and the live service.

mod classify;
mod config;
mod metrics;
mod overlay;
mod serve;
mod tune;

pub use classify::{classify_action, softmax, ActionLabel, ClassifierHead};
pub use config::{
    C3dSection, ClassifierConfig, DecoderConfig, DepthSource, MapSource, MetricsConfig,
    PipelineConfig, PreprocessConfig, TunerConfig, TUNABLE,
};
pub use metrics::{
    average_precision, average_recall, compute_metrics, evaluate_frames, keypoint_similarity,
    match_detections, match_detections_with, rank_detections, ClassMetrics, DetectionMatch,
    MetricsReport, ScoredDetection, ThresholdMetrics, DEFAULT_KAPPA, PERSON_CLASS,
};
pub use overlay::{render_overlay, DEFAULT_JOINT_RADIUS, PALETTE};
pub use serve::{serve, ServeOptions, ServeSummary};
pub use tune::{tune_pipeline, TuneReport};

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::c3d::{c3d_forward, load_bundle, preprocess_clip, C3dConfig, VideoClip};
use crate::error::{Error, Result};
use crate::ingest::sim::{load_scene, oracle_maps, FrameTruth, LoadedScene};
use crate::ingest::{edge_preprocess, synchronize_streams, ImuSample, SensorFrame};
use crate::pose::{
    detect_all_peaks, group_poses, heads_forward, lift_to_3d, DecoderHeads, DecoderOutputs,
    FrameRecord, LimbTopology, PoseSkeleton,
};
use crate::tensor::Tensor;

const HEADS_SALT: u64 = 0x6865_6164;
const CLASSIFIER_SALT: u64 = 0x636c_7366;
const NOISE_SALT: u64 = 0x6e6f_6973;

/// Everything computed for one frame before the tunable decoding step.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub index: usize,
    pub timestamp_us: u64,
    pub maps: DecoderOutputs,
    /// Multipliers from map to frame coordinates.
    pub scale: (f64, f64),
    pub depth: Option<Tensor>,
    pub label: ActionLabel,
    pub imu: Option<ImuSample>,
    pub imu_skew_us: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub index: usize,
    pub timestamp_us: u64,
    pub skeletons: Vec<PoseSkeleton>,
    pub label: Option<ActionLabel>,
    pub imu: Option<ImuSample>,
    pub imu_skew_us: Option<i64>,
    /// Set when this frame's clip failed; the run carries on.
    pub error: Option<String>,
}

impl FrameOutput {
    fn failed(index: usize, timestamp_us: u64, e: &Error) -> Self {
        FrameOutput {
            index,
            timestamp_us,
            skeletons: Vec::new(),
            label: None,
            imu: None,
            imu_skew_us: None,
            error: Some(e.to_string()),
        }
    }

    pub fn skeleton_line(&self, topo: &LimbTopology) -> Result<String> {
        FrameRecord::from_skeletons(self.index, &self.skeletons, topo).to_line()
    }

    pub fn action_line(&self) -> Result<String> {
        let mut v = json!({
            "frame": self.index,
            "timestamp_us": self.timestamp_us,
        });
        let m = v.as_object_mut().expect("object literal");
        if let Some(l) = &self.label {
            m.insert("class_index".into(), json!(l.class_index));
            m.insert("class_name".into(), json!(l.class_name));
            m.insert("confidence".into(), json!(l.confidence));
            m.insert("probabilities".into(), json!(l.probabilities));
        }
        m.insert(
            "imu".into(),
            match &self.imu {
                Some(s) => json!({
                    "seq": s.seq,
                    "skew_us": self.imu_skew_us,
                    "accel": s.accel,
                    "gyro": s.gyro,
                }),
                None => serde_json::Value::Null,
            },
        );
        if let Some(e) = &self.error {
            m.insert("error".into(), json!(e));
        }
        Ok(serde_json::to_string(&v)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub frames: Vec<FrameOutput>,
    pub metrics: Option<MetricsReport>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    topo: LimbTopology,
    c3d: C3dConfig,
    heads: Option<DecoderHeads>,
    classifier: ClassifierHead,
}

fn noise_seed(seed: u64, frame: usize) -> u64 {
    seed ^ NOISE_SALT ^ (frame as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl Pipeline {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let topo = LimbTopology::standard();
        let size = cfg.preprocess.target_size;
        let c3d = match &cfg.c3d.weights {
            Some(dir) => load_bundle(dir)
                .map_err(|e| Error::Config(format!("c3d weights {}: {e}", dir.display())))?,
            None => cfg
                .c3d
                .arch
                .synthesize(size, cfg.seed)
                .map_err(|e| Error::Config(format!("c3d arch: {e}")))?,
        };
        if c3d.input_size != size {
            return Err(Error::Config(format!(
                "c3d weights expect input {:?}, preprocess.target_size is {size:?}",
                c3d.input_size
            )));
        }
        let st = c3d.st_head.out_channels();
        let att = c3d
            .attention_layers
            .last()
            .map(|s| s.conv.out_channels())
            .ok_or_else(|| Error::Config("c3d attention branch is empty".into()))?;
        let heads = match cfg.decoder.source {
            MapSource::Heads => Some(DecoderHeads::synthesize(st, &topo, cfg.seed ^ HEADS_SALT)?),
            MapSource::Oracle => None,
        };
        let classifier =
            ClassifierHead::from_config(&cfg.classifier, st * att, cfg.seed ^ CLASSIFIER_SALT)
                .map_err(|e| Error::Config(format!("classifier: {e}")))?;
        Ok(Pipeline {
            cfg: cfg.clone(),
            topo,
            c3d,
            heads,
            classifier,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &LimbTopology {
        &self.topo
    }

    fn clip_tensor(clip: &[SensorFrame]) -> Result<VideoClip> {
        let frames = clip.iter().map(SensorFrame::to_tensor).collect::<Vec<_>>();
        let interval = match clip {
            [a, .., b] => (b.timestamp_us - a.timestamp_us) / (clip.len() as u64 - 1),
            _ => 0,
        };
        VideoClip::new(Tensor::stack_frames(&frames)?, (0.0, 255.0), interval)
    }

    /// Features, label and decoder maps for the last frame of `clip`.
    pub fn prepare(
        &self,
        index: usize,
        clip: &[SensorFrame],
        truth: Option<&FrameTruth>,
        depth: Option<&Tensor>,
    ) -> Result<PreparedFrame> {
        let last = clip.last().ok_or_else(|| Error::invalid("empty clip"))?;
        let (fh, fw) = (last.height as usize, last.width as usize);
        let x = preprocess_clip(&Self::clip_tensor(clip)?, self.cfg.preprocess.target_size)?;
        let bundle = c3d_forward(&x, &self.c3d)?;
        let label = classify_action(&bundle, &self.classifier)?;
        let d = &self.cfg.decoder;
        let (maps, scale) = match (&self.heads, d.source) {
            (Some(heads), _) => {
                let maps = heads_forward(&bundle.spatiotemporal, heads, &self.topo, d.stages)?;
                let (mh, mw) = (maps.height(), maps.width());
                let s = |f: usize, m: usize| if m > 1 { (f - 1) as f64 / (m - 1) as f64 } else { 1.0 };
                (maps, (s(fw, mw), s(fh, mh)))
            }
            (None, _) => {
                let truth = truth.ok_or_else(|| {
                    Error::Config("oracle decoder maps need ground truth; use decoder.source = \"heads\"".into())
                })?;
                let mut maps = oracle_maps(truth, &self.topo, fh, fw, d.heatmap_sigma, d.paf_width)?;
                if d.heatmap_noise > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(self.cfg.seed, index));
                    let n = Normal::new(0.0, d.heatmap_noise).map_err(|e| Error::invalid(e.to_string()))?;
                    for v in maps.heatmaps.data_mut() {
                        *v = (*v + n.sample(&mut rng)).clamp(0.0, 1.0);
                    }
                }
                (maps, (1.0, 1.0))
            }
        };
        let depth = match d.depth {
            DepthSource::Stream => depth.cloned(),
            DepthSource::None => None,
        };
        Ok(PreparedFrame {
            index,
            timestamp_us: last.timestamp_us,
            maps,
            scale,
            depth,
            label,
            imu: None,
            imu_skew_us: None,
        })
    }

    /// The tunable stage: peaks, grouping, rescaling and depth lifting.
    pub fn decode(&self, p: &PreparedFrame, d: &DecoderConfig) -> Result<Vec<PoseSkeleton>> {
        let cands = detect_all_peaks(&p.maps, d.threshold, d.nms_radius);
        let skeletons = group_poses(&cands, &p.maps, &self.topo, d.limb_threshold, d.samples)?;
        let skeletons: Vec<_> = skeletons.iter().map(|s| s.scaled(p.scale.0, p.scale.1)).collect();
        match &p.depth {
            Some(depth) => lift_to_3d(&skeletons, depth),
            None => Ok(skeletons),
        }
    }

    pub fn finish(&self, p: &PreparedFrame, d: &DecoderConfig) -> FrameOutput {
        match self.decode(p, d) {
            Ok(skeletons) => FrameOutput {
                index: p.index,
                timestamp_us: p.timestamp_us,
                skeletons,
                label: Some(p.label.clone()),
                imu: p.imu,
                imu_skew_us: p.imu_skew_us,
                error: None,
            },
            Err(e) => FrameOutput::failed(p.index, p.timestamp_us, &e),
        }
    }

    /// Prepares every frame of a recorded scene; failed clips come back as
    /// `Err` in their slot.
    pub fn prepare_scene(&self, scene: &LoadedScene) -> Result<Vec<Result<PreparedFrame>>> {
        let smoothed = edge_preprocess(&scene.imu, self.cfg.preprocess.imu_window)?;
        let synced = synchronize_streams(&scene.frames, &smoothed, self.cfg.preprocess.sync_tolerance_us)?;
        let clip_len = self.cfg.preprocess.clip_len;
        Ok(scene
            .frames
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let clip = &scene.frames[(i + 1).saturating_sub(clip_len)..=i];
                let mut p = self.prepare(i, clip, scene.truth.get(i), scene.depth.get(i))?;
                p.imu = synced[i].imu;
                p.imu_skew_us = synced[i].skew_us;
                Ok(p)
            })
            .collect())
    }

    pub fn decode_scene(&self, prepared: &[Result<PreparedFrame>], scene: &LoadedScene, d: &DecoderConfig) -> Vec<FrameOutput> {
        prepared
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                Ok(p) => self.finish(p, d),
                Err(e) => FrameOutput::failed(i, scene.frames[i].timestamp_us, e),
            })
            .collect()
    }

    pub fn evaluate(&self, outputs: &[FrameOutput], scene: &LoadedScene) -> Result<Option<MetricsReport>> {
        if scene.truth.is_empty() {
            return Ok(None);
        }
        let pred: Vec<Vec<PoseSkeleton>> = outputs.iter().map(|o| o.skeletons.clone()).collect();
        let truth: Vec<Vec<PoseSkeleton>> = scene.truth.iter().map(FrameTruth::skeletons).collect();
        evaluate_frames(&pred, &truth, &self.cfg.metrics).map(Some)
    }
}

/// Runs the batch pipeline over a recorded scene.
pub fn run_scene(cfg: &PipelineConfig, scene: &LoadedScene) -> Result<RunOutput> {
    let pipeline = Pipeline::new(cfg)?;
    let prepared = pipeline.prepare_scene(scene)?;
    let frames = pipeline.decode_scene(&prepared, scene, &cfg.decoder);
    let metrics = pipeline.evaluate(&frames, scene)?;
    Ok(RunOutput { frames, metrics })
}

/// Loads the scene behind `manifest` and runs the batch pipeline on it.
pub fn run_pipeline(cfg: &PipelineConfig, manifest: impl AsRef<Path>) -> Result<(RunOutput, LoadedScene)> {
    let scene = load_scene(manifest)?;
    Ok((run_scene(cfg, &scene)?, scene))
}

pub const SKELETONS_FILE: &str = "skeletons.jsonl";
pub const ACTIONS_FILE: &str = "actions.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

/// Writes `skeletons.jsonl`, `actions.jsonl` and, when ground truth was
/// available, `metrics.json`.
pub fn write_run(dir: impl AsRef<Path>, run: &RunOutput, topo: &LimbTopology) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut sk = fs::File::create(dir.join(SKELETONS_FILE))?;
    let mut ac = fs::File::create(dir.join(ACTIONS_FILE))?;
    for f in &run.frames {
        writeln!(sk, "{}", f.skeleton_line(topo)?)?;
        writeln!(ac, "{}", f.action_line()?)?;
    }
    if let Some(m) = &run.metrics {
        fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(m)? + "\n")?;
    }
    Ok(())
}

/// One `overlay_NNNNN.ppm` per frame.
pub fn write_overlays(dir: impl AsRef<Path>, run: &RunOutput, frames: &[SensorFrame], topo: &LimbTopology) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (out, frame) in run.frames.iter().zip(frames) {
        let ppm = render_overlay(frame, &out.skeletons, topo, DEFAULT_JOINT_RADIUS);
        fs::write(dir.join(format!("overlay_{:05}.ppm", out.index)), ppm)?;
    }
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::{AcquisitionSpec, Dim, GpParams, HyperparamSpace, Scale};
use crate::c3d::C3dArch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// `(H, W)` fed to the feature extractor.
    pub target_size: (usize, usize),
    /// Odd moving-average window applied to IMU streams.
    pub imu_window: usize,
    /// Frames per clip; each frame is decoded from the clip ending at it.
    pub clip_len: usize,
    pub sync_tolerance_us: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: (32, 32),
            imu_window: 5,
            clip_len: 4,
            sync_tolerance_us: 20_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct C3dSection {
    /// Weight bundle directory; when absent weights are synthesized from
    /// `arch` and the config seed.
    pub weights: Option<PathBuf>,
    pub arch: C3dArch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    /// Heatmaps/PAFs rendered from the scene's ground truth.
    Oracle,
    /// Heatmaps/PAFs produced by the decoder heads on extracted features.
    Heads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    /// Depth maps recorded alongside the frames.
    Stream,
    /// No lifting; every joint gets `z = 0`.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub source: MapSource,
    pub depth: DepthSource,
    pub threshold: f64,
    pub nms_radius: usize,
    pub limb_threshold: f64,
    pub samples: usize,
    pub stages: usize,
    pub heatmap_sigma: f64,
    pub paf_width: f64,
    /// Standard deviation of Gaussian noise added to oracle heatmaps.
    pub heatmap_noise: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            source: MapSource::Oracle,
            depth: DepthSource::Stream,
            threshold: 0.3,
            nms_radius: 3,
            limb_threshold: 0.2,
            samples: 10,
            stages: 2,
            heatmap_sigma: 1.5,
            paf_width: 1.5,
            heatmap_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub classes: Vec<String>,
    /// `classes x features` row-major; synthesized from the seed when absent.
    pub weights: Option<Vec<Vec<f64>>>,
    pub bias: Option<Vec<f64>>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            classes: ["idle", "walk", "jump", "wave"].map(String::from).to_vec(),
            weights: None,
            bias: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerConfig {
    pub dims: Vec<Dim>,
    pub acquisition: AcquisitionSpec,
    pub budget: usize,
    pub patience: usize,
    pub gp: GpParams,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            dims: vec![
                Dim::new("decoder.threshold", 0.05, 0.9, Scale::Linear),
                Dim::new("decoder.limb_threshold", 0.0, 0.8, Scale::Linear),
            ],
            acquisition: AcquisitionSpec::expected_improvement(256, 0),
            budget: 20,
            patience: 10,
            gp: GpParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub thresholds: Vec<f64>,
    pub kappa: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            thresholds: vec![0.5, 0.75],
            kappa: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub c3d: C3dSection,
    pub decoder: DecoderConfig,
    pub classifier: ClassifierConfig,
    pub tuner: TunerConfig,
    pub metrics: MetricsConfig,
    pub seed: u64,
}

/// Config fields the tuner may vary.
pub const TUNABLE: [&str; 4] = [
    "decoder.threshold",
    "decoder.limb_threshold",
    "decoder.nms_radius",
    "decoder.samples",
];

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.preprocess;
        if p.target_size.0 < 2 || p.target_size.1 < 2 {
            return Err(cfg_err("preprocess.target_size must be at least 2x2"));
        }
        if p.imu_window == 0 || p.imu_window.is_multiple_of(2) {
            return Err(cfg_err("preprocess.imu_window must be odd"));
        }
        if p.clip_len == 0 {
            return Err(cfg_err("preprocess.clip_len must be at least 1"));
        }
        let d = &self.decoder;
        if !(0.0..=1.0).contains(&d.threshold) {
            return Err(cfg_err("decoder.threshold must lie in [0, 1]"));
        }
        if d.nms_radius == 0 {
            return Err(cfg_err("decoder.nms_radius must be at least 1"));
        }
        if d.samples < 2 {
            return Err(cfg_err("decoder.samples must be at least 2"));
        }
        if d.stages == 0 {
            return Err(cfg_err("decoder.stages must be at least 1"));
        }
        if !(d.limb_threshold.is_finite()) {
            return Err(cfg_err("decoder.limb_threshold must be finite"));
        }
        if !(d.heatmap_sigma > 0.0 && d.paf_width > 0.0) {
            return Err(cfg_err("decoder.heatmap_sigma and decoder.paf_width must be positive"));
        }
        if !(d.heatmap_noise >= 0.0 && d.heatmap_noise.is_finite()) {
            return Err(cfg_err("decoder.heatmap_noise must be non-negative"));
        }
        let c = &self.classifier;
        if c.classes.is_empty() {
            return Err(cfg_err("classifier.classes must not be empty"));
        }
        if let Some(w) = &c.weights {
            if w.len() != c.classes.len() || w.windows(2).any(|r| r[0].len() != r[1].len()) {
                return Err(cfg_err("classifier.weights must have one equal-length row per class"));
            }
        }
        if let Some(b) = &c.bias {
            if b.len() != c.classes.len() {
                return Err(cfg_err("classifier.bias must have one entry per class"));
            }
        }
        let m = &self.metrics;
        if m.thresholds.is_empty() || m.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(cfg_err("metrics.thresholds must lie strictly inside (0, 1)"));
        }
        if !(m.kappa > 0.0) {
            return Err(cfg_err("metrics.kappa must be positive"));
        }
        self.tuner_space()?;
        self.tuner.acquisition.validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.tuner.budget < 2 || self.tuner.patience == 0 {
            return Err(cfg_err("tuner.budget must be >= 2 and tuner.patience >= 1"));
        }
        Ok(())
    }

    pub fn tuner_space(&self) -> Result<HyperparamSpace> {
        for d in &self.tuner.dims {
            if !TUNABLE.contains(&d.name.as_str()) {
                return Err(cfg_err(format!(
                    "tuner dim {:?} is not a tunable field (expected one of {TUNABLE:?})",
                    d.name
                )));
            }
            d.validate().map_err(|e| cfg_err(format!("tuner dim {:?}: {e}", d.name)))?;
            let (lo, hi) = match d.name.as_str() {
                "decoder.threshold" => (0.0, 1.0),
                "decoder.nms_radius" => (1.0, f64::INFINITY),
                "decoder.samples" => (2.0, f64::INFINITY),
                _ => (f64::NEG_INFINITY, f64::INFINITY),
            };
            if d.lower < lo || d.upper > hi {
                return Err(cfg_err(format!(
                    "tuner dim {:?} bounds [{}, {}] leave the field's valid range",
                    d.name, d.lower, d.upper
                )));
            }
        }
        HyperparamSpace::new(self.tuner.dims.clone()).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn get_field(&self, name: &str) -> Option<f64> {
        let d = &self.decoder;
        Some(match name {
            "decoder.threshold" => d.threshold,
            "decoder.limb_threshold" => d.limb_threshold,
            "decoder.nms_radius" => d.nms_radius as f64,
            "decoder.samples" => d.samples as f64,
            _ => return None,
        })
    }

    /// Returns a copy with the named field replaced; integer fields round to
    /// the nearest value.
    pub fn with_field(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let d = &mut c.decoder;
        match name {
            "decoder.threshold" => d.threshold = value,
            "decoder.limb_threshold" => d.limb_threshold = value,
            "decoder.nms_radius" => d.nms_radius = value.round().max(1.0) as usize,
            "decoder.samples" => d.samples = value.round().max(2.0) as usize,
            _ => return Err(cfg_err(format!("unknown tunable field {name:?}"))),
        }
        Ok(c)
    }
}

//! Weight bundles: seeded synthesis and a directory format made of a JSON
//! manifest plus one tensor fixture per kernel and bias.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{C3dConfig, Stage};
use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, Activation, ConvSpec, PoolMode, PoolSpec, Tensor};

/// Layer widths for a seeded, untrained backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C3dArch {
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    pub layer_channels: Vec<usize>,
    pub attention_channels: Vec<usize>,
    pub st_channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel: [usize; 3],
}

fn default_in_channels() -> usize {
    1
}

fn default_kernel() -> [usize; 3] {
    [3, 3, 3]
}

impl Default for C3dArch {
    fn default() -> Self {
        C3dArch {
            in_channels: 1,
            layer_channels: vec![4, 6],
            attention_channels: vec![3],
            st_channels: 6,
            kernel: default_kernel(),
        }
    }
}

/// Uniform He-style initialisation, `U(-sqrt(3/fan_in), sqrt(3/fan_in))`,
/// zero bias, padding chosen to preserve the extent at stride 1.
pub(crate) fn random_conv(
    rng: &mut impl Rng,
    out_c: usize,
    in_c: usize,
    kernel: [usize; 3],
    activation: Activation,
) -> Result<ConvSpec> {
    let fan_in = (in_c * kernel.iter().product::<usize>()) as f64;
    let bound = (3.0 / fan_in).sqrt();
    let k = Tensor::from_fn(vec![out_c, in_c, kernel[0], kernel[1], kernel[2]], |_| {
        rng.random_range(-bound..bound)
    })?;
    ConvSpec::new(
        k,
        vec![0.0; out_c],
        [1, 1, 1],
        kernel.map(|k| k / 2),
        activation,
    )
}

impl C3dArch {
    pub fn synthesize(&self, input_size: (usize, usize), seed: u64) -> Result<C3dConfig> {
        if self.layer_channels.is_empty() || self.attention_channels.is_empty() {
            return Err(Error::invalid("both branches need at least one layer"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = PoolSpec::new(PoolMode::Max, [1, 2, 2], [1, 2, 2])?;
        let stack = |widths: &[usize], rng: &mut ChaCha8Rng| -> Result<Vec<Stage>> {
            let mut c = self.in_channels;
            widths
                .iter()
                .map(|&w| {
                    let conv = random_conv(rng, w, c, self.kernel, Activation::Relu)?;
                    c = w;
                    Ok(Stage { conv, pool })
                })
                .collect()
        };
        let layers = stack(&self.layer_channels, &mut rng)?;
        let attention_layers = stack(&self.attention_channels, &mut rng)?;
        let fused: usize = self.layer_channels.iter().sum();
        let st_head = random_conv(
            &mut rng,
            self.st_channels,
            fused,
            [1, self.kernel[1], self.kernel[2]],
            Activation::Relu,
        )?;
        Ok(C3dConfig {
            layers,
            st_head,
            attention_layers,
            input_size,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvRecord {
    kernel: String,
    bias: String,
    stride: [usize; 3],
    padding: [usize; 3],
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageRecord {
    conv: ConvRecord,
    pool: PoolSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleManifest {
    input_size: (usize, usize),
    layers: Vec<StageRecord>,
    st_head: ConvRecord,
    attention_layers: Vec<StageRecord>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn save_conv(dir: &Path, name: &str, spec: &ConvSpec) -> Result<ConvRecord> {
    let kernel = format!("{name}_kernel.txt");
    let bias = format!("{name}_bias.txt");
    write_tensor(dir.join(&kernel), spec.kernel())?;
    write_tensor(
        dir.join(&bias),
        &Tensor::new(vec![spec.bias().len()], spec.bias().to_vec())?,
    )?;
    Ok(ConvRecord {
        kernel,
        bias,
        stride: spec.stride(),
        padding: spec.padding(),
        activation: spec.activation(),
    })
}

fn load_conv(dir: &Path, rec: &ConvRecord) -> Result<ConvSpec> {
    let kernel = read_tensor(dir.join(&rec.kernel))?;
    let bias = read_tensor(dir.join(&rec.bias))?;
    if bias.ndim() != 1 {
        return Err(Error::Parse(format!("bias fixture {} must be 1-D", rec.bias)));
    }
    ConvSpec::new(kernel, bias.into_data(), rec.stride, rec.padding, rec.activation)
}

pub fn save_bundle(dir: impl AsRef<Path>, cfg: &C3dConfig) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let stages = |prefix: &str, stages: &[Stage]| -> Result<Vec<StageRecord>> {
        stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(StageRecord {
                    conv: save_conv(dir, &format!("{prefix}{i}"), &s.conv)?,
                    pool: s.pool,
                })
            })
            .collect()
    };
    let manifest = BundleManifest {
        input_size: cfg.input_size,
        layers: stages("layer", &cfg.layers)?,
        st_head: save_conv(dir, "st_head", &cfg.st_head)?,
        attention_layers: stages("attention", &cfg.attention_layers)?,
    };
    fs::write(
        dir.join(MANIFEST_NAME),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<C3dConfig> {
    let dir = dir.as_ref();
    let manifest: BundleManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?;
    let stages = |recs: &[StageRecord]| -> Result<Vec<Stage>> {
        recs.iter()
            .map(|r| {
                r.pool.validate()?;
                Ok(Stage {
                    conv: load_conv(dir, &r.conv)?,
                    pool: r.pool,
                })
            })
            .collect()
    };
    Ok(C3dConfig {
        input_size: manifest.input_size,
        layers: stages(&manifest.layers)?,
        st_head: load_conv(dir, &manifest.st_head)?,
        attention_layers: stages(&manifest.attention_layers)?,
    })
}

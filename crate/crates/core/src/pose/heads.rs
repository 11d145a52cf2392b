use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DecoderOutputs, LimbTopology};
use crate::c3d::random_conv;
use crate::error::{Error, Result};
use crate::tensor::{conv_spatial, Activation, ConvSpec, Tensor};

/// A heatmap head and a PAF head reading the same input map.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSet {
    heat: ConvSpec,
    paf: ConvSpec,
}

impl HeadSet {
    /// Heatmaps always use a sigmoid and PAFs are left linear, whatever the
    /// activation recorded in the given specs.
    pub fn new(heat: ConvSpec, paf: ConvSpec) -> Result<Self> {
        if heat.in_channels() != paf.in_channels() {
            return Err(Error::shape(format!(
                "heat head reads {} channels, PAF head {}",
                heat.in_channels(),
                paf.in_channels()
            )));
        }
        Ok(HeadSet {
            heat: heat.with_activation(Activation::Sigmoid),
            paf: paf.with_activation(Activation::None),
        })
    }

    pub fn heat(&self) -> &ConvSpec {
        &self.heat
    }

    pub fn paf(&self) -> &ConvSpec {
        &self.paf
    }

    pub fn in_channels(&self) -> usize {
        self.heat.in_channels()
    }

    fn apply(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((conv_spatial(input, &self.heat)?, conv_spatial(input, &self.paf)?))
    }
}

/// Initial heads plus the heads shared by every refinement stage. The
/// refinement heads read `fused ++ heatmaps ++ pafs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderHeads {
    pub initial: HeadSet,
    pub refine: Option<HeadSet>,
}

impl DecoderHeads {
    /// Seeded 3x3 heads for `in_channels` feature channels.
    pub fn synthesize(in_channels: usize, topo: &LimbTopology, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = topo.num_keypoints();
        let p = 2 * topo.num_limbs();
        let kernel = [1, 3, 3];
        let initial = HeadSet::new(
            random_conv(&mut rng, k, in_channels, kernel, Activation::Sigmoid)?,
            random_conv(&mut rng, p, in_channels, kernel, Activation::None)?,
        )?;
        let r_in = in_channels + k + p;
        let refine = HeadSet::new(
            random_conv(&mut rng, k, r_in, kernel, Activation::Sigmoid)?,
            random_conv(&mut rng, p, r_in, kernel, Activation::None)?,
        )?;
        Ok(DecoderHeads {
            initial,
            refine: Some(refine),
        })
    }
}

/// Runs the heads for `stages` passes over a `(C, H, W)` feature map and
/// returns the final stage.
pub fn heads_forward(
    fused: &Tensor,
    heads: &DecoderHeads,
    topo: &LimbTopology,
    stages: usize,
) -> Result<DecoderOutputs> {
    if stages == 0 {
        return Err(Error::invalid("at least one decoder stage is required"));
    }
    let k = topo.num_keypoints();
    let p = 2 * topo.num_limbs();
    let check = |set: &HeadSet, what: &str| -> Result<()> {
        if set.heat.out_channels() != k || set.paf.out_channels() != p {
            return Err(Error::shape(format!(
                "{what} heads emit {}/{} channels, topology needs {k}/{p}",
                set.heat.out_channels(),
                set.paf.out_channels()
            )));
        }
        Ok(())
    };
    check(&heads.initial, "initial")?;
    let (c, _, _) = fused.dims3()?;
    if heads.initial.in_channels() != c {
        return Err(Error::shape(format!(
            "initial heads read {} channels, features have {c}",
            heads.initial.in_channels()
        )));
    }
    let (mut heat, mut paf) = heads.initial.apply(fused)?;
    if stages > 1 {
        let refine = heads
            .refine
            .as_ref()
            .ok_or_else(|| Error::invalid("refinement stages requested without refinement heads"))?;
        check(refine, "refinement")?;
        if refine.in_channels() != c + k + p {
            return Err(Error::shape(format!(
                "refinement heads read {} channels, expected {}",
                refine.in_channels(),
                c + k + p
            )));
        }
        for _ in 1..stages {
            let input = Tensor::concat_channels(&[fused, &heat, &paf])?;
            (heat, paf) = refine.apply(&input)?;
        }
    }
    DecoderOutputs::new(heat, paf, stages, topo)
}

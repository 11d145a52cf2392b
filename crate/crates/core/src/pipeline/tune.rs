use super::{Pipeline, PipelineConfig};
use crate::bayes::{history_csv, tune_loop_with, AcquisitionSpec, TuneOutcome, TunerSettings};
use crate::error::{Error, Result};
use crate::ingest::sim::LoadedScene;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    /// Input config with the incumbent's values substituted.
    pub best: PipelineConfig,
    pub outcome: TuneOutcome,
    pub history_csv: String,
}

fn substitute(cfg: &PipelineConfig, names: &[String], values: &[f64]) -> Result<PipelineConfig> {
    names
        .iter()
        .zip(values)
        .try_fold(cfg.clone(), |c, (n, &v)| c.with_field(n, v))
}

/// Maximises mAP over the config's tuner dims. Features and decoder maps
/// are computed once; each evaluation re-runs only the decoding stage. The
/// starting config is always part of the initial design.
pub fn tune_pipeline(
    cfg: &PipelineConfig,
    scene: &LoadedScene,
    budget: usize,
    acq: AcquisitionSpec,
) -> Result<TuneReport> {
    let space = cfg.tuner_space()?;
    if space.is_empty() {
        return Err(Error::Config("tuner.dims is empty".into()));
    }
    if scene.truth.is_empty() {
        return Err(Error::Evaluation("tuning needs a scene with ground truth".into()));
    }
    let pipeline = Pipeline::new(cfg)?;
    let prepared = pipeline.prepare_scene(scene)?;
    let names: Vec<String> = space.dims().iter().map(|d| d.name.clone()).collect();

    let objective = |values: &[f64]| -> Result<f64> {
        let c = substitute(cfg, &names, values)?;
        let frames = pipeline.decode_scene(&prepared, scene, &c.decoder);
        let report = pipeline.evaluate(&frames, scene)?.expect("scene has truth");
        report
            .map
            .ok_or_else(|| Error::Evaluation("mAP undefined: no ground truth".into()))
    };

    let current: Vec<f64> = names
        .iter()
        .map(|n| cfg.get_field(n).expect("tuner dims are validated"))
        .collect();
    let mut settings = TunerSettings::new(acq, budget, cfg.tuner.patience);
    settings.gp = cfg.tuner.gp;
    settings.initial_points = vec![space.to_unit(&current).into_iter().map(|u| u.clamp(0.0, 1.0)).collect()];

    let outcome = tune_loop_with(&space, objective, &settings)?;
    let best = match &outcome.x_star {
        Some(x) => substitute(cfg, &names, x)?,
        None => cfg.clone(),
    };
    Ok(TuneReport {
        history_csv: history_csv(&outcome, &space),
        best,
        outcome,
    })
}

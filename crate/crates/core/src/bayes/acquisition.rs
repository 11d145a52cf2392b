use serde::{Deserialize, Serialize};

use super::gp::{FittedGp, GpModel};
use super::lowdisc::halton_points;
use super::HyperparamSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    ExpectedImprovement,
    MeanPlusStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_candidates")]
    pub candidate_count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_candidates() -> usize {
    256
}

impl AcquisitionSpec {
    pub fn expected_improvement(candidate_count: usize, seed: u64) -> Self {
        AcquisitionSpec {
            kind: AcquisitionKind::ExpectedImprovement,
            lambda: default_lambda(),
            candidate_count,
            seed,
        }
    }

    pub fn mean_plus_std(lambda: f64, candidate_count: usize, seed: u64) -> Self {
        AcquisitionSpec {
            kind: AcquisitionKind::MeanPlusStd,
            lambda,
            candidate_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("acquisition lambda must be finite and non-negative"));
        }
        if self.candidate_count == 0 {
            return Err(Error::invalid("acquisition needs at least one candidate"));
        }
        Ok(())
    }

    fn evaluate(&self, fit: &FittedGp<'_>, x: &[f64], f_best: f64) -> f64 {
        let (mu, var) = fit.posterior(x);
        match self.kind {
            AcquisitionKind::ExpectedImprovement => {
                expected_improvement_from_moments(mu, var.sqrt(), f_best)
            }
            AcquisitionKind::MeanPlusStd => mu + self.lambda * var.sqrt(),
        }
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form `E[max(0, f - f_best)]` for `f ~ N(mu, sigma^2)`.
pub fn expected_improvement_from_moments(mu: f64, sigma: f64, f_best: f64) -> f64 {
    let gain = mu - f_best;
    if sigma < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

pub fn expected_improvement(model: &GpModel, x: &[f64], f_best: f64) -> Result<f64> {
    let (mu, var) = model.fit()?.posterior(x);
    Ok(expected_improvement_from_moments(mu, var.sqrt(), f_best))
}

pub fn mean_plus_std(model: &GpModel, x: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let (mu, var) = model.fit()?.posterior(x);
    Ok(mu + lambda * var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    /// Unit-cube coordinates.
    pub point: Vec<f64>,
    pub acquisition: f64,
    /// Position in the scanned list: candidates first, then midpoints.
    pub index: usize,
}

/// The candidate list `propose_next` scans before midpoints are added.
pub fn candidate_points(space: &HyperparamSpace, acq: &AcquisitionSpec) -> Vec<Vec<f64>> {
    halton_points(acq.candidate_count, space.len(), acq.seed)
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect()
}

/// Maximises the acquisition over `candidate_count` seeded Halton points,
/// then over the midpoints between the two best candidates and the
/// incumbent. Ties go to the lowest index.
pub fn propose_next(
    model: &GpModel,
    space: &HyperparamSpace,
    acq: &AcquisitionSpec,
    f_best: f64,
) -> Result<Proposal> {
    acq.validate()?;
    let fit = model.fit()?;
    let mut points = candidate_points(space, acq);
    let scores: Vec<f64> = points.iter().map(|p| acq.evaluate(&fit, p, f_best)).collect();

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut all_scores = scores;
    if order.len() >= 2 {
        if let Some((inc, _)) = model.incumbent() {
            let x_inc = model.observations()[inc].x.clone();
            let (c1, c2) = (points[order[0]].clone(), points[order[1]].clone());
            for m in [midpoint(&c1, &x_inc), midpoint(&c2, &x_inc), midpoint(&c1, &c2)] {
                all_scores.push(acq.evaluate(&fit, &m, f_best));
                points.push(m);
            }
        }
    }

    let mut best = 0;
    for (i, &s) in all_scores.iter().enumerate() {
        if s > all_scores[best] {
            best = i;
        }
    }
    Ok(Proposal {
        point: points.swap_remove(best),
        acquisition: all_scores[best],
        index: best,
    })
}

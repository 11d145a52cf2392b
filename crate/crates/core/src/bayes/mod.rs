//! Gaussian-process Bayesian optimisation over a box of hyperparameters.
//!
//! Points are handled internally in unit-cube coordinates; the objective
//! always sees denormalised values. Larger objective values are better.

mod acquisition;
mod gp;
mod lowdisc;
mod tuner;

pub use acquisition::{
    candidate_points, expected_improvement, expected_improvement_from_moments, mean_plus_std,
    propose_next,
    AcquisitionKind, AcquisitionSpec, Proposal,
};
pub use gp::{gp_posterior, FittedGp, GpModel, GpParams, Observation};
pub use lowdisc::halton_points;
pub use tuner::{
    history_csv, tune_loop, tune_loop_with, HistoryEntry, StopReason, TuneOutcome, TunerSettings,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "linear")]
    pub scale: Scale,
}

fn linear() -> Scale {
    Scale::Linear
}

impl Dim {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, scale: Scale) -> Self {
        Dim {
            name: name.into(),
            lower,
            upper,
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.lower >= self.upper {
            return Err(Error::invalid(format!(
                "dimension {} needs finite bounds with lower < upper, got [{}, {}]",
                self.name, self.lower, self.upper
            )));
        }
        if self.scale == Scale::Log && self.lower <= 0.0 {
            return Err(Error::invalid(format!(
                "log-scale dimension {} needs a positive lower bound",
                self.name
            )));
        }
        Ok(())
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.lower) / (self.upper - self.lower),
            Scale::Log => (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        };
        u.clamp(0.0, 1.0)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log => (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpace {
    dims: Vec<Dim>,
}

impl HyperparamSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("hyperparameter space has no dimensions"));
        }
        for d in &dims {
            d.validate()?;
        }
        Ok(HyperparamSpace { dims })
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn to_unit(&self, values: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(values).map(|(d, &v)| d.to_unit(v)).collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(unit).map(|(d, &u)| d.from_unit(u)).collect()
    }
}

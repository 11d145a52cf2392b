use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Unit-cube coordinates.
    pub x: Vec<f64>,
    pub y: f64,
}

/// Squared-exponential kernel hyperparameters, in unit-cube coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams {
            length_scale: 0.2,
            signal_variance: 1.0,
            noise_variance: 1e-6,
        }
    }
}

/// Zero-mean GP with kernel `sf2 * exp(-|x - x'|^2 / (2 l^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    params: GpParams,
    observations: Vec<Observation>,
}

impl GpModel {
    pub fn new(params: GpParams) -> Result<Self> {
        let GpParams {
            length_scale,
            signal_variance,
            noise_variance,
        } = params;
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::invalid("length scale must be positive"));
        }
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::invalid("signal variance must be positive"));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        Ok(GpModel {
            params,
            observations: Vec::new(),
        })
    }

    pub fn params(&self) -> GpParams {
        self.params
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn add_observation(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if let Some(first) = self.observations.first() {
            if first.x.len() != x.len() {
                return Err(Error::invalid(format!(
                    "observation has {} dims, model has {}",
                    x.len(),
                    first.x.len()
                )));
            }
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("observation outside the unit cube"));
        }
        if !y.is_finite() {
            return Err(Error::invalid("observation value must be finite"));
        }
        self.observations.push(Observation { x, y });
        Ok(())
    }

    /// Index and value of the largest observed y; ties keep the earliest.
    pub fn incumbent(&self) -> Option<(usize, f64)> {
        self.observations
            .iter()
            .enumerate()
            .fold(None, |best, (i, o)| match best {
                Some((_, y)) if y >= o.y => best,
                _ => Some((i, o.y)),
            })
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        let l = self.params.length_scale;
        self.params.signal_variance * (-d2 / (2.0 * l * l)).exp()
    }

    /// Gram matrix over the observations, filled symmetrically.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.observations.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel(&self.observations[i].x, &self.observations[j].x);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Factorises `K + noise I`. When that is numerically singular, retries
    /// with `jitter` added to the diagonal, escalating tenfold from 1e-10
    /// until the factorisation succeeds or 1e-4 is exceeded.
    pub fn fit(&self) -> Result<FittedGp<'_>> {
        let n = self.observations.len();
        let y = DVector::from_iterator(n, self.observations.iter().map(|o| o.y));
        if n == 0 {
            return Ok(FittedGp {
                model: self,
                chol: None,
                alpha: y,
                jitter: 0.0,
            });
        }
        let base = self.kernel_matrix();
        let mut shifted = base.clone();
        for i in 0..n {
            shifted[(i, i)] += self.params.noise_variance;
        }
        // Jitter is only needed when the smallest pivot is already below
        // what the first jitter step would add.
        if let Some(chol) = Cholesky::new(shifted) {
            let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, &d| m.min(d * d));
            if min_pivot >= JITTER_START {
                let alpha = chol.solve(&y);
                return Ok(FittedGp {
                    model: self,
                    chol: Some(chol),
                    alpha,
                    jitter: 0.0,
                });
            }
        }
        let mut jitter = JITTER_START;
        loop {
            let mut a = base.clone();
            for i in 0..n {
                a[(i, i)] += self.params.noise_variance + jitter;
            }
            if let Some(chol) = Cholesky::new(a) {
                let alpha = chol.solve(&y);
                return Ok(FittedGp {
                    model: self,
                    chol: Some(chol),
                    alpha,
                    jitter,
                });
            }
            jitter *= 10.0;
            if jitter > JITTER_MAX * 1.000001 {
                let diag = base.diagonal();
                return Err(Error::Factorization {
                    n,
                    max_jitter: JITTER_MAX,
                    diag_min: diag.min(),
                    diag_max: diag.max(),
                });
            }
        }
    }
}

/// A model with its kernel matrix factorised, ready for repeated queries.
#[derive(Debug, Clone)]
pub struct FittedGp<'a> {
    model: &'a GpModel,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl FittedGp<'_> {
    pub fn model(&self) -> &GpModel {
        self.model
    }

    /// Diagonal jitter that was added on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior `(mean, variance)` at `x`; variance is clamped at zero.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let prior = self.model.params.signal_variance;
        let Some(chol) = &self.chol else {
            return (0.0, prior);
        };
        let obs = &self.model.observations;
        let kx = DVector::from_iterator(obs.len(), obs.iter().map(|o| self.model.kernel(x, &o.x)));
        let mu = kx.dot(&self.alpha);
        let v = chol.l().solve_lower_triangular(&kx).expect("cholesky factor is non-singular");
        let var = (prior - v.dot(&v)).max(0.0);
        (mu, var)
    }
}

/// Posterior mean and variance at `x` (prior `(0, sf2)` with no observations).
pub fn gp_posterior(model: &GpModel, x: &[f64]) -> Result<(f64, f64)> {
    Ok(model.fit()?.posterior(x))
}

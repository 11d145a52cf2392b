use std::fmt::{self, Display, Write as _};

use super::acquisition::{propose_next, AcquisitionSpec};
use super::gp::{GpModel, GpParams};
use super::lowdisc::halton_points;
use super::HyperparamSpace;
use crate::error::{Error, Result};

/// Offset applied to the acquisition seed for the initial design so that it
/// does not coincide with the first candidate set.
const DESIGN_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub struct TunerSettings {
    pub acquisition: AcquisitionSpec,
    pub budget: usize,
    pub patience: usize,
    pub gp: GpParams,
    /// Extra unit-cube points evaluated ahead of the quasi-random design.
    pub initial_points: Vec<Vec<f64>>,
}

impl TunerSettings {
    pub fn new(acquisition: AcquisitionSpec, budget: usize, patience: usize) -> Self {
        TunerSettings {
            acquisition,
            budget,
            patience,
            gp: GpParams::default(),
            initial_points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Patience,
}

impl Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Budget => "budget",
            StopReason::Patience => "patience",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub iter: usize,
    pub unit: Vec<f64>,
    pub values: Vec<f64>,
    /// `None` when the objective rejected the point.
    pub y: Option<f64>,
    pub f_star: Option<f64>,
    /// Acquisition value at proposal time; `None` for the initial design.
    pub acquisition: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub x_star: Option<Vec<f64>>,
    pub f_star: Option<f64>,
    pub history: Vec<HistoryEntry>,
    pub stop_reason: StopReason,
}

struct Loop<'a, F> {
    space: &'a HyperparamSpace,
    objective: F,
    model: GpModel,
    history: Vec<HistoryEntry>,
    best: Option<(usize, f64)>,
}

impl<F, E> Loop<'_, F>
where
    F: FnMut(&[f64]) -> std::result::Result<f64, E>,
    E: Display,
{
    /// Evaluates one point; returns whether the incumbent improved.
    fn evaluate(&mut self, unit: Vec<f64>, acquisition: Option<f64>) -> Result<bool> {
        let values = self.space.from_unit(&unit);
        let (y, error) = match (self.objective)(&values) {
            Ok(y) if y.is_finite() => (Some(y), None),
            Ok(y) => (None, Some(format!("non-finite objective value {y}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut improved = false;
        if let Some(y) = y {
            self.model.add_observation(unit.clone(), y)?;
            if self.best.is_none_or(|(_, b)| y > b) {
                self.best = Some((self.history.len(), y));
                improved = true;
            }
        }
        self.history.push(HistoryEntry {
            iter: self.history.len(),
            unit,
            values,
            y,
            f_star: self.best.map(|(_, b)| b),
            acquisition,
            error,
        });
        Ok(improved)
    }
}

/// Budgeted Bayesian optimisation with the default GP hyperparameters.
pub fn tune_loop<F, E>(
    space: &HyperparamSpace,
    objective: F,
    acq: AcquisitionSpec,
    budget: usize,
    patience: usize,
) -> Result<TuneOutcome>
where
    F: FnMut(&[f64]) -> std::result::Result<f64, E>,
    E: Display,
{
    tune_loop_with(space, objective, &TunerSettings::new(acq, budget, patience))
}

/// Evaluates `initial_points` and a `2 * dim` seeded Halton design, then
/// proposes and evaluates points until the budget is spent or `patience`
/// consecutive proposals fail to improve the incumbent. Rejected points
/// count against the budget and as non-improving.
pub fn tune_loop_with<F, E>(
    space: &HyperparamSpace,
    objective: F,
    settings: &TunerSettings,
) -> Result<TuneOutcome>
where
    F: FnMut(&[f64]) -> std::result::Result<f64, E>,
    E: Display,
{
    if settings.budget < 2 {
        return Err(Error::invalid("tuning budget must be at least 2"));
    }
    if settings.patience == 0 {
        return Err(Error::invalid("patience must be at least 1"));
    }
    settings.acquisition.validate()?;
    for p in &settings.initial_points {
        if p.len() != space.len() || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("initial point outside the unit cube"));
        }
    }

    let mut state = Loop {
        space,
        objective,
        model: GpModel::new(settings.gp)?,
        history: Vec::new(),
        best: None,
    };

    let design_seed = settings.acquisition.seed ^ DESIGN_SEED_SALT;
    let design = settings
        .initial_points
        .iter()
        .cloned()
        .chain(halton_points(2 * space.len(), space.len(), design_seed))
        .take(settings.budget);
    for p in design {
        state.evaluate(p, None)?;
    }

    let mut stale = 0;
    let mut stop_reason = StopReason::Budget;
    let mut round: u64 = 0;
    while state.history.len() < settings.budget {
        if stale >= settings.patience {
            stop_reason = StopReason::Patience;
            break;
        }
        round += 1;
        let acq = AcquisitionSpec {
            seed: settings
                .acquisition
                .seed
                .wrapping_add(round.wrapping_mul(DESIGN_SEED_SALT)),
            ..settings.acquisition
        };
        let f_best = state.best.map_or(0.0, |(_, b)| b);
        let proposal = propose_next(&state.model, space, &acq, f_best)?;
        if state.evaluate(proposal.point, Some(proposal.acquisition))? {
            stale = 0;
        } else {
            stale += 1;
        }
    }

    let (x_star, f_star) = match state.best {
        Some((i, y)) => (Some(state.history[i].values.clone()), Some(y)),
        None => (None, None),
    };
    Ok(TuneOutcome {
        x_star,
        f_star,
        history: state.history,
        stop_reason,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV log: `iter, <dim names...>, y, f_star, acquisition, stop_reason`;
/// the stop reason is written on the final row only.
pub fn history_csv(outcome: &TuneOutcome, space: &HyperparamSpace) -> String {
    let mut s = String::from("iter");
    for d in space.dims() {
        s.push(',');
        s.push_str(&d.name);
    }
    s.push_str(",y,f_star,acquisition,stop_reason\n");
    let last = outcome.history.len().saturating_sub(1);
    for (i, h) in outcome.history.iter().enumerate() {
        let _ = write!(s, "{}", h.iter);
        for v in &h.values {
            let _ = write!(s, ",{v}");
        }
        let stop = if i == last {
            outcome.stop_reason.to_string()
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            opt(h.y),
            opt(h.f_star),
            opt(h.acquisition),
            stop
        );
    }
    s
}

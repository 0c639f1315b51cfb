//! Lyapunov-type energy records, the energy-threshold stopping rule, and
//! the bookkeeping for the rank-`N` change of measure.
//!
//! A trajectory carries three running functionals (see
//! [`crate::dynamics::EnergyLevels`]): the plain energy, the
//! logarithmically weighted one, and its tail-only variant. The stopping
//! rule fires the first time the weighted energy crosses an affine
//! envelope `(K + L) t + rho + M |u(0)|^2`. The ledger integrates the
//! control against the driving Brownian motions — the log-density of the
//! shifted measure against the reference one — by left-rectangle
//! quadrature, which keeps the discrete exponential an exact martingale.

use serde::Serialize;

use crate::dynamics::{ControlStep, EnergyLevels};
use crate::error::{CglError, Result};
use crate::noise::{NoiseSpec, WienerIncrement};

/// Sampled time series of the three energy functionals of one trajectory.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EnergyRecord {
    pub times: Vec<f64>,
    pub plain: Vec<f64>,
    pub weighted: Vec<f64>,
    pub weighted_tail: Vec<f64>,
}

impl EnergyRecord {
    pub fn new() -> EnergyRecord {
        EnergyRecord::default()
    }

    pub fn push(&mut self, t: f64, levels: EnergyLevels) {
        self.times.push(t);
        self.plain.push(levels.plain);
        self.weighted.push(levels.weighted);
        self.weighted_tail.push(levels.weighted_tail);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `sup_t (weighted(t) - rate * t)` over the recorded samples.
    pub fn sup_weighted_excess(&self, rate: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.weighted)
            .map(|(&t, &e)| e - rate * t)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Parameters of the affine stopping envelope
/// `(rate + rate_margin) t + offset + init_weight |u(0)|^2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StoppingParams {
    /// `K`: the calibrated mean growth rate of the weighted energy.
    pub rate: f64,
    /// `L`: slack added on top of the calibrated rate.
    pub rate_margin: f64,
    /// `M`: weight of the initial squared norm.
    pub init_weight: f64,
    /// `rho`: additive offset.
    pub offset: f64,
}

impl StoppingParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rate", self.rate),
            ("rate margin", self.rate_margin),
            ("initial-norm weight", self.init_weight),
            ("offset", self.offset),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CglError::Parameter(format!(
                    "stopping {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, t: f64, init_norm_sq: f64) -> f64 {
        (self.rate + self.rate_margin) * t + self.offset + self.init_weight * init_norm_sq
    }

    pub fn with_offset(mut self, offset: f64) -> StoppingParams {
        self.offset = offset;
        self
    }
}

/// First crossing of the stopping envelope, if it happened within the
/// simulated horizon. "Never observed" is a distinguished outcome, not a
/// sentinel value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StoppingOutcome {
    Triggered(f64),
    NotWithinHorizon(f64),
}

impl StoppingOutcome {
    pub fn is_triggered(&self) -> bool {
        matches!(self, StoppingOutcome::Triggered(_))
    }

    /// Crossing time, or the horizon for paths that never crossed — the
    /// value at which truncated flows effectively never switch.
    pub fn switch_time(&self) -> f64 {
        match *self {
            StoppingOutcome::Triggered(t) => t,
            StoppingOutcome::NotWithinHorizon(_) => f64::INFINITY,
        }
    }

    pub fn min(self, other: StoppingOutcome) -> StoppingOutcome {
        use StoppingOutcome::*;
        match (self, other) {
            (Triggered(a), Triggered(b)) => Triggered(a.min(b)),
            (Triggered(a), NotWithinHorizon(_)) => Triggered(a),
            (NotWithinHorizon(_), Triggered(b)) => Triggered(b),
            (NotWithinHorizon(a), NotWithinHorizon(b)) => NotWithinHorizon(a.max(b)),
        }
    }
}

/// Scan a recorded series for the first envelope crossing.
pub fn stopping_tau(
    record: &EnergyRecord,
    params: &StoppingParams,
    init_norm_sq: f64,
) -> Result<StoppingOutcome> {
    params.validate()?;
    if record.is_empty() {
        return Err(CglError::Domain("stopping scan over an empty record".into()));
    }
    for (&t, &e) in record.times.iter().zip(&record.weighted) {
        if e >= params.threshold(t, init_norm_sq) {
            return Ok(StoppingOutcome::Triggered(t));
        }
    }
    Ok(StoppingOutcome::NotWithinHorizon(*record.times.last().expect("nonempty")))
}

/// Streaming variant of [`stopping_tau`]: feed it `(t, weighted energy)`
/// as the trajectory advances and it reports the first crossing once.
#[derive(Clone, Copy, Debug)]
pub struct OnlineStopping {
    params: StoppingParams,
    init_norm_sq: f64,
    fired_at: Option<f64>,
    last_t: f64,
}

impl OnlineStopping {
    pub fn new(params: StoppingParams, init_norm_sq: f64) -> Result<OnlineStopping> {
        params.validate()?;
        Ok(OnlineStopping { params, init_norm_sq, fired_at: None, last_t: 0.0 })
    }

    /// Returns the crossing time the first time the envelope is hit.
    pub fn observe(&mut self, t: f64, weighted_energy: f64) -> Option<f64> {
        self.last_t = t;
        if self.fired_at.is_none() && weighted_energy >= self.params.threshold(t, self.init_norm_sq)
        {
            self.fired_at = Some(t);
            return self.fired_at;
        }
        None
    }

    pub fn outcome(&self) -> StoppingOutcome {
        match self.fired_at {
            Some(t) => StoppingOutcome::Triggered(t),
            None => StoppingOutcome::NotWithinHorizon(self.last_t),
        }
    }
}

/// Running sums behind the Girsanov density of the controlled pair:
///
/// ```text
///   log R = sum_j (1/b_j) int <A, e_j> dbeta_j
///         - (1/2) sum_j (1/b_j^2) int <A, e_j>^2 dt
/// ```
///
/// accumulated with left-rectangle quadrature (the control is frozen at
/// the step's start, exactly the adaptedness the exponential-martingale
/// property needs). Also tracks `int |A|^2 dt`, the quantity Novikov-type
/// conditions bound.
#[derive(Clone, Debug, Default, Serialize)]
pub struct NovikovLedger {
    inv_b: Vec<f64>,
    ito_sum: f64,
    quad_sum: f64,
    int_a_sq: f64,
    time: f64,
}

impl NovikovLedger {
    pub fn new(spec: &NoiseSpec, n_ctrl: usize) -> Result<NovikovLedger> {
        spec.require_nonzero_up_to(n_ctrl)?;
        let inv_b: Vec<f64> = spec.coeffs().iter().take(n_ctrl).map(|&b| 1.0 / b).collect();
        Ok(NovikovLedger { inv_b, ..NovikovLedger::default() })
    }

    /// Fold in one step: the control frozen at the step's start against
    /// the Brownian increments of the same step.
    pub fn record(&mut self, ctrl: &ControlStep, incr: &WienerIncrement) -> Result<()> {
        if ctrl.coeffs().len() != self.inv_b.len() {
            return Err(CglError::Domain(format!(
                "ledger tracks {} controlled directions, control step has {}",
                self.inv_b.len(),
                ctrl.coeffs().len()
            )));
        }
        if incr.beta().len() < self.inv_b.len() {
            return Err(CglError::Domain(format!(
                "increment carries {} modes, ledger needs {}",
                incr.beta().len(),
                self.inv_b.len()
            )));
        }
        let dt = incr.dt();
        for ((g, ib), db) in ctrl.coeffs().iter().zip(&self.inv_b).zip(incr.beta()) {
            self.ito_sum += g * ib * db;
            self.quad_sum += (g * ib) * (g * ib) * dt;
            self.int_a_sq += g * g * dt;
        }
        self.time += dt;
        Ok(())
    }

    /// Absorb a ledger continuing this one (additivity over time windows).
    pub fn absorb(&mut self, later: &NovikovLedger) -> Result<()> {
        if later.inv_b != self.inv_b {
            return Err(CglError::Domain(
                "cannot merge ledgers with different noise scalings".into(),
            ));
        }
        self.ito_sum += later.ito_sum;
        self.quad_sum += later.quad_sum;
        self.int_a_sq += later.int_a_sq;
        self.time += later.time;
        Ok(())
    }

    /// `log R` of the shifted measure against the reference measure.
    pub fn log_density(&self) -> f64 {
        self.ito_sum - 0.5 * self.quad_sum
    }

    /// `int_0^T |A(t)|^2 dt`.
    pub fn int_a_sq(&self) -> f64 {
        self.int_a_sq
    }

    /// `sum_j (1/b_j^2) int <A, e_j>^2 dt` — the exponent Novikov-type
    /// criteria need exponential moments of (halved).
    pub fn quadratic_variation(&self) -> f64 {
        self.quad_sum
    }

    pub fn ito_integral(&self) -> f64 {
        self.ito_sum
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

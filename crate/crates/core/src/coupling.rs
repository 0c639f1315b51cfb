//! Coupled-pair experiments: two trajectories under the same Wiener
//! increments, one of them steered toward the other by the rank-`N`
//! feedback, plus the stopped three-process variant that feeds the
//! measure-change ledger, and ball-hitting runs for independent pairs.

use rayon::prelude::*;

use crate::basis::TrigBasis;
use crate::dynamics::{CglStepper, TrajectoryState};
use crate::error::{CglError, Result};
use crate::field::Field;
use crate::functionals::{NovikovLedger, OnlineStopping, StoppingOutcome, StoppingParams};
use crate::noise::{sample_increment, NoiseSpec};
use crate::stats::{median, wilson_interval, LinearFit};
use serde::Serialize;

#[derive(Clone, Copy, Debug)]
pub struct PairConfig {
    /// Number of controlled directions (0 = uncontrolled pair).
    pub n_ctrl: usize,
    /// Simulation horizon.
    pub horizon: f64,
    /// Record a [`PairSample`] every this many steps (0 = never).
    pub record_every: usize,
}

/// Decimated snapshot of the coupled difference.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairSample {
    pub t: f64,
    pub w_norm_sq: f64,
    /// squared norm of the projection onto the controlled directions
    pub low_norm_sq: f64,
}

/// Per-pair summary of one squeeze run.
#[derive(Clone, Debug, Serialize)]
pub struct SqueezePath {
    pub w0_norm_sq: f64,
    pub wt_norm_sq: f64,
    /// least-squares slope of `ln |w(t)|^2` over the whole run
    pub rate: f64,
    /// fitted intercept of `ln(|w(t)|^2 / |w(0)|^2)`: the log of the
    /// contraction prefactor
    pub log_prefactor: f64,
    /// `sup_t exp(a t / 2) |w(t)|^2 / |w(0)|^2`
    pub sup_scaled: f64,
    /// `int_0^T |w|^2 dt` (trapezoid)
    pub int_w_sq: f64,
    pub samples: Vec<PairSample>,
}

fn w_norm_sq(two_x: f64, u: &TrajectoryState, v: &TrajectoryState) -> f64 {
    two_x * u.coeffs().iter().zip(v.coeffs()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
}

fn low_mode_norm_sq(
    basis: &TrigBasis,
    n_ctrl: usize,
    u: &TrajectoryState,
    v: &TrajectoryState,
) -> f64 {
    let two_x = 2.0 * basis.grid().half_width();
    (0..n_ctrl)
        .map(|j| {
            let c: f64 = basis
                .mode(j)
                .spectral()
                .iter()
                .map(|&(idx, w)| ((u.coeffs()[idx] - v.coeffs()[idx]) * w.conj()).re)
                .sum::<f64>()
                * two_x;
            c * c
        })
        .sum()
}

fn steps_for(horizon: f64, dt: f64) -> Result<u64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CglError::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    Ok((horizon / dt).round().max(1.0) as u64)
}

/// Evolve one coupled pair under shared increments and summarize the
/// contraction of the difference.
pub fn run_squeeze_pair(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    cfg: &PairConfig,
    u0: &Field,
    v0: &Field,
    seed: u64,
    trajectory: u64,
) -> Result<SqueezePath> {
    let dt = stepper.dt();
    let n_steps = steps_for(cfg.horizon, dt)?;
    let mut u = stepper.init_state(u0, false)?;
    let mut v = stepper.init_state(v0, false)?;
    let mut sc = stepper.scratch();
    let mut stream = spec.stream(seed, trajectory);
    let two_x = 2.0 * stepper.grid().half_width();
    let a = stepper.params().damping;

    let w0 = w_norm_sq(two_x, &u, &v);
    let mut samples = Vec::new();
    let record =
        |t: f64, u: &TrajectoryState, v: &TrajectoryState, samples: &mut Vec<PairSample>| {
            samples.push(PairSample {
                t,
                w_norm_sq: w_norm_sq(two_x, u, v),
                low_norm_sq: low_mode_norm_sq(basis, cfg.n_ctrl, u, v),
            });
        };
    if cfg.record_every > 0 {
        record(0.0, &u, &v, &mut samples);
    }

    // least-squares fit of ln |w(t)|^2 against t; coincident pairs
    // contribute nothing and report a zero rate
    let mut fit = LinearFit::new();
    if w0 > 0.0 {
        fit.push(0.0, w0.ln());
    }

    let mut sup_scaled: f64 = if w0 > 0.0 { 1.0 } else { 0.0 };
    let mut int_w_sq = 0.0;
    let mut prev_w = w0;

    for step in 0..n_steps {
        let incr = sample_increment(spec, &mut stream, step, dt)?;
        stepper.step_pair(&mut u, &mut v, &mut sc, Some((basis, &incr)), basis, cfg.n_ctrl)?;
        let wsq = w_norm_sq(two_x, &u, &v);
        let t = u.t();
        if wsq > 0.0 {
            fit.push(t, wsq.ln());
        }
        if w0 > 0.0 {
            sup_scaled = sup_scaled.max((0.5 * a * t).exp() * wsq / w0);
        }
        int_w_sq += 0.5 * dt * (prev_w + wsq);
        prev_w = wsq;
        if cfg.record_every > 0 && ((step + 1) as usize).is_multiple_of(cfg.record_every) {
            record(t, &u, &v, &mut samples);
        }
    }
    let rate = fit.slope().unwrap_or(0.0);
    let log_prefactor = if w0 > 0.0 { fit.intercept().unwrap_or(w0.ln()) - w0.ln() } else { 0.0 };
    Ok(SqueezePath {
        w0_norm_sq: w0,
        wt_norm_sq: prev_w,
        rate,
        log_prefactor,
        sup_scaled,
        int_w_sq,
        samples,
    })
}

/// Shared-seed ensemble of squeeze runs; pair `k` draws trajectory key `k`.
pub fn run_squeeze_ensemble(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    cfg: &PairConfig,
    u0: &Field,
    v0: &Field,
    seed: u64,
    n_pairs: u64,
) -> Result<Vec<SqueezePath>> {
    (0..n_pairs)
        .into_par_iter()
        .map(|k| run_squeeze_pair(stepper, basis, spec, cfg, u0, v0, seed, k))
        .collect()
}

/// Ensemble fit of the pathwise contraction `|w(t)|^2 <= c e^{-c' t} |w(0)|^2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SqueezeRateFit {
    /// median fitted prefactor `c`
    pub prefactor: f64,
    /// median fitted decay rate `c'` (positive means contraction)
    pub rate: f64,
    /// fraction of paths whose fitted slope is negative
    pub success_fraction: f64,
}

/// Median prefactor, median rate, and the negative-slope fraction over a
/// completed squeeze ensemble. The per-path fit is least squares on
/// `ln |w(t)|^2` against `t`: the returned rate is `c' = -slope`.
pub fn fit_squeeze_rate(paths: &[SqueezePath]) -> Result<SqueezeRateFit> {
    if paths.is_empty() {
        return Err(CglError::Domain("squeeze-rate fit over an empty ensemble".into()));
    }
    let prefs: Vec<f64> = paths.iter().map(|p| p.log_prefactor).collect();
    let rates: Vec<f64> = paths.iter().map(|p| -p.rate).collect();
    let negative = paths.iter().filter(|p| p.rate < 0.0).count();
    Ok(SqueezeRateFit {
        prefactor: median(&prefs).expect("nonempty").exp(),
        rate: median(&rates).expect("nonempty"),
        success_fraction: negative as f64 / paths.len() as f64,
    })
}

/// Ensemble summary of squeeze runs.
#[derive(Clone, Debug, Serialize)]
pub struct SqueezeSummary {
    pub n_pairs: usize,
    pub median_rate: f64,
    /// fraction of pairs with `|w(T)|^2 / |w(0)|^2 <= ratio_cut`
    pub frac_below_cut: f64,
    pub ratio_cut: f64,
    pub max_sup_scaled: f64,
}

impl SqueezeSummary {
    pub fn from_paths(paths: &[SqueezePath], ratio_cut: f64) -> Result<SqueezeSummary> {
        if paths.is_empty() {
            return Err(CglError::Domain("squeeze summary over an empty ensemble".into()));
        }
        let rates: Vec<f64> = paths.iter().map(|p| p.rate).collect();
        let median_rate = median(&rates).expect("nonempty ensemble");
        let below = paths
            .iter()
            .filter(|p| p.w0_norm_sq > 0.0 && p.wt_norm_sq / p.w0_norm_sq <= ratio_cut)
            .count();
        let max_sup_scaled = paths.iter().map(|p| p.sup_scaled).fold(f64::NEG_INFINITY, f64::max);
        Ok(SqueezeSummary {
            n_pairs: paths.len(),
            median_rate,
            frac_below_cut: below as f64 / paths.len() as f64,
            ratio_cut,
            max_sup_scaled,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NovikovConfig {
    pub n_ctrl: usize,
    pub horizon: f64,
    pub stopping: StoppingParams,
}

/// One stopped three-process run: the free trajectory from `u0`, the free
/// trajectory from `v0`, and the controlled trajectory from `v0` chasing
/// the first — all under the same increments. The run stops at the first
/// energy-envelope crossing among the three (or at the horizon) and the
/// ledger accumulates exactly up to that time.
#[derive(Clone, Debug, Serialize)]
pub struct NovikovPath {
    pub tau: StoppingOutcome,
    pub log_density: f64,
    pub int_a_sq: f64,
    pub quad_variation: f64,
    pub w0_norm_sq: f64,
    pub w_end_norm_sq: f64,
    /// least-squares slope of `ln |w(t)|^2` up to the stopping time
    pub rate: f64,
    pub sup_scaled: f64,
    pub int_w_sq: f64,
}

pub fn run_novikov_pair(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    cfg: &NovikovConfig,
    u0: &Field,
    v0: &Field,
    seed: u64,
    trajectory: u64,
) -> Result<NovikovPath> {
    let dt = stepper.dt();
    let n_steps = steps_for(cfg.horizon, dt)?;
    let mut u = stepper.init_state(u0, true)?;
    let mut uprime = stepper.init_state(v0, true)?;
    let mut v = stepper.init_state(v0, true)?;
    let mut sc = stepper.scratch();
    let mut stream = spec.stream(seed, trajectory);
    let two_x = 2.0 * stepper.grid().half_width();
    let a = stepper.params().damping;
    let mut ledger = NovikovLedger::new(spec, cfg.n_ctrl)?;

    let mut stops = [
        OnlineStopping::new(cfg.stopping, u.norm_sq())?,
        OnlineStopping::new(cfg.stopping, uprime.norm_sq())?,
        OnlineStopping::new(cfg.stopping, v.norm_sq())?,
    ];
    let observe = |u: &TrajectoryState,
                   uprime: &TrajectoryState,
                   v: &TrajectoryState,
                   stops: &mut [OnlineStopping; 3]|
     -> Option<f64> {
        let mut fired = None;
        for (st, stop) in [u, uprime, v].into_iter().zip(stops.iter_mut()) {
            let levels = stepper.energy_levels(st).expect("states track energy");
            if let Some(t) = stop.observe(st.t(), levels.weighted) {
                fired = Some(match fired {
                    Some(prev) => t.min(prev),
                    None => t,
                });
            }
        }
        fired
    };

    let w0 = w_norm_sq(two_x, &u, &v);
    let mut sup_scaled: f64 = if w0 > 0.0 { 1.0 } else { 0.0 };
    let mut int_w_sq = 0.0;
    let mut prev_w = w0;
    let mut fit = LinearFit::new();
    if w0 > 0.0 {
        fit.push(0.0, w0.ln());
    }
    let mut tau = observe(&u, &uprime, &v, &mut stops).map(StoppingOutcome::Triggered);

    if tau.is_none() {
        for step in 0..n_steps {
            let incr = sample_increment(spec, &mut stream, step, dt)?;
            let ctrl = stepper.step_pair(
                &mut u,
                &mut v,
                &mut sc,
                Some((basis, &incr)),
                basis,
                cfg.n_ctrl,
            )?;
            stepper.step(&mut uprime, &mut sc, Some((basis, &incr)))?;
            ledger.record(&ctrl, &incr)?;
            let wsq = w_norm_sq(two_x, &u, &v);
            let t = u.t();
            if w0 > 0.0 {
                sup_scaled = sup_scaled.max((0.5 * a * t).exp() * wsq / w0);
            }
            if wsq > 0.0 {
                fit.push(t, wsq.ln());
            }
            int_w_sq += 0.5 * dt * (prev_w + wsq);
            prev_w = wsq;
            if let Some(t_fire) = observe(&u, &uprime, &v, &mut stops) {
                tau = Some(StoppingOutcome::Triggered(t_fire));
                break;
            }
        }
    }
    let tau = tau.unwrap_or(StoppingOutcome::NotWithinHorizon(cfg.horizon));
    Ok(NovikovPath {
        tau,
        log_density: ledger.log_density(),
        int_a_sq: ledger.int_a_sq(),
        quad_variation: ledger.quadratic_variation(),
        w0_norm_sq: w0,
        w_end_norm_sq: prev_w,
        rate: fit.slope().unwrap_or(0.0),
        sup_scaled,
        int_w_sq,
    })
}

pub fn run_novikov_ensemble(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    cfg: &NovikovConfig,
    u0: &Field,
    v0: &Field,
    seed: u64,
    n_pairs: u64,
) -> Result<Vec<NovikovPath>> {
    (0..n_pairs)
        .into_par_iter()
        .map(|k| run_novikov_pair(stepper, basis, spec, cfg, u0, v0, seed, k))
        .collect()
}

/// Evolve two trajectories under independent noise until both lie in the
/// ball of radius `d` simultaneously.
pub fn run_to_joint_ball(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    u0: &Field,
    v0: &Field,
    radius: f64,
    horizon: f64,
    seed: u64,
    trajectories: (u64, u64),
) -> Result<StoppingOutcome> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(CglError::Parameter(format!("ball radius must be positive, got {radius}")));
    }
    let dt = stepper.dt();
    let n_steps = steps_for(horizon, dt)?;
    let mut u = stepper.init_state(u0, false)?;
    let mut v = stepper.init_state(v0, false)?;
    let mut sc = stepper.scratch();
    let mut stream_u = spec.stream(seed, trajectories.0);
    let mut stream_v = spec.stream(seed, trajectories.1);
    let r_sq = radius * radius;
    if u.norm_sq() <= r_sq && v.norm_sq() <= r_sq {
        return Ok(StoppingOutcome::Triggered(0.0));
    }
    for step in 0..n_steps {
        let wu = sample_increment(spec, &mut stream_u, step, dt)?;
        let wv = sample_increment(spec, &mut stream_v, step, dt)?;
        stepper.step(&mut u, &mut sc, Some((basis, &wu)))?;
        stepper.step(&mut v, &mut sc, Some((basis, &wv)))?;
        if u.norm_sq() <= r_sq && v.norm_sq() <= r_sq {
            return Ok(StoppingOutcome::Triggered(u.t()));
        }
    }
    Ok(StoppingOutcome::NotWithinHorizon(horizon))
}

/// Estimate of a hitting probability with a Wilson 95% interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HittingEstimate {
    pub hits: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_hit_time: f64,
}

/// Probability that an independent pair reaches the joint ball of radius
/// `d` within the horizon; pair `k` uses trajectory keys `(2k, 2k + 1)`.
pub fn hitting_probability(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    u0: &Field,
    v0: &Field,
    radius: f64,
    horizon: f64,
    seed: u64,
    n_pairs: u64,
) -> Result<HittingEstimate> {
    if n_pairs == 0 {
        return Err(CglError::Domain("hitting probability needs at least one trial".into()));
    }
    let outcomes: Vec<StoppingOutcome> = (0..n_pairs)
        .into_par_iter()
        .map(|k| {
            run_to_joint_ball(
                stepper,
                basis,
                spec,
                u0,
                v0,
                radius,
                horizon,
                seed,
                (2 * k, 2 * k + 1),
            )
        })
        .collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|o| o.is_triggered()).count() as u64;
    let hit_times: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            StoppingOutcome::Triggered(t) => Some(*t),
            _ => None,
        })
        .collect();
    let mean_hit_time = if hit_times.is_empty() {
        f64::NAN
    } else {
        hit_times.iter().sum::<f64>() / hit_times.len() as f64
    };
    let (p_hat, ci_low, ci_high) = wilson_interval(hits, n_pairs);
    Ok(HittingEstimate { hits, trials: n_pairs, p_hat, ci_low, ci_high, mean_hit_time })
}

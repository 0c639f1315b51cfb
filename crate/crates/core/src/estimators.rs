//! Ensemble estimators: Monte Carlo checks of the closed-form moment
//! bound, tail inequalities for the weighted energy and its stopping time,
//! a dual-Lipschitz mixing-rate proxy, and the exact linear-case oracle.
//!
//! Every report embeds the seed, ensemble size and standard errors, and
//! all reductions run in a fixed order so the numbers are reproducible
//! bit-for-bit for any worker count.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::TrigBasis;
use crate::dynamics::{CglStepper, PhysParams};
use crate::error::{CglError, Result};
use crate::field::Field;
use crate::functionals::{OnlineStopping, StoppingOutcome, StoppingParams};
use crate::grid::{Grid, C64};
use crate::noise::{sample_increment, NoiseSpec};
use crate::stats::{median, LinearFit, SampleStats};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Map probe times onto step indices, requiring alignment with the grid.
fn probe_steps(times: &[f64], dt: f64) -> Result<Vec<u64>> {
    if times.is_empty() {
        return Err(CglError::Domain("need at least one probe time".into()));
    }
    let mut steps = Vec::with_capacity(times.len());
    let mut prev = -1i64;
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CglError::Domain(format!("probe time must be nonnegative, got {t}")));
        }
        let s = (t / dt).round();
        if (s * dt - t).abs() > 1e-9 {
            return Err(CglError::Domain(format!(
                "probe time {t} does not align with the step size {dt}"
            )));
        }
        let s = s as i64;
        if s <= prev {
            return Err(CglError::Domain("probe times must be strictly increasing".into()));
        }
        prev = s;
        steps.push(s as u64);
    }
    Ok(steps)
}

/// Mean-square norm check against `exp(-a t) |u0|^2 + C'`.
#[derive(Clone, Debug, Serialize)]
pub struct MomentBoundReport {
    pub seed: u64,
    pub ensemble_size: u64,
    pub c_prime: f64,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub bounds: Vec<f64>,
    pub pass: bool,
}

pub fn check_moment_bound(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    u0: &Field,
    times: &[f64],
    ensemble_size: u64,
    seed: u64,
) -> Result<MomentBoundReport> {
    let dt = stepper.dt();
    let steps = probe_steps(times, dt)?;
    let last = *steps.last().expect("nonempty");
    let rows: Vec<Vec<f64>> = (0..ensemble_size)
        .into_par_iter()
        .map(|traj| -> Result<Vec<f64>> {
            let mut st = stepper.init_state(u0, false)?;
            let mut sc = stepper.scratch();
            let mut stream = spec.stream(seed, traj);
            let mut out = Vec::with_capacity(steps.len());
            let mut next = 0usize;
            if steps[0] == 0 {
                out.push(st.norm_sq());
                next = 1;
            }
            for step in 0..last {
                let incr = sample_increment(spec, &mut stream, step, dt)?;
                stepper.step(&mut st, &mut sc, Some((basis, &incr)))?;
                if next < steps.len() && st.step() == steps[next] {
                    out.push(st.norm_sq());
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let c_prime = stepper.params().moment_bound_constant(spec.b1());
    let a = stepper.params().damping;
    let u0_sq = u0.l2_norm_sq();
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut bounds = Vec::new();
    let mut pass = true;
    for (i, &t) in times.iter().enumerate() {
        let column: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        let stats = SampleStats::from_slice(&column).expect("nonempty ensemble");
        let bound = (-a * t).exp() * u0_sq + c_prime;
        pass &= stats.mean <= bound + 3.0 * stats.std_error;
        means.push(stats.mean);
        ses.push(stats.std_error);
        bounds.push(bound);
    }
    Ok(MomentBoundReport {
        seed,
        ensemble_size,
        c_prime,
        times: times.to_vec(),
        means,
        std_errors: ses,
        bounds,
        pass,
    })
}

/// Median growth rate of the weighted energy over a pilot ensemble —
/// the calibration source for the envelope rate `K`.
pub fn pilot_energy_slope(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    u0: &Field,
    horizon: f64,
    n_paths: u64,
    seed: u64,
) -> Result<f64> {
    let dt = stepper.dt();
    let n_steps = ((horizon / dt).round() as u64).max(1);
    let slopes: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|traj| -> Result<f64> {
            let mut st = stepper.init_state(u0, true)?;
            let mut sc = stepper.scratch();
            let mut stream = spec.stream(seed, traj);
            let e0 = stepper.energy_levels(&st).expect("tracking").weighted;
            for step in 0..n_steps {
                let incr = sample_increment(spec, &mut stream, step, dt)?;
                stepper.step(&mut st, &mut sc, Some((basis, &incr)))?;
            }
            let e1 = stepper.energy_levels(&st).expect("tracking").weighted;
            Ok((e1 - e0) / st.t())
        })
        .collect::<Result<_>>()?;
    median(&slopes).ok_or_else(|| CglError::Domain("pilot ensemble was empty".into()))
}

/// Exceedance frequencies of the weighted-energy supremum event.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyTailReport {
    pub seed: u64,
    pub ensemble_size: u64,
    pub rate: f64,
    pub offsets: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// fitted decay rate of `ln P` against the offset, when fittable
    pub gamma_hat: Option<f64>,
    pub pass: bool,
    /// no path exceeded even the smallest offset: the check is vacuous
    pub vacuous: bool,
}

/// Per-path supremum of the drift-compensated weighted energy,
/// `sup_t (E_psi(t) - rate * t)` over `[0, horizon]`.
#[allow(clippy::too_many_arguments)]
pub fn weighted_sup_excess(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    u0: &Field,
    rate: f64,
    horizon: f64,
    ensemble_size: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let dt = stepper.dt();
    let n_steps = ((horizon / dt).round() as u64).max(1);
    (0..ensemble_size)
        .into_par_iter()
        .map(|traj| -> Result<f64> {
            let mut st = stepper.init_state(u0, true)?;
            let mut sc = stepper.scratch();
            let mut stream = spec.stream(seed, traj);
            let mut sup = stepper.energy_levels(&st).expect("tracking").weighted;
            for step in 0..n_steps {
                let incr = sample_increment(spec, &mut stream, step, dt)?;
                stepper.step(&mut st, &mut sc, Some((basis, &incr)))?;
                let lv = stepper.energy_levels(&st).expect("tracking").weighted;
                sup = sup.max(lv - rate * st.t());
            }
            Ok(sup)
        })
        .collect()
}

/// Empirical tail of `sup_t (E_psi(t) - K t) - E_psi(0) - c3 |u0|^2`
/// against each offset in `rho_list`.
#[allow(clippy::too_many_arguments)]
pub fn check_energy_tails(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    u0: &Field,
    rate: f64,
    c3_init_weight: f64,
    rho_list: &[f64],
    horizon: f64,
    ensemble_size: u64,
    seed: u64,
) -> Result<EnergyTailReport> {
    if rho_list.len() < 3 || rho_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CglError::Domain(
            "need at least three strictly increasing tail offsets".into(),
        ));
    }
    let sups = weighted_sup_excess(stepper, basis, spec, u0, rate, horizon, ensemble_size, seed)?;
    let u0_sq = u0.l2_norm_sq();
    let base = u0_sq + c3_init_weight * u0_sq;
    let n = ensemble_size as f64;
    let frequencies: Vec<f64> = rho_list
        .iter()
        .map(|&rho| sups.iter().filter(|&&s| s >= base + rho).count() as f64 / n)
        .collect();
    let monotone = frequencies.windows(2).all(|w| w[1] <= w[0]);
    let vacuous = frequencies[0] == 0.0;
    let mut fit = LinearFit::new();
    for (&rho, &f) in rho_list.iter().zip(&frequencies) {
        if f > 0.0 {
            fit.push(rho, f.ln());
        }
    }
    let gamma_hat = if fit.len() >= 2 { fit.slope().map(|s| -s) } else { None };
    let pass = monotone && (vacuous || gamma_hat.is_some_and(|g| g > 0.0));
    Ok(EnergyTailReport {
        seed,
        ensemble_size,
        rate,
        offsets: rho_list.to_vec(),
        frequencies,
        gamma_hat,
        pass,
        vacuous,
    })
}

/// Tail frequencies of the stopping time: `P{l <= tau < horizon}` per `l`.
#[derive(Clone, Debug, Serialize)]
pub struct StoppingTailReport {
    pub seed: u64,
    pub ensemble_size: u64,
    pub l_values: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub n_triggered: u64,
    pub slope: Option<f64>,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn check_stopping_tails(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    u0: &Field,
    stopping: &StoppingParams,
    l_list: &[f64],
    horizon: f64,
    ensemble_size: u64,
    seed: u64,
) -> Result<StoppingTailReport> {
    if l_list.is_empty() || l_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CglError::Domain("need strictly increasing tail times".into()));
    }
    if *l_list.last().expect("nonempty") >= horizon {
        return Err(CglError::Domain(format!(
            "largest tail time {} must lie well inside the horizon {horizon}",
            l_list.last().expect("nonempty")
        )));
    }
    let dt = stepper.dt();
    let n_steps = ((horizon / dt).round() as u64).max(1);
    let taus: Vec<StoppingOutcome> = (0..ensemble_size)
        .into_par_iter()
        .map(|traj| -> Result<StoppingOutcome> {
            let mut st = stepper.init_state(u0, true)?;
            let mut sc = stepper.scratch();
            let mut stream = spec.stream(seed, traj);
            let mut stop = OnlineStopping::new(*stopping, st.norm_sq())?;
            let lv = stepper.energy_levels(&st).expect("tracking").weighted;
            if stop.observe(0.0, lv).is_some() {
                return Ok(stop.outcome());
            }
            for step in 0..n_steps {
                let incr = sample_increment(spec, &mut stream, step, dt)?;
                stepper.step(&mut st, &mut sc, Some((basis, &incr)))?;
                let lv = stepper.energy_levels(&st).expect("tracking").weighted;
                if stop.observe(st.t(), lv).is_some() {
                    break;
                }
            }
            Ok(stop.outcome())
        })
        .collect::<Result<_>>()?;
    let n = ensemble_size as f64;
    let trig_times: Vec<f64> = taus
        .iter()
        .filter_map(|o| match o {
            StoppingOutcome::Triggered(t) => Some(*t),
            StoppingOutcome::NotWithinHorizon(_) => None,
        })
        .collect();
    let frequencies: Vec<f64> =
        l_list.iter().map(|&l| trig_times.iter().filter(|&&t| t >= l).count() as f64 / n).collect();
    let monotone = frequencies.windows(2).all(|w| w[1] <= w[0]);
    let mut fit = LinearFit::new();
    for (&l, &f) in l_list.iter().zip(&frequencies) {
        if f > 0.0 {
            fit.push(l, f.ln());
        }
    }
    let any = frequencies.iter().any(|&f| f > 0.0);
    let slope = if fit.len() >= 2 { fit.slope() } else { None };
    let pass = monotone && (!any || slope.is_none_or(|s| s <= 0.0));
    Ok(StoppingTailReport {
        seed,
        ensemble_size,
        l_values: l_list.to_vec(),
        frequencies,
        n_triggered: trig_times.len() as u64,
        slope,
        pass,
    })
}

/// Fixed library of bounded test functionals with Lipschitz constant <= 1:
/// `u -> tanh(<u, g>)` for unit directions `g` and
/// `u -> exp(-|u - c|^2 / 2)` for moderate centers `c`.
pub struct TestFamily {
    directions: Vec<Field>,
    centers: Vec<Field>,
}

impl TestFamily {
    /// Deterministic band-limited family; `size` functionals of each kind.
    pub fn standard(
        grid: &Arc<Grid>,
        basis: &TrigBasis,
        band: usize,
        size: usize,
        seed: u64,
    ) -> Result<TestFamily> {
        if band == 0 || band > basis.len() {
            return Err(CglError::Domain(format!(
                "test-family band {band} must lie in 1..={}",
                basis.len()
            )));
        }
        if size == 0 {
            return Err(CglError::Domain("test family cannot be empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |norm: f64| -> Field {
            let mut f = Field::zeros(grid);
            let amps: Vec<f64> = (0..band).map(|_| rng.gen::<f64>() - 0.5).collect();
            for (j, &amp) in amps.iter().enumerate() {
                f = f
                    .add(&basis.mode(j).as_field(grid).scaled(C64::new(amp, 0.0)))
                    .expect("same grid");
            }
            let scale = norm / f.l2_norm().max(1e-300);
            f.scaled(C64::new(scale, 0.0))
        };
        let directions: Vec<Field> = (0..size).map(|_| mk(1.0)).collect();
        let centers: Vec<Field> = (0..size).map(|_| mk(0.8)).collect();
        Ok(TestFamily { directions, centers })
    }

    pub fn len(&self) -> usize {
        self.directions.len() + self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluate every functional at `u`; `out.len() == self.len()`.
    pub fn eval(&self, u: &Field, out: &mut [f64]) -> Result<()> {
        if out.len() != self.len() {
            return Err(CglError::Domain(format!(
                "output buffer holds {}, family has {}",
                out.len(),
                self.len()
            )));
        }
        let mut i = 0;
        for g in &self.directions {
            out[i] = u.inner(g)?.tanh();
            i += 1;
        }
        for c in &self.centers {
            let d2 = u.sub(c)?.l2_norm_sq();
            out[i] = (-0.5 * d2).exp();
            i += 1;
        }
        Ok(())
    }

    /// Largest sampled difference quotient `|F(x) - F(y)| / |x - y|` over
    /// all functionals and all pairs from `samples` — the empirical
    /// Lipschitz-constant bound.
    pub fn max_difference_quotient(&self, samples: &[Field]) -> Result<f64> {
        let mut vals = vec![vec![0.0; self.len()]; samples.len()];
        for (v, s) in vals.iter_mut().zip(samples) {
            self.eval(s, v)?;
        }
        let mut worst: f64 = 0.0;
        for i in 0..samples.len() {
            for j in (i + 1)..samples.len() {
                let dist = samples[i].sub(&samples[j])?.l2_norm();
                if dist <= 1e-12 {
                    continue;
                }
                for k in 0..self.len() {
                    worst = worst.max((vals[i][k] - vals[j][k]).abs() / dist);
                }
            }
        }
        Ok(worst)
    }
}

/// One probe time of the mixing estimate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MixingPoint {
    pub t: f64,
    /// max over the family of |mean_a - mean_b|
    pub distance: f64,
    /// 2x the largest paired standard error across the family
    pub noise_floor: f64,
    pub floor_limited: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub seed: u64,
    pub ensemble_size: u64,
    pub family_size: usize,
    pub points: Vec<MixingPoint>,
    /// fitted decay rate of `ln distance` on the usable window
    pub kappa_hat: Option<f64>,
    pub r_squared: Option<f64>,
    /// number of probe times that went into the fit
    pub fit_points: usize,
}

/// Decay of the proxy dual-Lipschitz distance between the laws started
/// from `u0_a` and `u0_b`. The two ensembles share per-trajectory noise
/// keys (common random numbers): the gap estimator stays unbiased for
/// the difference of expectations — coupling changes correlations, not
/// marginals — while its variance contracts along with the coupled
/// flow, so late probes stay resolvable where independent ensembles
/// would sink beneath their Monte Carlo floor.
#[allow(clippy::too_many_arguments)]
pub fn estimate_mixing_rate(
    stepper: &CglStepper,
    basis: &TrigBasis,
    spec: &NoiseSpec,
    family: &TestFamily,
    u0_a: &Field,
    u0_b: &Field,
    times: &[f64],
    ensemble_size: u64,
    seed: u64,
) -> Result<MixingReport> {
    let dt = stepper.dt();
    let steps = probe_steps(times, dt)?;
    let last = *steps.last().expect("nonempty");
    let n_f = family.len();
    let run_side = |u0: &Field| -> Result<Vec<Vec<Vec<f64>>>> {
        (0..ensemble_size)
            .into_par_iter()
            .map(|traj| -> Result<Vec<Vec<f64>>> {
                let mut st = stepper.init_state(u0, false)?;
                let mut sc = stepper.scratch();
                let mut stream = spec.stream(seed, traj);
                let mut rows = Vec::with_capacity(steps.len());
                let mut next = 0usize;
                let mut buf = vec![0.0; n_f];
                if steps[0] == 0 {
                    family.eval(&st.field(), &mut buf)?;
                    rows.push(buf.clone());
                    next = 1;
                }
                for step in 0..last {
                    let incr = sample_increment(spec, &mut stream, step, dt)?;
                    stepper.step(&mut st, &mut sc, Some((basis, &incr)))?;
                    if next < steps.len() && st.step() == steps[next] {
                        family.eval(&st.field(), &mut buf)?;
                        rows.push(buf.clone());
                        next += 1;
                    }
                }
                Ok(rows)
            })
            .collect()
    };
    let side_a = run_side(u0_a)?;
    let side_b = run_side(u0_b)?;

    let mut points = Vec::with_capacity(times.len());
    let mut fit = LinearFit::new();
    for (ti, &t) in times.iter().enumerate() {
        let mut distance: f64 = 0.0;
        let mut floor: f64 = 0.0;
        for fi in 0..n_f {
            let diffs: Vec<f64> =
                side_a.iter().zip(&side_b).map(|(ra, rb)| ra[ti][fi] - rb[ti][fi]).collect();
            let sd = SampleStats::from_slice(&diffs).expect("nonempty");
            distance = distance.max(sd.mean.abs());
            floor = floor.max(2.0 * sd.std_error);
        }
        let floor_limited = distance <= floor;
        if !floor_limited && distance > 0.0 {
            fit.push(t, distance.ln());
        }
        points.push(MixingPoint { t, distance, noise_floor: floor, floor_limited });
    }
    let (kappa_hat, r_squared) =
        if fit.len() >= 3 { (fit.slope().map(|s| -s), fit.r_squared()) } else { (None, None) };
    Ok(MixingReport {
        seed,
        ensemble_size,
        family_size: n_f,
        points,
        kappa_hat,
        r_squared,
        fit_points: fit.len(),
    })
}

/// Exact transition statistics of one forced mode when the nonlinearity is
/// off: complex mean factor `exp(-(a + nu k^2) t)` and the variance
/// `b_j^2 (1 - exp(-2 lambda t)) / (2 lambda)` with `lambda = a + Re(nu) k^2`.
pub fn ou_oracle(
    params: &PhysParams,
    spec: &NoiseSpec,
    basis: &TrigBasis,
    mode_index: usize,
    t: f64,
) -> Result<(Complex64, f64)> {
    if params.nonlin_coeff != C64::new(0.0, 0.0) {
        return Err(CglError::Domain(
            "the transition oracle is exact only with the nonlinearity off".into(),
        ));
    }
    if mode_index >= spec.modes() || mode_index >= basis.len() {
        return Err(CglError::Domain(format!(
            "mode {mode_index} outside the forced range ({} noise modes, {} basis modes)",
            spec.modes(),
            basis.len()
        )));
    }
    // Negated form so that NaN is rejected along with negative times.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(t >= 0.0) {
        return Err(CglError::Domain(format!("oracle time must be nonnegative, got {t}")));
    }
    let k = basis.mode(mode_index).wavenumber();
    let a = params.damping;
    let lambda = a + params.viscosity.re * k * k;
    let mean_factor = (-(C64::new(a, 0.0) + params.viscosity * k * k) * t).exp();
    let b = spec.coeffs()[mode_index];
    let variance = b * b * (1.0 - (-2.0 * lambda * t).exp()) / (2.0 * lambda);
    Ok((mean_factor, variance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_setup(nu_im: f64) -> (Arc<Grid>, TrigBasis, NoiseSpec, CglStepper) {
        let grid = Grid::new(10.0, 64).unwrap();
        let basis = TrigBasis::new(&grid, 8).unwrap();
        let spec = NoiseSpec::power_law(0.25, 2.0, 8).unwrap();
        let params = PhysParams {
            damping: 1.0,
            viscosity: C64::new(1.0, nu_im),
            nonlin_coeff: C64::default(),
            nonlin_power: 1.0,
            forcing: Field::zeros(&grid),
        };
        let stepper = CglStepper::new(&grid, params, 2e-3).unwrap();
        (grid, basis, spec, stepper)
    }

    #[test]
    fn probe_times_must_align_and_increase() {
        assert!(probe_steps(&[0.0, 0.5, 1.0], 1e-3).is_ok());
        assert!(probe_steps(&[0.00042], 1e-3).is_err());
        assert!(probe_steps(&[1.0, 0.5], 1e-3).is_err());
        assert!(probe_steps(&[], 1e-3).is_err());
    }

    #[test]
    fn oracle_limits_and_guards() {
        let (_, basis, spec, stepper) = linear_setup(0.5);
        let p = stepper.params();
        let (m0, v0) = ou_oracle(p, &spec, &basis, 1, 0.0).unwrap();
        assert!((m0 - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(v0, 0.0);
        let k1 = basis.mode(1).wavenumber();
        let lambda = 1.0 + k1 * k1;
        let (_, vinf) = ou_oracle(p, &spec, &basis, 1, 1e6).unwrap();
        let b1 = spec.coeffs()[1];
        assert!((vinf - b1 * b1 / (2.0 * lambda)).abs() < 1e-12);
        assert!(ou_oracle(p, &spec, &basis, 99, 1.0).is_err());
        let mut nl = p.clone();
        nl.nonlin_coeff = C64::new(1.0, 0.0);
        assert!(ou_oracle(&nl, &spec, &basis, 1, 1.0).is_err());
    }

    #[test]
    fn linear_ensemble_matches_the_oracle() {
        // real viscosity: per-mode rotation is absent and the oracle
        // formulas are exact; check mean and variance of <u, e_1>
        let (grid, basis, spec, stepper) = linear_setup(0.0);
        let u0 = basis.mode(1).as_field(&grid).scaled(C64::new(2.0, 0.0));
        let t_probe = 1.0;
        let n_paths = 1500u64;
        let coeffs: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|traj| {
                let mut st = stepper.init_state(&u0, false).unwrap();
                let mut sc = stepper.scratch();
                let mut stream = spec.stream(40, traj);
                let n_steps = (t_probe / stepper.dt()).round() as u64;
                for step in 0..n_steps {
                    let incr = sample_increment(&spec, &mut stream, step, stepper.dt()).unwrap();
                    stepper.step(&mut st, &mut sc, Some((&basis, &incr))).unwrap();
                }
                basis.coefficient(st.coeffs(), 1)
            })
            .collect();
        let stats = SampleStats::from_slice(&coeffs).unwrap();
        let (mf, var) = ou_oracle(stepper.params(), &spec, &basis, 1, t_probe).unwrap();
        let want_mean = 2.0 * mf.re;
        assert!(
            (stats.mean - want_mean).abs() < 4.0 * stats.std_error,
            "mean {} vs oracle {want_mean} (se {})",
            stats.mean,
            stats.std_error
        );
        let rel = (stats.variance - var).abs() / var;
        assert!(rel < 0.15, "variance {} vs oracle {var}", stats.variance);
    }

    #[test]
    fn deterministic_decay_satisfies_the_moment_bound_with_zero_c_prime() {
        let (grid, basis, _, stepper) = linear_setup(0.5);
        let silent = NoiseSpec::explicit(vec![0.0; 8]).unwrap();
        let u0 = Field::gaussian_bump(&grid, 0.0, 1.0, 2.0);
        let report =
            check_moment_bound(&stepper, &basis, &silent, &u0, &[0.5, 1.0, 2.0], 4, 7).unwrap();
        assert!(report.pass);
        assert!(report.c_prime == 0.0);
        for (m, b) in report.means.iter().zip(&report.bounds) {
            assert!(*m <= b + 1e-9);
        }
    }

    #[test]
    fn stationary_linear_mean_square_stays_under_c_prime() {
        let (grid, basis, spec, stepper) = linear_setup(0.5);
        let u0 = Field::zeros(&grid);
        let report =
            check_moment_bound(&stepper, &basis, &spec, &u0, &[4.0, 8.0], 300, 13).unwrap();
        assert!(report.pass, "means {:?} bounds {:?}", report.means, report.bounds);
        // the bound is not vacuous: the stationary mean square is within
        // a factor ~4 of C' for this spectrum
        assert!(report.means[1] > 0.1 * report.c_prime);
    }

    #[test]
    fn energy_tails_are_monotone_with_positive_rate() {
        let (grid, basis, spec, stepper) = linear_setup(0.5);
        let u0 = Field::zeros(&grid);
        // place the offsets at quantiles of the sup distribution so every
        // tier sees exceedances with strictly decreasing frequency
        let mut sups = weighted_sup_excess(&stepper, &basis, &spec, &u0, 0.0, 5.0, 200, 3).unwrap();
        sups.sort_by(|a, b| a.total_cmp(b));
        let rho = [sups[60], sups[120], sups[180]];
        assert!(rho[0] < rho[1] && rho[1] < rho[2]);
        let report =
            check_energy_tails(&stepper, &basis, &spec, &u0, 0.0, 1.0, &rho, 5.0, 200, 3).unwrap();
        assert!(!report.vacuous, "frequencies {:?}", report.frequencies);
        assert!(report.pass, "freqs {:?} gamma {:?}", report.frequencies, report.gamma_hat);
        assert!(report.gamma_hat.unwrap() > 0.0);
    }

    #[test]
    fn noise_off_energy_tails_are_vacuous() {
        let (grid, basis, _, stepper) = linear_setup(0.5);
        let silent = NoiseSpec::explicit(vec![0.0; 8]).unwrap();
        let u0 = Field::gaussian_bump(&grid, 0.0, 1.0, 1.0);
        // K above the deterministic slope: no exceedances at any rho > 0
        let report = check_energy_tails(
            &stepper,
            &basis,
            &silent,
            &u0,
            5.0,
            1.0,
            &[0.5, 1.0, 2.0],
            2.0,
            4,
            3,
        )
        .unwrap();
        assert!(report.vacuous);
        assert!(report.pass);
        assert!(report.frequencies.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn tail_offset_lists_are_validated() {
        let (grid, basis, spec, stepper) = linear_setup(0.5);
        let u0 = Field::zeros(&grid);
        let short =
            check_energy_tails(&stepper, &basis, &spec, &u0, 1.0, 1.0, &[1.0, 2.0], 1.0, 4, 3);
        assert!(short.is_err());
        let unsorted =
            check_energy_tails(&stepper, &basis, &spec, &u0, 1.0, 1.0, &[2.0, 1.0, 3.0], 1.0, 4, 3);
        assert!(unsorted.is_err());
    }

    #[test]
    fn stopping_tails_decay() {
        let (grid, basis, spec, stepper) = linear_setup(0.5);
        let u0 = Field::zeros(&grid);
        let sp = StoppingParams { rate: 0.02, rate_margin: 0.02, init_weight: 2.0, offset: 0.05 };
        let report =
            check_stopping_tails(&stepper, &basis, &spec, &u0, &sp, &[0.5, 1.0, 2.0], 6.0, 200, 5)
                .unwrap();
        assert!(report.n_triggered > 0, "envelope never fired: tighten the test setup");
        assert!(report.pass, "freqs {:?} slope {:?}", report.frequencies, report.slope);
        // beyond-horizon events are empty by construction
        let err = check_stopping_tails(&stepper, &basis, &spec, &u0, &sp, &[0.5, 7.0], 6.0, 10, 5);
        assert!(err.is_err());
    }

    #[test]
    fn family_is_lipschitz_and_bounded() {
        let (grid, basis, _, _) = linear_setup(0.5);
        let family = TestFamily::standard(&grid, &basis, 6, 4, 99).unwrap();
        assert_eq!(family.len(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Field> = (0..12)
            .map(|_| {
                let amp = rng.gen::<f64>() * 2.0;
                Field::from_fn(&grid, |x| {
                    C64::new(amp * (-(0.2 * x * x)).exp(), 0.3 * amp * (0.7 * x).cos())
                })
            })
            .collect();
        let quot = family.max_difference_quotient(&samples).unwrap();
        assert!(quot <= 1.0 + 1e-6, "sampled Lipschitz quotient {quot}");
        let mut vals = vec![0.0; family.len()];
        family.eval(&samples[0], &mut vals).unwrap();
        assert!(vals.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn identical_initial_laws_sit_on_the_noise_floor() {
        let (grid, basis, spec, stepper) = linear_setup(0.5);
        let family = TestFamily::standard(&grid, &basis, 6, 4, 99).unwrap();
        let u0 = Field::gaussian_bump(&grid, 0.0, 1.0, 1.0);
        let report =
            estimate_mixing_rate(&stepper, &basis, &spec, &family, &u0, &u0, &[1.0, 2.0], 64, 21)
                .unwrap();
        // equal starts under shared noise keys give bitwise-equal paths:
        // the gap and its floor are exactly zero and no fit is attempted
        for p in &report.points {
            assert!(p.floor_limited, "t = {}: {} vs floor {}", p.t, p.distance, p.noise_floor);
            assert_eq!(p.distance, 0.0);
        }
        assert!(report.kappa_hat.is_none());
    }

    #[test]
    fn linear_mixing_rate_matches_the_slowest_mode() {
        // alpha = 0, nu real: the law gap decays like exp(-(a + nu k^2) t)
        // along the slowest displaced mode
        let (grid, basis, spec, stepper) = linear_setup(0.0);
        let family = TestFamily::standard(&grid, &basis, 4, 6, 123).unwrap();
        let u0_a = Field::zeros(&grid);
        let u0_b = basis.mode(1).as_field(&grid).scaled(C64::new(1.0, 0.0));
        let times: Vec<f64> = (1..=5).map(|i| 0.5 * i as f64).collect();
        let report =
            estimate_mixing_rate(&stepper, &basis, &spec, &family, &u0_a, &u0_b, &times, 800, 31)
                .unwrap();
        let kappa = report.kappa_hat.expect("distances should clear the floor");
        let k1 = basis.mode(1).wavenumber();
        let want = 1.0 + k1 * k1;
        assert!(
            (kappa - want).abs() < 0.1 * want,
            "kappa {kappa} vs oracle {want}; points {:?}",
            report.points
        );
        assert!(report.r_squared.unwrap() > 0.9);
    }
}

//! Fast deterministic self-checks of the foundational identities: spectral
//! transforms, basis orthonormality, weight monotonicity, noise-coefficient
//! sums, propagator composition, shared-noise coincidence, energy bookkeeping
//! and the stopping/likelihood plumbing. The CLI `validate` command runs the
//! whole list and fails on any violation.

use std::sync::Arc;

use crate::basis::TrigBasis;
use crate::dynamics::{CglStepper, PhysParams};
use crate::field::Field;
use crate::functionals::{NovikovLedger, OnlineStopping, StoppingParams};
use crate::grid::{Grid, C64};
use crate::noise::{sample_increment, NoiseSpec, WienerIncrement};
use crate::weights::WeightTable;

pub struct SelfCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, result: std::result::Result<String, String>) -> SelfCheck {
    match result {
        Ok(detail) => SelfCheck { name, pass: true, detail },
        Err(detail) => SelfCheck { name, pass: false, detail },
    }
}

fn fixture() -> (Arc<Grid>, TrigBasis, NoiseSpec, CglStepper) {
    let grid = Grid::new(20.0, 128).expect("fixture grid");
    let basis = TrigBasis::new(&grid, 16).expect("fixture basis");
    let spec = NoiseSpec::power_law(1.0, 2.0, 16).expect("fixture noise");
    let params = PhysParams {
        damping: 1.0,
        viscosity: C64::new(1.0, 0.5),
        nonlin_coeff: C64::new(1.0, 1.0),
        nonlin_power: 1.0,
        forcing: Field::gaussian_bump(&grid, 0.0, 1.0, 1.0),
    };
    let stepper = CglStepper::new(&grid, params, 1e-3).expect("fixture stepper");
    (grid, basis, spec, stepper)
}

fn transform_round_trip() -> std::result::Result<String, String> {
    let (grid, _, _, _) = fixture();
    let f = Field::from_fn(&grid, |x| C64::new((-0.1 * x * x).exp(), 0.3 * (1.7 * x).cos()));
    let mut sc = grid.scratch();
    let mut coeffs = vec![C64::default(); grid.n()];
    let mut back = vec![C64::default(); grid.n()];
    grid.forward(f.values(), &mut coeffs, &mut sc);
    grid.inverse(&coeffs, &mut back, &mut sc);
    let round = f.values().iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0f64, f64::max);
    let spectral = 2.0 * grid.half_width() * coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let parseval = (spectral - f.l2_norm_sq()).abs() / f.l2_norm_sq();
    if round < 1e-12 && parseval < 1e-12 {
        Ok(format!("round-trip {round:.1e}, Parseval gap {parseval:.1e}"))
    } else {
        Err(format!("round-trip {round:.1e}, Parseval gap {parseval:.1e}"))
    }
}

fn basis_orthonormality() -> std::result::Result<String, String> {
    let (grid, basis, _, _) = fixture();
    let fields: Vec<Field> = (0..basis.len()).map(|j| basis.mode(j).as_field(&grid)).collect();
    let mut worst: f64 = 0.0;
    for (i, fi) in fields.iter().enumerate() {
        for (j, fj) in fields.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            let got = fi.inner(fj).map_err(|e| e.to_string())?;
            worst = worst.max((got - want).abs());
        }
    }
    if worst < 1e-10 {
        Ok(format!("Gram deviation {worst:.1e}"))
    } else {
        Err(format!("Gram deviation {worst:.1e}"))
    }
}

fn spectral_derivative() -> std::result::Result<String, String> {
    let (grid, _, _, _) = fixture();
    let f = Field::from_fn(&grid, |x| C64::new((-0.25 * x * x).exp(), 0.0));
    let want = Field::from_fn(&grid, |x| C64::new(-0.5 * x * (-0.25 * x * x).exp(), 0.0));
    let got = f.derivative();
    let gap =
        got.values().iter().zip(want.values()).map(|(a, b)| (a - b).norm()).fold(0.0f64, f64::max);
    if gap < 1e-8 {
        Ok(format!("max pointwise error {gap:.1e}"))
    } else {
        Err(format!("max pointwise error {gap:.1e}"))
    }
}

fn weight_monotonicity() -> std::result::Result<String, String> {
    let (grid, _, _, _) = fixture();
    let table = WeightTable::new(&grid);
    let p0 = table.psi(0.0).map_err(|e| e.to_string())?;
    let p1 = table.psi(1.0).map_err(|e| e.to_string())?;
    let p2 = table.psi(10.0).map_err(|e| e.to_string())?;
    if p0.iter().any(|&v| v != 0.0) {
        return Err("psi(0) is not identically zero".into());
    }
    for ((a, b), phi) in p1.iter().zip(&p2).zip(table.phi()) {
        if !(*a >= 0.0 && a <= b && b <= phi) {
            return Err(format!("ordering 0 <= {a} <= {b} <= {phi} violated"));
        }
    }
    Ok("0 = psi(0) <= psi(1) <= psi(10) <= phi pointwise".into())
}

fn noise_sums() -> std::result::Result<String, String> {
    let (_, basis, spec, stepper) = fixture();
    let b1 = spec.b1();
    let b2 = spec.b2(&basis, stepper.weights()).map_err(|e| e.to_string())?;
    let b3 = spec.b3(&basis).map_err(|e| e.to_string())?;
    let decreasing = spec.coeffs().windows(2).all(|w| w[1] <= w[0]);
    if b1 > 0.0 && b2.is_finite() && b3.is_finite() && decreasing {
        Ok(format!("B1 = {b1:.4}, B2 = {b2:.4}, B3 = {b3:.4}, coefficients decreasing"))
    } else {
        Err(format!("B1 = {b1}, B2 = {b2}, B3 = {b3}, decreasing = {decreasing}"))
    }
}

fn propagator_composition() -> std::result::Result<String, String> {
    let (grid, _, _, _) = fixture();
    let params = PhysParams {
        damping: 1.0,
        viscosity: C64::new(1.0, 0.5),
        nonlin_coeff: C64::default(),
        nonlin_power: 1.0,
        forcing: Field::zeros(&grid),
    };
    let fine = CglStepper::new(&grid, params.clone(), 1e-3).map_err(|e| e.to_string())?;
    let coarse = CglStepper::new(&grid, params, 4e-3).map_err(|e| e.to_string())?;
    let u0 = Field::from_fn(&grid, |x| C64::new((-0.2 * x * x).exp(), (0.8 * x).sin()));
    let mut a = fine.init_state(&u0, false).map_err(|e| e.to_string())?;
    let mut b = coarse.init_state(&u0, false).map_err(|e| e.to_string())?;
    let mut sc = fine.scratch();
    for _ in 0..4 {
        fine.step_heat(&mut a, &mut sc).map_err(|e| e.to_string())?;
    }
    coarse.step_heat(&mut b, &mut sc).map_err(|e| e.to_string())?;
    let gap = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm()).fold(0.0f64, f64::max);
    if gap < 1e-12 {
        Ok(format!("4 x 1e-3 vs 1 x 4e-3 linear steps differ by {gap:.1e}"))
    } else {
        Err(format!("composition gap {gap:.1e}"))
    }
}

fn shared_noise_coincidence() -> std::result::Result<String, String> {
    let (grid, basis, spec, stepper) = fixture();
    let u0 = Field::gaussian_bump(&grid, 0.0, 1.0, 1.5);
    let mut u = stepper.init_state(&u0, false).map_err(|e| e.to_string())?;
    let mut v = stepper.init_state(&u0, false).map_err(|e| e.to_string())?;
    let mut sc = stepper.scratch();
    let mut stream = spec.stream(11, 0);
    let mut gap: f64 = 0.0;
    for step in 0..200 {
        let incr =
            sample_increment(&spec, &mut stream, step, stepper.dt()).map_err(|e| e.to_string())?;
        stepper.step(&mut u, &mut sc, Some((&basis, &incr))).map_err(|e| e.to_string())?;
        stepper.step(&mut v, &mut sc, Some((&basis, &incr))).map_err(|e| e.to_string())?;
        gap = gap.max(
            u.coeffs().iter().zip(v.coeffs()).map(|(x, y)| (x - y).norm()).fold(0.0f64, f64::max),
        );
    }
    if gap < 1e-12 {
        Ok(format!("identically driven copies stay within {gap:.1e} for 200 steps"))
    } else {
        Err(format!("copies drifted apart by {gap:.1e}"))
    }
}

fn energy_bookkeeping() -> std::result::Result<String, String> {
    let (grid, basis, spec, stepper) = fixture();
    let u0 = Field::gaussian_bump(&grid, 1.0, 1.0, 2.0);
    let mut st = stepper.init_state(&u0, true).map_err(|e| e.to_string())?;
    let lv0 = stepper.energy_levels(&st).expect("tracking");
    let gap0 = (lv0.weighted - u0.l2_norm_sq()).abs() / u0.l2_norm_sq();
    if gap0 > 1e-12 {
        return Err(format!("weighted energy at t = 0 off by {gap0:.1e} relative"));
    }
    let mut sc = stepper.scratch();
    let mut stream = spec.stream(12, 0);
    let mut prev_gap = 0.0;
    for step in 0..400 {
        let incr =
            sample_increment(&spec, &mut stream, step, stepper.dt()).map_err(|e| e.to_string())?;
        stepper.step(&mut st, &mut sc, Some((&basis, &incr))).map_err(|e| e.to_string())?;
        let lv = stepper.energy_levels(&st).expect("tracking");
        // integral parts only grow: each level minus its instantaneous
        // mass is nondecreasing
        let gap = lv.plain - st.norm_sq();
        if gap + 1e-12 < prev_gap {
            return Err(format!("integral component decreased at step {}", st.step()));
        }
        prev_gap = gap;
    }
    Ok("E_psi(0) equals the initial mass; integral component nondecreasing".into())
}

fn stopping_monotonicity() -> std::result::Result<String, String> {
    let base = StoppingParams { rate: 1.0, rate_margin: 0.5, init_weight: 2.0, offset: 1.0 };
    let series: [(f64, f64); 6] =
        [(0.0, 0.0), (0.5, 2.0), (1.0, 3.4), (1.5, 5.5), (2.0, 7.0), (2.5, 9.5)];
    let mut taus = Vec::new();
    for rho in [0.5, 1.0, 2.0, 50.0] {
        let mut stop =
            OnlineStopping::new(base.with_offset(rho), 0.25).map_err(|e| e.to_string())?;
        for (t, e) in series {
            if stop.observe(t, e).is_some() {
                break;
            }
        }
        taus.push(stop.outcome().switch_time());
    }
    if taus.windows(2).all(|w| w[0] <= w[1]) && taus[3].is_infinite() {
        Ok(format!("switch times {taus:?} nondecreasing in the offset"))
    } else {
        Err(format!("switch times {taus:?} not monotone"))
    }
}

fn likelihood_identities() -> std::result::Result<String, String> {
    let (_, _, spec, _) = fixture();
    let mut ledger = NovikovLedger::new(&spec, 4).map_err(|e| e.to_string())?;
    let zero_ctrl = crate::dynamics::ControlStep::from_coeffs(vec![0.0; 4]);
    let incr = WienerIncrement::zero(&spec, 1e-3);
    ledger.record(&zero_ctrl, &incr).map_err(|e| e.to_string())?;
    if ledger.log_density() != 0.0 || ledger.int_a_sq() != 0.0 {
        return Err("zero control produced a nonzero likelihood ledger".into());
    }
    let mut stream = spec.stream(3, 0);
    let a = sample_increment(&spec, &mut stream, 0, 1e-3).map_err(|e| e.to_string())?;
    let b = sample_increment(&spec, &mut stream, 1, 1e-3).map_err(|e| e.to_string())?;
    let merged = WienerIncrement::merge(&[a.clone(), b.clone()]).map_err(|e| e.to_string())?;
    let gap = merged
        .beta()
        .iter()
        .zip(a.beta().iter().zip(b.beta()))
        .map(|(m, (x, y))| (m - (x + y)).abs())
        .fold(0.0f64, f64::max);
    if (merged.dt() - 2e-3).abs() < 1e-15 && gap < 1e-15 {
        Ok("zero-control ledger is null; increment merge adds supports and spans".into())
    } else {
        Err(format!("merge mismatch: dt {} gap {gap:.1e}", merged.dt()))
    }
}

fn oracle_identity() -> std::result::Result<String, String> {
    let (grid, basis, spec, _) = fixture();
    let params = PhysParams {
        damping: 1.0,
        viscosity: C64::new(1.0, 0.5),
        nonlin_coeff: C64::default(),
        nonlin_power: 1.0,
        forcing: Field::zeros(&grid),
    };
    let (mf, var) =
        crate::estimators::ou_oracle(&params, &spec, &basis, 0, 0.0).map_err(|e| e.to_string())?;
    if (mf - C64::new(1.0, 0.0)).norm() < 1e-14 && var == 0.0 {
        Ok("transition oracle is the identity at t = 0".into())
    } else {
        Err(format!("oracle at t = 0 returned ({mf}, {var})"))
    }
}

/// Run every self-check; the list is deterministic and takes well under
/// a second.
pub fn run_self_checks() -> Vec<SelfCheck> {
    vec![
        check("transform round-trip and Parseval", transform_round_trip()),
        check("trigonometric basis orthonormality", basis_orthonormality()),
        check("spectral derivative", spectral_derivative()),
        check("weight growth and ordering", weight_monotonicity()),
        check("noise coefficient sums", noise_sums()),
        check("linear propagator composition", propagator_composition()),
        check("shared-noise coincidence", shared_noise_coincidence()),
        check("energy bookkeeping", energy_bookkeeping()),
        check("stopping-time monotonicity", stopping_monotonicity()),
        check("likelihood ledger identities", likelihood_identities()),
        check("transition oracle identity", oracle_identity()),
    ]
}

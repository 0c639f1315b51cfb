//! White-in-time forcing on finitely many trigonometric directions.
//!
//! The driving noise is `sum_j b_j beta_j(t) e_j(x)` over the first `M`
//! basis modes, with independent standard Brownian motions `beta_j`. The
//! stock coefficient law is the power decay `b_j = b0 (1 + j)^(-p)` in
//! one-based mode numbering (so the first coefficient is `b0 2^(-p)`).
//!
//! Three series control the estimates downstream and are exposed by name:
//! `B1 = sum b_j^2`, `B2 = sum b_j^2 |phi e_j|^2` (log-weighted) and
//! `B3 = sum b_j^2 |d/dx e_j|^2`. For the power law, `B3`'s summand grows
//! like `j^(2 - 2p)`, so `p > 3/2` is required for the idealised infinite
//! series to converge; shorter decays are rejected outright.

use serde::Serialize;

use crate::basis::TrigBasis;
use crate::error::{CglError, Result};
use crate::field::Field;
use crate::grid::C64;
use crate::stream::GaussianStream;
use crate::weights::WeightTable;

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSpec {
    amplitude: f64,
    /// Power-law exponent; `None` for explicitly listed coefficients.
    decay: Option<f64>,
    coeffs: Vec<f64>,
}

impl NoiseSpec {
    /// Power-law coefficients `b0 (1 + j)^(-p)`, `j = 1..=modes`.
    pub fn power_law(amplitude: f64, decay: f64, modes: usize) -> Result<NoiseSpec> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(CglError::Parameter(format!(
                "noise amplitude b0 must be positive, got {amplitude}"
            )));
        }
        if !(decay.is_finite() && decay > 1.5) {
            return Err(CglError::Parameter(format!(
                "noise decay exponent p = {decay} is too small: the gradient series \
                 B3 = sum b_j^2 |d/dx e_j|^2 ~ sum j^(2-2p) requires p > 3/2"
            )));
        }
        if modes == 0 {
            return Err(CglError::Parameter("noise needs at least one forced mode".into()));
        }
        let coeffs = (1..=modes).map(|j| amplitude * ((1 + j) as f64).powf(-decay)).collect();
        Ok(NoiseSpec { amplitude, decay: Some(decay), coeffs })
    }

    /// Explicit per-mode coefficients (nonnegative, finite).
    pub fn explicit(coeffs: Vec<f64>) -> Result<NoiseSpec> {
        if coeffs.is_empty() {
            return Err(CglError::Parameter("noise needs at least one forced mode".into()));
        }
        if let Some(b) = coeffs.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(CglError::Parameter(format!(
                "noise coefficients must be finite and nonnegative, got {b}"
            )));
        }
        Ok(NoiseSpec { amplitude: f64::NAN, decay: None, coeffs })
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Every controlled direction must be directly forced; zero
    /// coefficients below rank `n` break the change-of-measure argument.
    pub fn require_nonzero_up_to(&self, n: usize) -> Result<()> {
        if n > self.coeffs.len() {
            return Err(CglError::Parameter(format!(
                "control rank {n} exceeds the {} forced noise modes",
                self.coeffs.len()
            )));
        }
        for (j, &b) in self.coeffs[..n].iter().enumerate() {
            if b == 0.0 {
                return Err(CglError::Parameter(format!(
                    "control rank {n} requires nonzero noise on each of the first {n} modes, \
                     but coefficient {j} vanishes: every controlled direction must be \
                     directly forced"
                )));
            }
        }
        Ok(())
    }

    /// `B1 = sum b_j^2` over the forced modes.
    pub fn b1(&self) -> f64 {
        self.coeffs.iter().map(|b| b * b).sum()
    }

    /// Idealised `B1` with the power law continued to infinitely many
    /// modes: `b0^2 (zeta(2p) - 1)`. `None` for explicit coefficients.
    pub fn b1_infinite(&self) -> Option<f64> {
        let p2 = 2.0 * self.decay?;
        // direct sum plus a midpoint-rule tail: error O(M^-(2p+1))
        let cut = 200_000u64;
        let head: f64 = (2..=cut).map(|m| (m as f64).powf(-p2)).sum();
        let tail = (cut as f64 + 0.5).powf(1.0 - p2) / (p2 - 1.0);
        Some(self.amplitude * self.amplitude * (head + tail))
    }

    /// `B2 = sum b_j^2 |phi e_j|^2` on the given grid.
    pub fn b2(&self, basis: &TrigBasis, weights: &WeightTable) -> Result<f64> {
        self.check_basis(basis)?;
        let dx = basis.grid().dx();
        let phi = weights.phi();
        if phi.len() != basis.grid().n() {
            return Err(CglError::grids("B2"));
        }
        let mut sum = 0.0;
        for (j, &b) in self.coeffs.iter().enumerate() {
            let e = basis.mode(j).values();
            let w: f64 = e.iter().zip(phi).map(|(&ev, &p)| p * p * ev * ev).sum();
            sum += b * b * w * dx;
        }
        Ok(sum)
    }

    /// `B3 = sum b_j^2 |d/dx e_j|^2 = sum b_j^2 k_j^2` (derivatives of the
    /// trigonometric modes are exact).
    pub fn b3(&self, basis: &TrigBasis) -> Result<f64> {
        self.check_basis(basis)?;
        Ok(self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let k = basis.mode(j).wavenumber();
                b * b * k * k
            })
            .sum())
    }

    fn check_basis(&self, basis: &TrigBasis) -> Result<()> {
        if basis.len() < self.coeffs.len() {
            return Err(CglError::Parameter(format!(
                "noise forces {} modes but basis carries only {}",
                self.coeffs.len(),
                basis.len()
            )));
        }
        Ok(())
    }

    /// A Gaussian stream wide enough for one increment per step.
    pub fn stream(&self, seed: u64, trajectory: u64) -> GaussianStream {
        GaussianStream::new(seed, trajectory, self.modes())
    }
}

/// One step's worth of Wiener increments.
#[derive(Clone, Debug)]
pub struct WienerIncrement {
    dt: f64,
    /// `d beta_j = sqrt(dt) g_j` — the unscaled Brownian increments.
    beta: Vec<f64>,
    /// `b_j sqrt(dt) g_j` — what actually enters the field.
    scaled: Vec<f64>,
}

impl WienerIncrement {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn scaled(&self) -> &[f64] {
        &self.scaled
    }

    /// Zero increment (noise switched off) of matching shape.
    pub fn zero(spec: &NoiseSpec, dt: f64) -> WienerIncrement {
        WienerIncrement { dt, beta: vec![0.0; spec.modes()], scaled: vec![0.0; spec.modes()] }
    }

    /// Sum of consecutive fine increments: the coarse of a common
    /// refinement, for step-size comparisons on one Brownian path.
    pub fn merge(parts: &[WienerIncrement]) -> Result<WienerIncrement> {
        let first =
            parts.first().ok_or_else(|| CglError::Domain("cannot merge zero increments".into()))?;
        let m = first.beta.len();
        let mut dt = 0.0;
        let mut beta = vec![0.0; m];
        let mut scaled = vec![0.0; m];
        for p in parts {
            if p.beta.len() != m {
                return Err(CglError::Domain("increments of different widths".into()));
            }
            dt += p.dt;
            for j in 0..m {
                beta[j] += p.beta[j];
                scaled[j] += p.scaled[j];
            }
        }
        Ok(WienerIncrement { dt, beta, scaled })
    }
}

/// Draw the increment for `step` from the trajectory's counter stream.
pub fn sample_increment(
    spec: &NoiseSpec,
    stream: &mut GaussianStream,
    step: u64,
    dt: f64,
) -> Result<WienerIncrement> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CglError::Domain(format!("increment needs dt > 0, got {dt}")));
    }
    if stream.draws_per_step() != spec.modes() {
        return Err(CglError::Domain(format!(
            "stream draws {} normals per step but the noise forces {} modes",
            stream.draws_per_step(),
            spec.modes()
        )));
    }
    let mut beta = vec![0.0; spec.modes()];
    stream.fill_step(step, &mut beta);
    let sqrt_dt = dt.sqrt();
    for b in &mut beta {
        *b *= sqrt_dt;
    }
    let scaled = beta.iter().zip(spec.coeffs()).map(|(db, b)| b * db).collect();
    Ok(WienerIncrement { dt, beta, scaled })
}

/// Physical-space field of one increment: `sum_j (b_j d beta_j) e_j`.
pub fn assemble_noise_field(basis: &TrigBasis, incr: &WienerIncrement) -> Result<Field> {
    if incr.scaled.len() > basis.len() {
        return Err(CglError::Parameter(format!(
            "increment spans {} modes but basis carries {}",
            incr.scaled.len(),
            basis.len()
        )));
    }
    let mut out = Field::zeros(basis.grid());
    for (j, &amount) in incr.scaled.iter().enumerate() {
        let mode = basis.mode(j).values();
        for (o, &e) in out.values_mut().iter_mut().zip(mode) {
            *o += C64::new(amount * e, 0.0);
        }
    }
    Ok(out)
}

/// Spectral version of [`assemble_noise_field`]: add the increment
/// directly into plane-wave coefficients, `O(M)` instead of `O(M n)`.
pub fn add_increment_spectral(basis: &TrigBasis, coeffs: &mut [C64], incr: &WienerIncrement) {
    for (j, &amount) in incr.scaled.iter().enumerate() {
        if amount != 0.0 {
            basis.add_scaled(coeffs, j, amount);
        }
    }
}

/// Partial sums of `sum_j |<h, e_j>| |e_j|_{H1}`, used to flag forcing
/// profiles whose basis expansion converges too slowly for the weighted
/// estimates to be meaningful. Purely diagnostic.
pub fn forcing_alignment_partial_sums(h: &Field, basis: &TrigBasis) -> Result<Vec<f64>> {
    if !h.grid().same_as(basis.grid()) {
        return Err(CglError::grids("forcing alignment"));
    }
    let grid = basis.grid();
    let mut sc = grid.scratch();
    let mut coeffs = vec![C64::default(); grid.n()];
    grid.forward(h.values(), &mut coeffs, &mut sc);
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(basis.len());
    for j in 0..basis.len() {
        let k = basis.mode(j).wavenumber();
        acc += basis.coefficient(&coeffs, j).abs() * (1.0 + k * k).sqrt();
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn fixture() -> (std::sync::Arc<Grid>, TrigBasis, NoiseSpec) {
        let grid = Grid::new(20.0, 256).unwrap();
        let basis = TrigBasis::new(&grid, 16).unwrap();
        let spec = NoiseSpec::power_law(1.0, 2.0, 16).unwrap();
        (grid, basis, spec)
    }

    #[test]
    fn power_law_values_and_guards() {
        let (_, _, spec) = fixture();
        assert!((spec.coeffs()[0] - 0.25).abs() < 1e-15); // b_1 = 2^-2
        assert!((spec.coeffs()[3] - 1.0 / 25.0).abs() < 1e-15); // b_4 = 5^-2

        let err = NoiseSpec::power_law(1.0, 1.0, 8).unwrap_err();
        assert!(err.to_string().contains("B3"), "{err}");
        assert!(NoiseSpec::power_law(1.0, 1.5, 8).is_err()); // boundary excluded
        assert!(NoiseSpec::power_law(0.0, 2.0, 8).is_err());
    }

    #[test]
    fn b1_matches_direct_sum_and_infinite_tail() {
        let (_, _, spec) = fixture();
        let direct: f64 = (2..=17).map(|m| (m as f64).powi(-4)).sum();
        assert!((spec.b1() - direct).abs() < 1e-15);
        // zeta(4) - 1 = pi^4/90 - 1
        let zeta = std::f64::consts::PI.powi(4) / 90.0 - 1.0;
        let b1_inf = spec.b1_infinite().unwrap();
        assert!((b1_inf - zeta).abs() < 1e-12, "{b1_inf} vs {zeta}");
        assert!(b1_inf > spec.b1());
    }

    #[test]
    fn b3_grid_derivative_agrees_with_wavenumber_formula() {
        let (grid, basis, spec) = fixture();
        let analytic = spec.b3(&basis).unwrap();
        let mut grid_sum = 0.0;
        for (j, &b) in spec.coeffs().iter().enumerate() {
            let d = basis.mode(j).as_field(&grid).derivative();
            grid_sum += b * b * d.l2_norm_sq();
        }
        assert!((analytic - grid_sum).abs() < 1e-10 * analytic.max(1e-30));
    }

    #[test]
    fn b2_is_log_weighted_and_larger_than_b1() {
        let (grid, basis, spec) = fixture();
        let weights = WeightTable::new(&grid);
        let b2 = spec.b2(&basis, &weights).unwrap();
        // phi >= ln 2 > 0.69, and phi > 1 on most of the box, so B2 > B1
        assert!(b2 > spec.b1());
        assert!(b2.is_finite());
    }

    #[test]
    fn zero_coefficient_below_control_rank_is_rejected() {
        let spec = NoiseSpec::explicit(vec![0.1, 0.0, 0.2, 0.3]).unwrap();
        assert!(spec.require_nonzero_up_to(1).is_ok());
        let err = spec.require_nonzero_up_to(3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("coefficient 1") && msg.contains("directly forced"), "{msg}");
        assert!(spec.require_nonzero_up_to(9).is_err()); // beyond forced modes
    }

    #[test]
    fn increments_are_reproducible_and_correctly_scaled() {
        let (_, _, spec) = fixture();
        let dt = 1e-3;
        let mut s1 = spec.stream(9, 4);
        let mut s2 = spec.stream(9, 4);
        let a = sample_increment(&spec, &mut s1, 17, dt).unwrap();
        let b = sample_increment(&spec, &mut s2, 17, dt).unwrap();
        assert_eq!(a.scaled(), b.scaled());
        for j in 0..spec.modes() {
            assert!((a.scaled()[j] - spec.coeffs()[j] * a.beta()[j]).abs() < 1e-18);
        }
        assert!(sample_increment(&spec, &mut s1, 0, 0.0).is_err());
    }

    #[test]
    fn increment_statistics_match_brownian_law() {
        // Var(dW_j) = b_j^2 dt and distinct modes are uncorrelated.
        let (_, _, spec) = fixture();
        let dt = 0.01;
        let n = 100_000u64;
        let mut stream = spec.stream(3, 0);
        let mut sum = vec![0.0; 4];
        let mut sumsq = vec![0.0; 4];
        let mut cross = 0.0;
        for step in 0..n {
            let w = sample_increment(&spec, &mut stream, step, dt).unwrap();
            for j in 0..4 {
                sum[j] += w.scaled()[j];
                sumsq[j] += w.scaled()[j] * w.scaled()[j];
            }
            cross += w.scaled()[0] * w.scaled()[3];
        }
        let nf = n as f64;
        for j in 0..4 {
            let b = spec.coeffs()[j];
            let want = b * b * dt;
            let var = sumsq[j] / nf - (sum[j] / nf).powi(2);
            assert!(
                (var - want).abs() < 4.0 * want * (2.0 / nf).sqrt(),
                "mode {j}: {var} vs {want}"
            );
        }
        let corr = cross / nf / (spec.coeffs()[0] * spec.coeffs()[3] * dt);
        assert!(corr.abs() < 4.0 / nf.sqrt(), "cross-mode corr {corr}");
    }

    #[test]
    fn assembled_field_matches_spectral_injection() {
        let (grid, basis, spec) = fixture();
        let mut stream = spec.stream(5, 1);
        let incr = sample_increment(&spec, &mut stream, 0, 1e-2).unwrap();
        let direct = assemble_noise_field(&basis, &incr).unwrap();

        let mut coeffs = vec![C64::default(); grid.n()];
        add_increment_spectral(&basis, &mut coeffs, &incr);
        let mut sc = grid.scratch();
        let mut phys = vec![C64::default(); grid.n()];
        grid.inverse(&coeffs, &mut phys, &mut sc);
        for (d, p) in direct.values().iter().zip(&phys) {
            assert!((d - p).norm() < 1e-13);
        }
        // increment norm: |sum dW_j e_j|^2 = sum dW_j^2 by orthonormality
        let want: f64 = incr.scaled().iter().map(|w| w * w).sum();
        assert!((direct.l2_norm_sq() - want).abs() < 1e-12 * want.max(1e-30));
    }

    #[test]
    fn merge_sums_a_common_refinement() {
        let (_, _, spec) = fixture();
        let mut stream = spec.stream(2, 0);
        let fine: Vec<WienerIncrement> =
            (0..4).map(|s| sample_increment(&spec, &mut stream, s, 5e-4).unwrap()).collect();
        let coarse = WienerIncrement::merge(&fine).unwrap();
        assert!((coarse.dt() - 2e-3).abs() < 1e-18);
        for j in 0..spec.modes() {
            let s: f64 = fine.iter().map(|f| f.scaled()[j]).sum();
            assert!((coarse.scaled()[j] - s).abs() < 1e-18);
        }
    }

    #[test]
    fn smooth_forcing_has_converging_alignment_sums() {
        // needs a basis deep enough to reach the bump's spectral tail:
        // mode m carries weight ~ exp(-(pi m / 40)^2 / 2)
        let (grid, _, _) = fixture();
        let basis = TrigBasis::new(&grid, 64).unwrap();
        let h = Field::gaussian_bump(&grid, 0.0, 1.0, 1.0);
        let sums = forcing_alignment_partial_sums(&h, &basis).unwrap();
        assert!(sums.windows(2).all(|w| w[1] >= w[0]));
        // tail stagnates for a smooth bump: last quarter adds < 1%
        let q = 3 * sums.len() / 4;
        assert!(
            sums[sums.len() - 1] - sums[q] < 0.01 * sums[sums.len() - 1],
            "tail {} vs total {}",
            sums[sums.len() - 1] - sums[q],
            sums[sums.len() - 1]
        );
    }
}

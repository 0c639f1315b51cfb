//! Real trigonometric basis and the finite-rank projections built on it.
//!
//! Modes are ordered by increasing wavenumber: the constant first, then the
//! cosine/sine pair at each `k_m = pi m / X`, all with unit L2 norm. The
//! same functions serve as the directly forced noise directions and as the
//! range of the rank-`N` projection `P_N f = sum_{j<N} <f, e_j> e_j` (real
//! inner product), whose complement `Q_N = I - P_N` is what the feedback
//! control must dominate.
//!
//! Each mode keeps both its samples and its (at most two) plane-wave bins,
//! so projections of a spectrally represented field cost `O(N)`, not
//! `O(N n)`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CglError, Result};
use crate::field::Field;
use crate::grid::{Grid, C64};
use crate::stream::fill_standard_normal;
use crate::weights::cutoff_chi;

#[derive(Clone, Debug)]
pub struct BasisMode {
    wavenumber: f64,
    values: Vec<f64>,
    spectral: Vec<(usize, C64)>,
}

impl BasisMode {
    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    /// Physical samples (modes are real-valued).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Plane-wave bins `(index, coefficient)` of this mode.
    pub fn spectral(&self) -> &[(usize, C64)] {
        &self.spectral
    }

    pub fn as_field(&self, grid: &Arc<Grid>) -> Field {
        let vals = self.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        Field::from_values(grid, vals).expect("mode sampled on its own grid")
    }
}

#[derive(Clone, Debug)]
pub struct TrigBasis {
    grid: Arc<Grid>,
    modes: Vec<BasisMode>,
}

impl TrigBasis {
    /// First `count` modes on `grid`. The highest pair must stay strictly
    /// below the Nyquist bin: `count <= n - 2`.
    pub fn new(grid: &Arc<Grid>, count: usize) -> Result<TrigBasis> {
        if count == 0 {
            return Err(CglError::Parameter("basis needs at least one mode".into()));
        }
        let max_m = count / 2;
        if max_m > grid.max_resolvable_mode() {
            return Err(CglError::Parameter(format!(
                "basis of {count} modes needs integer wavenumbers up to {max_m}, but a \
                 {}-point grid resolves only {}",
                grid.n(),
                grid.max_resolvable_mode()
            )));
        }
        let hw = grid.half_width();
        let n = grid.n();
        let amp = 1.0 / hw.sqrt(); // cos/sin normalisation
        let amp0 = 1.0 / (2.0 * hw).sqrt(); // constant mode
        let mut modes = Vec::with_capacity(count);
        for j in 0..count {
            let mode = if j == 0 {
                BasisMode {
                    wavenumber: 0.0,
                    values: vec![amp0; n],
                    spectral: vec![(0, C64::new(amp0, 0.0))],
                }
            } else {
                let m = j.div_ceil(2);
                let k = std::f64::consts::PI * m as f64 / hw;
                let half = C64::new(0.5 * amp, 0.0);
                if j % 2 == 1 {
                    // cosine
                    BasisMode {
                        wavenumber: k,
                        values: grid.points().iter().map(|&x| amp * (k * x).cos()).collect(),
                        spectral: vec![(m, half), (n - m, half)],
                    }
                } else {
                    // sine: (exp(ikx) - exp(-ikx)) / 2i
                    BasisMode {
                        wavenumber: k,
                        values: grid.points().iter().map(|&x| amp * (k * x).sin()).collect(),
                        spectral: vec![
                            (m, C64::new(0.0, -0.5 * amp)),
                            (n - m, C64::new(0.0, 0.5 * amp)),
                        ],
                    }
                }
            };
            modes.push(mode);
        }
        Ok(TrigBasis { grid: grid.clone(), modes })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mode(&self, j: usize) -> &BasisMode {
        &self.modes[j]
    }

    /// `<f, e_j>` from the plane-wave coefficients of `f`: the real
    /// pairing that the noise and the control act through.
    pub fn coefficient(&self, coeffs: &[C64], j: usize) -> f64 {
        self.complex_coefficient(coeffs, j).re
    }

    /// Complex amplitude `int f conj(e_j)`; its real part is
    /// [`coefficient`] and its imaginary part the component along `i e_j`.
    pub fn complex_coefficient(&self, coeffs: &[C64], j: usize) -> C64 {
        let two_x = 2.0 * self.grid.half_width();
        let mut acc = C64::default();
        for &(idx, w) in &self.modes[j].spectral {
            acc += coeffs[idx] * w.conj();
        }
        acc * two_x
    }

    /// `coeffs += amount * e_j` in place (spectral).
    pub fn add_scaled(&self, coeffs: &mut [C64], j: usize, amount: f64) {
        for &(idx, w) in &self.modes[j].spectral {
            coeffs[idx] += w * amount;
        }
    }

    /// `coeffs += amount * e_j` with a complex amplitude.
    pub fn add_scaled_complex(&self, coeffs: &mut [C64], j: usize, amount: C64) {
        for &(idx, w) in &self.modes[j].spectral {
            coeffs[idx] += w * amount;
        }
    }

    fn check_rank(&self, n_modes: usize) -> Result<()> {
        if n_modes > self.modes.len() {
            return Err(CglError::Domain(format!(
                "projection rank {n_modes} exceeds basis size {}",
                self.modes.len()
            )));
        }
        Ok(())
    }

    /// Spectral `P_N`: write the projection of `src` onto the complex
    /// span of the first `n_modes` modes into `out` (which is zeroed
    /// first). Both the `e_j` and `i e_j` components are kept, unlike
    /// the real pairing in [`coefficient`].
    pub fn project_low_into(&self, src: &[C64], n_modes: usize, out: &mut [C64]) -> Result<()> {
        self.check_rank(n_modes)?;
        out.fill(C64::default());
        for j in 0..n_modes {
            let a = self.complex_coefficient(src, j);
            self.add_scaled_complex(out, j, a);
        }
        Ok(())
    }

    /// `P_N f` as a field.
    pub fn project_low(&self, f: &Field, n_modes: usize) -> Result<Field> {
        if !f.grid().same_as(&self.grid) {
            return Err(CglError::grids("projection"));
        }
        let mut sc = self.grid.scratch();
        let n = self.grid.n();
        let mut coeffs = vec![C64::default(); n];
        self.grid.forward(f.values(), &mut coeffs, &mut sc);
        let mut proj = vec![C64::default(); n];
        self.project_low_into(&coeffs, n_modes, &mut proj)?;
        let mut out = Field::zeros(&self.grid);
        self.grid.inverse(&proj, out.values_mut(), &mut sc);
        Ok(out)
    }

    /// `Q_N f = f - P_N f`.
    pub fn project_high(&self, f: &Field, n_modes: usize) -> Result<Field> {
        f.sub(&self.project_low(f, n_modes)?)
    }
}

/// Empirical defect of the truncated localisation estimate: the worst
/// `|Q_N (chi_A f)| / |f|_{H^s}` over random complex band-limited samples
/// (iid standard-normal coefficients on the first `band_modes` modes).
/// Fixing the seed fixes the samples, so the defect is exactly
/// nonincreasing in `n_modes`.
pub fn truncated_poincare_epsilon(
    basis: &TrigBasis,
    n_modes: usize,
    support: f64,
    sobolev_s: f64,
    band_modes: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    basis.check_rank(n_modes)?;
    basis.check_rank(band_modes)?;
    if n_samples == 0 {
        return Err(CglError::Domain("need at least one sample".into()));
    }
    let grid = basis.grid();
    let n = grid.n();
    let chi = cutoff_chi(grid, support)?;
    let mut sc = grid.scratch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amps = vec![0.0; 2 * band_modes];
    let mut coeffs = vec![C64::default(); n];
    let mut phys = vec![C64::default(); n];
    let mut worst = 0.0f64;
    for _ in 0..n_samples {
        fill_standard_normal(&mut rng, &mut amps);
        coeffs.fill(C64::default());
        for j in 0..band_modes {
            // complex amplitude: real and imaginary parts independently
            let amp = C64::new(amps[2 * j], amps[2 * j + 1]);
            basis.add_scaled_complex(&mut coeffs, j, amp);
        }
        let hs_sq: f64 = coeffs
            .iter()
            .zip(grid.wavenumbers())
            .map(|(c, &k)| (1.0 + k * k).powf(sobolev_s) * c.norm_sqr())
            .sum::<f64>()
            * 2.0
            * grid.half_width();
        grid.inverse(&coeffs, &mut phys, &mut sc);
        for (v, &c) in phys.iter_mut().zip(&chi) {
            *v *= c;
        }
        let cut_sq = phys.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.dx();
        grid.forward(&phys, &mut coeffs, &mut sc);
        let mut low_sq = 0.0;
        for j in 0..n_modes {
            low_sq += basis.complex_coefficient(&coeffs, j).norm_sqr();
        }
        // Pythagoras: |Q_N g|^2 = |g|^2 - |P_N g|^2 (clamped for round-off)
        let high_sq = (cut_sq - low_sq).max(0.0);
        worst = worst.max((high_sq / hs_sq).sqrt());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn setup() -> (Arc<Grid>, TrigBasis) {
        let grid = Grid::new(20.0, 256).unwrap();
        let basis = TrigBasis::new(&grid, 33).unwrap();
        (grid, basis)
    }

    #[test]
    fn rejects_unresolvable_and_empty() {
        let grid = Grid::new(20.0, 64).unwrap();
        assert!(TrigBasis::new(&grid, 0).is_err());
        assert!(TrigBasis::new(&grid, 63).is_ok()); // top mode m = 31 = n/2 - 1: fine
        assert!(TrigBasis::new(&grid, 64).is_err()); // m = 32 = Nyquist: rejected
        assert!(TrigBasis::new(&grid, 62).is_ok());
    }

    #[test]
    fn modes_are_orthonormal_with_stated_sup_bounds() {
        let (grid, basis) = setup();
        let fields: Vec<Field> = (0..12).map(|j| basis.mode(j).as_field(&grid)).collect();
        for (i, fi) in fields.iter().enumerate() {
            for (j, fj) in fields.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((fi.inner(fj).unwrap() - want).abs() < 1e-12, "<e_{i}, e_{j}>");
            }
        }
        let inv_sqrt_2x = 1.0 / (2.0 * grid.half_width()).sqrt();
        let sup0 = basis.mode(0).values().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((sup0 - inv_sqrt_2x).abs() < 1e-12);
        for j in 1..12 {
            let sup = basis.mode(j).values().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(sup <= inv_sqrt_2x * 2f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn wavenumbers_are_nondecreasing_pairs() {
        let (_, basis) = setup();
        assert_eq!(basis.mode(0).wavenumber(), 0.0);
        for j in 1..basis.len() - 1 {
            assert!(basis.mode(j).wavenumber() <= basis.mode(j + 1).wavenumber() + 1e-15);
        }
        let k1 = std::f64::consts::PI / 20.0;
        assert!((basis.mode(1).wavenumber() - k1).abs() < 1e-15);
        assert!((basis.mode(2).wavenumber() - k1).abs() < 1e-15);
    }

    #[test]
    fn projection_fixes_low_modes_and_kills_high_ones() {
        let (grid, basis) = setup();
        for j in [0usize, 3, 7] {
            let e = basis.mode(j).as_field(&grid);
            let p = basis.project_low(&e, 8).unwrap();
            assert!(p.sub(&e).unwrap().l2_norm() < 1e-12);
        }
        let e9 = basis.mode(9).as_field(&grid);
        assert!(basis.project_low(&e9, 8).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn projection_is_orthogonal_and_idempotent() {
        let (grid, basis) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = Field::from_fn(&grid, |x| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * (-0.01 * x * x).exp()
        });
        let g = Field::from_fn(&grid, |x| C64::new((0.3 * x).sin(), (0.2 * x).cos()));
        let n_rank = 15;
        let pf = basis.project_low(&f, n_rank).unwrap();
        let qf = basis.project_high(&f, n_rank).unwrap();
        let qg = basis.project_high(&g, n_rank).unwrap();
        // Pythagoras
        let total = f.l2_norm_sq();
        assert!((pf.l2_norm_sq() + qf.l2_norm_sq() - total).abs() < 1e-10 * total);
        // cross-orthogonality between different fields
        assert!(pf.inner(&qg).unwrap().abs() < 1e-10);
        // idempotence
        let ppf = basis.project_low(&pf, n_rank).unwrap();
        assert!(ppf.sub(&pf).unwrap().l2_norm() < 1e-11);
    }

    #[test]
    fn mode_derivative_norm_equals_wavenumber() {
        let (grid, basis) = setup();
        for j in [1usize, 2, 9, 16] {
            let k = basis.mode(j).wavenumber();
            let d = basis.mode(j).as_field(&grid).derivative();
            assert!((d.l2_norm() - k).abs() < 1e-10, "mode {j}");
        }
    }

    #[test]
    fn poincare_defect_shrinks_with_rank() {
        let grid = Grid::new(20.0, 256).unwrap();
        let basis = TrigBasis::new(&grid, 64).unwrap();
        let eps: Vec<f64> = [4, 16, 48]
            .iter()
            .map(|&n| truncated_poincare_epsilon(&basis, n, 10.0, 1.0, 16, 50, 5).unwrap())
            .collect();
        assert!(eps[0] >= eps[1] && eps[1] >= eps[2], "{eps:?}");
        assert!(eps[2] < eps[0]);
        assert!(eps.iter().all(|&e| e > 0.0 && e.is_finite()));
    }
}

//! Spatial weights used by the energy functionals.
//!
//! The base weight is `phi(x) = ln(x^2 + 2)`: even, slowly growing, bounded
//! below by `ln 2`, with `|phi'| <= 1/sqrt(2)`. The space-time weight
//! `psi(t, x) = phi(x) (1 - exp(-t / phi(x)))` ramps from 0 at `t = 0`
//! towards `phi` while keeping `0 < d/dt psi <= 1` and `psi <= min(t, phi)`,
//! so weighted energies start from the unweighted value and gain spatial
//! localisation only gradually. A compactly supported smoothstep cutoff
//! complements them for the truncated-projection estimates.

use std::sync::Arc;

use crate::error::{CglError, Result};
use crate::grid::Grid;

/// Pointwise tables of `phi` and its derivative on a grid.
#[derive(Clone, Debug)]
pub struct WeightTable {
    grid: Arc<Grid>,
    phi: Vec<f64>,
    phi_prime: Vec<f64>,
    inv_phi: Vec<f64>,
}

impl WeightTable {
    pub fn new(grid: &Arc<Grid>) -> WeightTable {
        let phi: Vec<f64> = grid.points().iter().map(|&x| (x * x + 2.0).ln()).collect();
        let phi_prime: Vec<f64> = grid.points().iter().map(|&x| 2.0 * x / (x * x + 2.0)).collect();
        let inv_phi: Vec<f64> = phi.iter().map(|&p| 1.0 / p).collect();
        WeightTable { grid: grid.clone(), phi, phi_prime, inv_phi }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `psi(t, .)` written into `out`.
    pub fn psi_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check(t, out.len())?;
        for ((o, &p), &ip) in out.iter_mut().zip(&self.phi).zip(&self.inv_phi) {
            *o = p * (1.0 - (-t * ip).exp());
        }
        Ok(())
    }

    /// `d/dx psi(t, .)` written into `out`; equals
    /// `phi'(x) [1 - (1 + t/phi) exp(-t/phi)]`, uniformly bounded by
    /// `|phi'| <= 1/sqrt(2)`.
    pub fn psi_x_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check(t, out.len())?;
        for ((o, &dp), &ip) in out.iter_mut().zip(&self.phi_prime).zip(&self.inv_phi) {
            let s = t * ip;
            *o = dp * (1.0 - (1.0 + s) * (-s).exp());
        }
        Ok(())
    }

    pub fn psi(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid.n()];
        self.psi_into(t, &mut out)?;
        Ok(out)
    }

    /// Per-point factors `exp(-dt / phi)` for incremental updates.
    pub fn decay_factors(&self, dt: f64) -> Vec<f64> {
        self.inv_phi.iter().map(|&ip| (-dt * ip).exp()).collect()
    }

    fn check(&self, t: f64, len: usize) -> Result<()> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CglError::Domain(format!("weight psi is defined for t >= 0, got t = {t}")));
        }
        if len != self.grid.n() {
            return Err(CglError::GridMismatch(format!(
                "output buffer has {len} entries, grid has {}",
                self.grid.n()
            )));
        }
        Ok(())
    }
}

/// Incrementally maintained `psi(t, .)` and `d/dx psi(t, .)` tables.
///
/// Advancing one step multiplies the cached `exp(-t/phi)` by a precomputed
/// `exp(-dt/phi)` instead of calling `exp` per grid point per step; the
/// cache re-exponentiates from scratch periodically so multiplicative
/// round-off cannot accumulate over long runs.
#[derive(Clone, Debug)]
pub struct PsiCache {
    t: f64,
    since_refresh: u32,
    expfac: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_x: Vec<f64>,
}

const REFRESH_EVERY: u32 = 1024;

impl PsiCache {
    pub fn new(table: &WeightTable) -> PsiCache {
        let n = table.grid.n();
        let mut c = PsiCache {
            t: 0.0,
            since_refresh: 0,
            expfac: vec![1.0; n],
            psi: vec![0.0; n],
            psi_x: vec![0.0; n],
        };
        c.fill(table);
        c
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn advance(&mut self, table: &WeightTable, decay: &[f64], dt: f64) {
        debug_assert_eq!(decay.len(), self.expfac.len());
        self.t += dt;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.since_refresh = 0;
            for (e, &ip) in self.expfac.iter_mut().zip(&table.inv_phi) {
                *e = (-self.t * ip).exp();
            }
        } else {
            for (e, d) in self.expfac.iter_mut().zip(decay) {
                *e *= d;
            }
        }
        self.fill(table);
    }

    fn fill(&mut self, table: &WeightTable) {
        for i in 0..self.expfac.len() {
            let e = self.expfac[i];
            self.psi[i] = table.phi[i] * (1.0 - e);
            self.psi_x[i] = table.phi_prime[i] * (1.0 - (1.0 + self.t * table.inv_phi[i]) * e);
        }
    }
}

/// Smooth cutoff: 1 on `[-A/2, A/2]`, 0 outside `[-A, A]`, quintic
/// smoothstep ramp in between. Requires `A <= X` so the support stays
/// clear of the periodic seam.
pub fn cutoff_chi(grid: &Arc<Grid>, support: f64) -> Result<Vec<f64>> {
    if !(support > 0.0 && support <= grid.half_width()) {
        return Err(CglError::Domain(format!(
            "cutoff support must satisfy 0 < A <= X = {}, got A = {support}",
            grid.half_width()
        )));
    }
    let half = 0.5 * support;
    Ok(grid
        .points()
        .iter()
        .map(|&x| {
            let r = x.abs();
            if r <= half {
                1.0
            } else if r >= support {
                0.0
            } else {
                let s = (support - r) / half; // 1 at inner edge, 0 at outer
                s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
            }
        })
        .collect())
}

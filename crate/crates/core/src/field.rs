//! Complex-valued fields sampled on a [`Grid`], with the real inner product
//! `<u, v> = Re int u conj(v) dx` that makes the state space a real Hilbert
//! space. All quadrature is the plain Riemann sum `dx * sum` — exact for
//! trigonometric polynomials on the periodic box.

use std::sync::Arc;

use crate::error::{CglError, Result};
use crate::grid::{Grid, C64};

#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field { grid: grid.clone(), values: vec![C64::default(); grid.n()] }
    }

    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(f64) -> C64) -> Field {
        let values = grid.points().iter().map(|&x| f(x)).collect();
        Field { grid: grid.clone(), values }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<C64>) -> Result<Field> {
        if values.len() != grid.n() {
            return Err(CglError::GridMismatch(format!(
                "field has {} samples but grid has {} points",
                values.len(),
                grid.n()
            )));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Gaussian bump `c * exp(-(x - center)^2 / (2 width^2))` scaled to a
    /// prescribed L2 norm; the stock smooth forcing profile.
    pub fn gaussian_bump(grid: &Arc<Grid>, center: f64, width: f64, l2_norm: f64) -> Field {
        let mut f = Field::from_fn(grid, |x| {
            let z = (x - center) / width;
            C64::new((-0.5 * z * z).exp(), 0.0)
        });
        let raw = f.l2_norm();
        if raw > 0.0 {
            let s = l2_norm / raw;
            for v in &mut f.values {
                *v *= s;
            }
        }
        f
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        self.grid.same_as(&other.grid)
    }

    /// Real inner product `Re int u conj(v) dx`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(CglError::grids("inner product"));
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(u, v)| (u * v.conj()).re).sum();
        Ok(dot * self.grid.dx())
    }

    /// `int |u|^2 dx`.
    pub fn l2_norm_sq(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        s * self.grid.dx()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// L2 norm of `w * u` for a real pointwise weight `w`.
    pub fn weighted_l2_norm_sq(&self, weight: &[f64]) -> Result<f64> {
        if weight.len() != self.values.len() {
            return Err(CglError::GridMismatch(format!(
                "weight table has {} entries, field has {}",
                weight.len(),
                self.values.len()
            )));
        }
        let s: f64 = self.values.iter().zip(weight).map(|(v, w)| w * w * v.norm_sqr()).sum();
        Ok(s * self.grid.dx())
    }

    /// Sobolev norm `(sum_m (1 + k_m^2)^s |c_m|^2 * 2X)^(1/2)`; with the
    /// unitary-transform convention this matches `int (1+xi^2)^s |Fu|^2 dxi`
    /// on the line for fields that are small near the box edge. `s = 0`
    /// recovers the L2 norm; `s` may be any finite real (negative smooths).
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(CglError::Domain(format!("Sobolev exponent must be finite, got {s}")));
        }
        let grid = &self.grid;
        let mut sc = grid.scratch();
        let mut coeffs = vec![C64::default(); grid.n()];
        grid.forward(&self.values, &mut coeffs, &mut sc);
        let sum: f64 = coeffs
            .iter()
            .zip(grid.wavenumbers())
            .map(|(c, &k)| (1.0 + k * k).powf(s) * c.norm_sqr())
            .sum();
        Ok((sum * 2.0 * grid.half_width()).sqrt())
    }

    /// Spectral derivative `du/dx`.
    pub fn derivative(&self) -> Field {
        let grid = &self.grid;
        let mut sc = grid.scratch();
        let mut coeffs = vec![C64::default(); grid.n()];
        grid.forward(&self.values, &mut coeffs, &mut sc);
        for (c, &k) in coeffs.iter_mut().zip(grid.wavenumbers()) {
            *c *= C64::new(0.0, k);
        }
        let mut out = Field::zeros(grid);
        grid.inverse(&coeffs, &mut out.values, &mut sc);
        out
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        if !self.same_grid(other) {
            return Err(CglError::grids("field addition"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        if !self.same_grid(other) {
            return Err(CglError::grids("field subtraction"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }

    pub fn scaled(&self, s: C64) -> Field {
        let values = self.values.iter().map(|v| v * s).collect();
        Field { grid: self.grid.clone(), values }
    }

    /// `true` when every sample is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

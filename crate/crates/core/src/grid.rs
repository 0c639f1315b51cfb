//! Uniform periodic grid on `[-X, X)` with cached FFT plans.
//!
//! Continuum fields on the line are truncated to a large symmetric box and
//! made periodic, so the Laplacian diagonalises over discrete plane waves
//! `exp(i k_m x)` with `k_m = pi m / X`, `m = -n/2 .. n/2 - 1`.
//!
//! Spectral coefficients here always mean `c_m` in
//! `u(x) = sum_m c_m exp(i k_m x)`. With grid points `x_j = -X + j dx` the
//! DFT picks up an alternating phase: `c_m = (-1)^m FFT(u)_m / n`, which is
//! folded into [`Grid::forward`]/[`Grid::inverse`] so callers never see raw
//! DFT bins. Plancherel then reads `int |u|^2 dx = 2X sum_m |c_m|^2`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CglError, Result};

pub type C64 = Complex64;

pub struct Grid {
    half_width: f64,
    n: usize,
    dx: f64,
    points: Vec<f64>,
    wavenumbers: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Grid {
    /// Build a grid with half-width `X` and `n` points (`n` a power of two,
    /// at least 64, so every FFT stays in the fast radix path and the basis
    /// modes used for forcing are always resolvable).
    pub fn new(half_width: f64, n: usize) -> Result<Arc<Grid>> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(CglError::Parameter(format!(
                "grid half-width must be positive and finite, got {half_width}"
            )));
        }
        if n < 64 || !n.is_power_of_two() {
            return Err(CglError::Parameter(format!(
                "grid size must be a power of two >= 64, got {n}"
            )));
        }
        let dx = 2.0 * half_width / n as f64;
        let points: Vec<f64> = (0..n).map(|j| -half_width + j as f64 * dx).collect();
        let wavenumbers: Vec<f64> = (0..n)
            .map(|i| {
                let m = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
                std::f64::consts::PI * m as f64 / half_width
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid { half_width, n, dx, points, wavenumbers, fwd, inv }))
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Physical sample locations `x_j = -X + j dx`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Wavenumbers in FFT bin order: `k_i = pi m_i / X` with `m_i = i` for
    /// `i < n/2` and `m_i = i - n` otherwise (Nyquist sits at `i = n/2`).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Largest integer mode index `m` such that both `+m` and `-m` are
    /// strictly below the Nyquist bin.
    pub fn max_resolvable_mode(&self) -> usize {
        self.n / 2 - 1
    }

    /// Workspace sized for this grid's transforms.
    pub fn scratch(&self) -> SpectralScratch {
        let len = self.fwd.get_outofplace_scratch_len().max(self.inv.get_outofplace_scratch_len());
        SpectralScratch { buf: vec![C64::default(); self.n], fft: vec![C64::default(); len] }
    }

    /// Physical samples -> plane-wave coefficients `c_m`.
    pub fn forward(&self, phys: &[C64], coeffs: &mut [C64], sc: &mut SpectralScratch) {
        assert_eq!(phys.len(), self.n, "physical buffer length");
        assert_eq!(coeffs.len(), self.n, "coefficient buffer length");
        sc.buf.copy_from_slice(phys);
        self.fwd.process_outofplace_with_scratch(&mut sc.buf, coeffs, &mut sc.fft);
        let inv_n = 1.0 / self.n as f64;
        for (i, c) in coeffs.iter_mut().enumerate() {
            let sign = if i & 1 == 0 { inv_n } else { -inv_n };
            *c *= sign;
        }
    }

    /// Plane-wave coefficients `c_m` -> physical samples.
    pub fn inverse(&self, coeffs: &[C64], phys: &mut [C64], sc: &mut SpectralScratch) {
        assert_eq!(coeffs.len(), self.n, "coefficient buffer length");
        assert_eq!(phys.len(), self.n, "physical buffer length");
        for (i, (dst, src)) in sc.buf.iter_mut().zip(coeffs).enumerate() {
            *dst = if i & 1 == 0 { *src } else { -*src };
        }
        self.inv.process_outofplace_with_scratch(&mut sc.buf, phys, &mut sc.fft);
    }

    /// `true` when `other` is the same discretisation.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.half_width == other.half_width
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("half_width", &self.half_width).field("n", &self.n).finish()
    }
}

/// Reusable transform buffers; one per worker, never shared across threads.
pub struct SpectralScratch {
    buf: Vec<C64>,
    fft: Vec<C64>,
}

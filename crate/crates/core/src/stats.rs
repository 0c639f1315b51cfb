//! Small statistical helpers shared by the experiment drivers: streaming
//! least squares, sample moments, medians, binomial intervals.

use serde::Serialize;

/// Streaming least-squares fit of `y` against `x`.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct LinearFit {
    n: f64,
    sx: f64,
    sx2: f64,
    sy: f64,
    sy2: f64,
    sxy: f64,
}

impl LinearFit {
    pub fn new() -> LinearFit {
        LinearFit::default()
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sx2 += x * x;
        self.sy += y;
        self.sy2 += y * y;
        self.sxy += x * y;
    }

    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0.0
    }

    pub fn slope(&self) -> Option<f64> {
        let denom = self.n * self.sx2 - self.sx * self.sx;
        (denom > 0.0).then(|| (self.n * self.sxy - self.sx * self.sy) / denom)
    }

    pub fn intercept(&self) -> Option<f64> {
        self.slope().map(|b| (self.sy - b * self.sx) / self.n)
    }

    /// Coefficient of determination of the fitted line.
    pub fn r_squared(&self) -> Option<f64> {
        let b = self.slope()?;
        let ss_tot = self.sy2 - self.sy * self.sy / self.n;
        if ss_tot <= 0.0 {
            return None;
        }
        let ss_xx = self.sx2 - self.sx * self.sx / self.n;
        Some((b * b * ss_xx / ss_tot).min(1.0))
    }
}

/// Mean, variance and standard error of a sample in one pass.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl SampleStats {
    pub fn from_slice(xs: &[f64]) -> Option<SampleStats> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(SampleStats { n: xs.len(), mean, variance, std_error: (variance / n).sqrt() })
    }
}

/// Median of an unsorted sample (copies and sorts).
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Wilson score interval at z = 1.96: `(p_hat, low, high)`.
pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64, f64) {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z = 1.96;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (p, (center - half).max(0.0), (center + half).min(1.0))
}

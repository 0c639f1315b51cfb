//! Experiment configuration: TOML sections for the grid, physics, noise,
//! control and run blocks, with every field defaulted to the reference
//! desk-scale setup. Parsing validates all parameter ranges and reports
//! the complete list of violations, each naming the condition breached.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use cgl_core::basis::TrigBasis;
use cgl_core::dynamics::{CglStepper, PhysParams};
use cgl_core::field::Field;
use cgl_core::functionals::StoppingParams;
use cgl_core::grid::{Grid, C64};
use cgl_core::noise::NoiseSpec;

pub const DT_MAX: f64 = 5e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simulate,
    Couple,
    Mixing,
    Tails,
    Poincare,
    Validate,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Couple => "couple",
            ExperimentKind::Mixing => "mixing",
            ExperimentKind::Tails => "tails",
            ExperimentKind::Poincare => "poincare",
            ExperimentKind::Validate => "validate",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    /// half-width X of the computational interval [-X, X]
    pub half_width: f64,
    /// number of collocation points (a power of two)
    pub n: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { half_width: 40.0, n: 1024 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum ForcingProfile {
    Zero,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingBlock {
    pub profile: ForcingProfile,
    pub center: f64,
    pub width: f64,
    pub l2_norm: f64,
}

impl Default for ForcingBlock {
    fn default() -> Self {
        ForcingBlock { profile: ForcingProfile::Gaussian, center: 0.0, width: 1.0, l2_norm: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsBlock {
    /// linear damping a
    pub damping: f64,
    /// real part of the viscosity (must be positive)
    pub viscosity_re: f64,
    pub viscosity_im: f64,
    /// real part of the nonlinearity coefficient (must be nonnegative)
    pub nonlin_re: f64,
    pub nonlin_im: f64,
    /// nonlinearity exponent q
    pub nonlin_power: f64,
    pub forcing: ForcingBlock,
    /// 2/3-rule spectral filter on the nonlinear term (sensitivity probe)
    pub dealias: bool,
}

impl Default for PhysicsBlock {
    fn default() -> Self {
        PhysicsBlock {
            damping: 1.0,
            viscosity_re: 1.0,
            viscosity_im: 0.5,
            nonlin_re: 1.0,
            nonlin_im: 1.0,
            nonlin_power: 1.0,
            forcing: ForcingBlock::default(),
            dealias: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBlock {
    /// power-law amplitude b0: b_j = b0 (1 + j)^(-decay)
    pub amplitude: f64,
    /// power-law exponent p (> 3/2 for a finite wavenumber-weighted sum)
    pub decay: f64,
    /// number of forced modes M
    pub modes: usize,
    /// explicit per-mode coefficients overriding the power law
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock { amplitude: 1.0, decay: 2.0, modes: 64, coefficients: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlBlock {
    /// number of controlled directions N
    pub rank: usize,
    /// stopping-envelope rate K (0 = calibrate from a pilot ensemble)
    pub rate: f64,
    /// additional envelope rate margin L
    pub rate_margin: f64,
    /// weight M on the initial mass in the envelope
    pub init_weight: f64,
    /// envelope offset rho
    pub offset: f64,
}

impl Default for ControlBlock {
    fn default() -> Self {
        ControlBlock { rank: 32, rate: 0.0, rate_margin: 1.0, init_weight: 4.0, offset: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub dt: f64,
    pub horizon: f64,
    pub ensemble_size: u64,
    pub seed: u64,
    /// series decimation stride (0 = choose automatically)
    pub record_every: usize,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock { dt: 1e-3, horizon: 10.0, ensemble_size: 100, seed: 1, record_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitBlock {
    /// L2 norm of the initial bump (0 = start from rest)
    pub norm: f64,
    pub center: f64,
    pub width: f64,
    /// L2 norm d of the second trajectory's initial offset (pair runs)
    pub pair_offset: f64,
}

impl Default for InitBlock {
    fn default() -> Self {
        InitBlock { norm: 5.0, center: 0.0, width: 1.0, pair_offset: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// experiment kind; the subcommand wins when both are given
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    pub grid: GridBlock,
    pub physics: PhysicsBlock,
    pub noise: NoiseBlock,
    pub control: ControlBlock,
    pub run: RunBlock,
    pub init: InitBlock,
}

impl ExperimentConfig {
    /// Collect every range violation; an empty list means the config is
    /// admissible.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let g = &self.grid;
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            v.push(format!("grid.half_width must be positive and finite, got {}", g.half_width));
        }
        if g.n < 64 || !g.n.is_power_of_two() {
            v.push(format!("grid.n must be a power of two of at least 64, got {}", g.n));
        }
        let p = &self.physics;
        if !(p.damping > 0.0 && p.damping.is_finite()) {
            v.push(format!("physics.damping violates a > 0, got {}", p.damping));
        }
        if !(p.viscosity_re > 0.0 && p.viscosity_re.is_finite()) {
            v.push(format!("physics.viscosity_re violates Re ν > 0, got {}", p.viscosity_re));
        }
        if !p.viscosity_im.is_finite() {
            v.push(format!("physics.viscosity_im must be finite, got {}", p.viscosity_im));
        }
        if !(p.nonlin_re >= 0.0 && p.nonlin_re.is_finite()) {
            v.push(format!("physics.nonlin_re violates Re α ≥ 0, got {}", p.nonlin_re));
        }
        if !p.nonlin_im.is_finite() {
            v.push(format!("physics.nonlin_im must be finite, got {}", p.nonlin_im));
        }
        if !(p.nonlin_power > 0.0 && p.nonlin_power < 2.0) {
            v.push(format!("physics.nonlin_power violates q ∈ (0, 2), got {}", p.nonlin_power));
        }
        if !(p.forcing.width > 0.0 && p.forcing.width.is_finite()) {
            v.push(format!("physics.forcing.width must be positive, got {}", p.forcing.width));
        }
        if !(p.forcing.l2_norm >= 0.0 && p.forcing.l2_norm.is_finite()) {
            v.push(format!(
                "physics.forcing.l2_norm must be nonnegative, got {}",
                p.forcing.l2_norm
            ));
        }
        if !p.forcing.center.is_finite() {
            v.push(format!("physics.forcing.center must be finite, got {}", p.forcing.center));
        }
        let nz = &self.noise;
        if nz.modes == 0 {
            v.push("noise.modes must be at least 1".into());
        }
        match &nz.coefficients {
            None => {
                if !(nz.amplitude > 0.0 && nz.amplitude.is_finite()) {
                    v.push(format!(
                        "noise.amplitude must be positive and finite, got {}",
                        nz.amplitude
                    ));
                }
                // Negated form so that NaN fails validation along with small exponents.
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(nz.decay > 1.5) {
                    v.push(format!(
                        "noise.decay = {} makes the wavenumber-weighted sum Σ b_j² k_j² \
                         diverge as the mode count grows; the decay exponent must exceed 3/2",
                        nz.decay
                    ));
                }
            }
            Some(cs) => {
                if cs.is_empty() {
                    v.push("noise.coefficients must not be empty".into());
                }
                for (i, &c) in cs.iter().enumerate() {
                    if !(c >= 0.0 && c.is_finite()) {
                        v.push(format!(
                            "noise.coefficients[{i}] must be nonnegative and finite, got {c}"
                        ));
                        break;
                    }
                }
            }
        }
        let c = &self.control;
        if c.rank > 0 {
            let effective = self.effective_coefficients();
            for j in 1..=c.rank {
                let b = effective.get(j - 1).copied().unwrap_or(0.0);
                if b <= 0.0 {
                    v.push(format!(
                        "noise coefficient b_{j} = {b} but the control rank is {}: every \
                         controlled mode must receive noise",
                        c.rank
                    ));
                    break;
                }
            }
        }
        if g.n >= 64 && g.n.is_power_of_two() {
            let resolvable = g.n - 2;
            let needed = self.effective_coefficients().len().max(c.rank);
            if needed > resolvable {
                v.push(format!(
                    "the run needs {needed} trigonometric directions (forced modes and \
                     control rank) but a {}-point grid resolves only {resolvable}",
                    g.n
                ));
            }
        }
        for (name, val) in [
            ("control.rate", c.rate),
            ("control.rate_margin", c.rate_margin),
            ("control.init_weight", c.init_weight),
            ("control.offset", c.offset),
        ] {
            if !(val >= 0.0 && val.is_finite()) {
                v.push(format!("{name} must be nonnegative and finite, got {val}"));
            }
        }
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt <= DT_MAX) {
            v.push(format!(
                "run.dt must lie in (0, {DT_MAX}] (empirical stability bound for the \
                 explicit nonlinear term), got {}",
                r.dt
            ));
        }
        if !(r.horizon >= r.dt && r.horizon.is_finite()) {
            v.push(format!("run.horizon must be finite and at least one step, got {}", r.horizon));
        }
        if r.ensemble_size == 0 {
            v.push("run.ensemble_size must be at least 1".into());
        }
        let i = &self.init;
        if !(i.norm >= 0.0 && i.norm.is_finite()) {
            v.push(format!("init.norm must be nonnegative and finite, got {}", i.norm));
        }
        if !(i.width > 0.0 && i.width.is_finite()) {
            v.push(format!("init.width must be positive, got {}", i.width));
        }
        if !(i.pair_offset > 0.0 && i.pair_offset.is_finite()) {
            v.push(format!("init.pair_offset must be positive, got {}", i.pair_offset));
        }
        if !i.center.is_finite() {
            v.push(format!("init.center must be finite, got {}", i.center));
        }
        v
    }

    /// The noise coefficients the run will actually use.
    pub fn effective_coefficients(&self) -> Vec<f64> {
        match &self.noise.coefficients {
            Some(cs) => cs.clone(),
            None => (1..=self.noise.modes)
                .map(|j| self.noise.amplitude * ((1 + j) as f64).powf(-self.noise.decay))
                .collect(),
        }
    }

    pub fn build_grid(&self) -> cgl_core::Result<Arc<Grid>> {
        Grid::new(self.grid.half_width, self.grid.n)
    }

    pub fn build_forcing(&self, grid: &Arc<Grid>) -> Field {
        let f = &self.physics.forcing;
        match f.profile {
            ForcingProfile::Zero => Field::zeros(grid),
            ForcingProfile::Gaussian => {
                if f.l2_norm == 0.0 {
                    Field::zeros(grid)
                } else {
                    Field::gaussian_bump(grid, f.center, f.width, f.l2_norm)
                }
            }
        }
    }

    pub fn build_params(&self, grid: &Arc<Grid>) -> PhysParams {
        let p = &self.physics;
        PhysParams {
            damping: p.damping,
            viscosity: C64::new(p.viscosity_re, p.viscosity_im),
            nonlin_coeff: C64::new(p.nonlin_re, p.nonlin_im),
            nonlin_power: p.nonlin_power,
            forcing: self.build_forcing(grid),
        }
    }

    pub fn build_stepper(&self, grid: &Arc<Grid>) -> cgl_core::Result<CglStepper> {
        let stepper = CglStepper::new(grid, self.build_params(grid), self.run.dt)?;
        Ok(if self.physics.dealias { stepper.with_dealiasing() } else { stepper })
    }

    pub fn build_noise(&self) -> cgl_core::Result<NoiseSpec> {
        match &self.noise.coefficients {
            Some(cs) => NoiseSpec::explicit(cs.clone()),
            None => NoiseSpec::power_law(self.noise.amplitude, self.noise.decay, self.noise.modes),
        }
    }

    /// Basis spanning both the forced and the controlled directions.
    pub fn build_basis(&self, grid: &Arc<Grid>) -> cgl_core::Result<TrigBasis> {
        let count = self.effective_coefficients().len().max(self.control.rank).max(1);
        TrigBasis::new(grid, count)
    }

    pub fn stopping(&self) -> StoppingParams {
        StoppingParams {
            rate: self.control.rate,
            rate_margin: self.control.rate_margin,
            init_weight: self.control.init_weight,
            offset: self.control.offset,
        }
    }

    pub fn initial_field(&self, grid: &Arc<Grid>) -> Field {
        if self.init.norm == 0.0 {
            Field::zeros(grid)
        } else {
            Field::gaussian_bump(grid, self.init.center, self.init.width, self.init.norm)
        }
    }

    /// Second leg of a pair: the initial field plus a bump of norm
    /// `init.pair_offset` shifted one width away.
    pub fn pair_partner_field(&self, grid: &Arc<Grid>) -> Field {
        let off = Field::gaussian_bump(
            grid,
            self.init.center + self.init.width,
            self.init.width,
            self.init.pair_offset,
        );
        self.initial_field(grid).add(&off).expect("same grid")
    }

    /// Canonical serialized form (the echo written next to every run).
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.canonical_toml().as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and validate; returns either the config or the full list of
/// violations.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let cfg: ExperimentConfig = match toml::from_str(text) {
        Ok(c) => c,
        Err(e) => return Err(vec![format!("configuration is not well-formed: {e}")]),
    };
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(violations)
    }
}

//! Experiment executors: one per subcommand, all writing the same layout —
//! a fresh run directory holding the canonical config echo, a machine
//! report, and per-kind CSV tables. Reports contain no wall-clock data so
//! reruns with the same config and seed are byte-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

use cgl_core::basis::{truncated_poincare_epsilon, TrigBasis};
use cgl_core::coupling::{run_novikov_ensemble, NovikovConfig};
use cgl_core::estimators::{
    check_energy_tails, check_moment_bound, check_stopping_tails, estimate_mixing_rate,
    pilot_energy_slope, TestFamily,
};
use cgl_core::noise::{forcing_alignment_partial_sums, sample_increment};
use cgl_core::snapshot;
use cgl_core::stats::{median, SampleStats};
use cgl_core::validate::run_self_checks;
use cgl_core::CglError;

use crate::config::{parse_config, ExperimentConfig, ExperimentKind};

pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_BLOWUP: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug)]
pub enum RunError {
    /// Inadmissible configuration or a self-check failure.
    Validation(Vec<String>),
    /// The solution crossed the blow-up guard.
    Blowup(String),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => EXIT_VALIDATION,
            RunError::Blowup(_) => EXIT_BLOWUP,
            RunError::Io(_) => EXIT_IO,
        }
    }

    pub fn report(&self) -> String {
        match self {
            RunError::Validation(msgs) => {
                let mut out = String::from("configuration rejected:\n");
                for m in msgs {
                    out.push_str("  - ");
                    out.push_str(m);
                    out.push('\n');
                }
                out
            }
            RunError::Blowup(m) => format!("integration aborted: {m}\n"),
            RunError::Io(e) => format!("i/o failure: {e}\n"),
        }
    }
}

impl From<CglError> for RunError {
    fn from(e: CglError) -> Self {
        match e {
            CglError::BlowUp { .. } => RunError::Blowup(e.to_string()),
            other => RunError::Validation(vec![other.to_string()]),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Resolved command line: the subcommand plus the shared flags.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub kind: ExperimentKind,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_parent: PathBuf,
}

/// Load, validate and resolve the configuration for this invocation:
/// the subcommand fixes the kind and the seed flag overrides the file.
pub fn resolve_config(inv: &Invocation) -> Result<ExperimentConfig, RunError> {
    let text = match &inv.config_path {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text).map_err(RunError::Validation)?;
    if let Some(declared) = cfg.kind {
        if declared != inv.kind {
            return Err(RunError::Validation(vec![format!(
                "the configuration declares kind \"{declared}\" but the \"{}\" subcommand \
                 was invoked",
                inv.kind
            )]));
        }
    }
    cfg.kind = Some(inv.kind);
    if let Some(seed) = inv.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

/// Run the experiment end to end; returns the process exit code.
pub fn execute(inv: &Invocation) -> Result<i32, RunError> {
    let cfg = resolve_config(inv)?;
    let started = Instant::now();
    let dir = prepare_out_dir(&inv.out_parent, inv.kind, &cfg.hash())?;
    fs::write(dir.join("config.toml"), cfg.canonical_toml())?;

    let worker_note = match inv.workers {
        Some(w) => format!("{w}"),
        None => "default".into(),
    };
    println!("{} -> {} (seed {}, workers {})", inv.kind, dir.display(), cfg.run.seed, worker_note);
    warn_if_forcing_expands_slowly(&cfg);

    let body = || -> Result<(serde_json::Value, i32), RunError> {
        match inv.kind {
            ExperimentKind::Simulate => run_simulate(&cfg, &dir).map(|r| (r, 0)),
            ExperimentKind::Couple => run_couple(&cfg, &dir).map(|r| (r, 0)),
            ExperimentKind::Mixing => run_mixing(&cfg, &dir).map(|r| (r, 0)),
            ExperimentKind::Tails => run_tails(&cfg, &dir).map(|r| (r, 0)),
            ExperimentKind::Poincare => run_poincare(&cfg, &dir).map(|r| (r, 0)),
            ExperimentKind::Validate => run_validate(&cfg),
        }
    };
    let (report, code) = match inv.workers {
        Some(w) if w > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| RunError::Validation(vec![format!("worker pool: {e}")]))?;
            pool.install(body)?
        }
        _ => body()?,
    };

    let mut full = json!({
        "kind": inv.kind.to_string(),
        "config_hash": cfg.hash(),
        "seed": cfg.run.seed,
    });
    merge(&mut full, report);
    let mut f = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut f, &full).map_err(std::io::Error::from)?;
    f.write_all(b"\n")?;
    f.flush()?;

    println!("wall clock: {:.2}s", started.elapsed().as_secs_f64());
    Ok(code)
}

/// The weighted-energy machinery needs the deterministic forcing to pair
/// summably with the trigonometric directions: `sum_j |<h, e_j>| |e_j|_{H1}`
/// should have settled well before the resolved truncation. There is no
/// sharp threshold, so a slowly converging expansion only warns.
fn warn_if_forcing_expands_slowly(cfg: &ExperimentConfig) {
    let sums = (|| -> cgl_core::Result<Vec<f64>> {
        let grid = cfg.build_grid()?;
        let h = cfg.build_forcing(&grid);
        if h.l2_norm_sq() == 0.0 {
            return Ok(Vec::new());
        }
        let basis = TrigBasis::new(&grid, grid.n() / 2 - 1)?;
        forcing_alignment_partial_sums(&h, &basis)
    })()
    .unwrap_or_default();
    if sums.len() < 8 {
        return;
    }
    let total = sums[sums.len() - 1];
    let tail = total - sums[3 * sums.len() / 4];
    if tail > 0.01 * total {
        eprintln!(
            "warning: the forcing expands slowly against the noise directions \
             ({:.1}% of the H1-weighted pairing sum accrued in the last quarter \
             of the {} resolved modes); weighted-energy diagnostics may be \
             unreliable at this resolution",
            100.0 * tail / total,
            sums.len()
        );
    }
}

fn merge(base: &mut serde_json::Value, extra: serde_json::Value) {
    if let (Some(b), serde_json::Value::Object(e)) = (base.as_object_mut(), extra) {
        for (k, v) in e {
            b.insert(k, v);
        }
    }
}

/// Fresh directory `{kind}-{hash8}-{unix seconds}` under `parent`, with a
/// numeric suffix on collision.
fn prepare_out_dir(parent: &Path, kind: ExperimentKind, hash: &str) -> Result<PathBuf, RunError> {
    fs::create_dir_all(parent)?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let stem = format!("{kind}-{}-{secs}", &hash[..8]);
    for k in 0..1000 {
        let name = if k == 0 { stem.clone() } else { format!("{stem}-{k}") };
        let candidate = parent.join(name);
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(RunError::Io(e)),
        }
    }
    Err(RunError::Io(std::io::Error::other("could not find a free run directory name")))
}

fn csv_writer(dir: &Path, name: &str, header: &str) -> Result<BufWriter<File>, RunError> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    writeln!(w, "{header}")?;
    Ok(w)
}

struct Row<'a, 'b> {
    w: &'a mut BufWriter<File>,
    sep: &'b str,
    first: bool,
}

impl<'a, 'b> Row<'a, 'b> {
    fn new(w: &'a mut BufWriter<File>) -> Row<'a, 'b> {
        Row { w, sep: ",", first: true }
    }

    fn num(&mut self, x: f64) -> Result<&mut Self, RunError> {
        if !self.first {
            write!(self.w, "{}", self.sep)?;
        }
        self.first = false;
        write!(self.w, "{x:.16e}")?;
        Ok(self)
    }

    fn int(&mut self, x: u64) -> Result<&mut Self, RunError> {
        if !self.first {
            write!(self.w, "{}", self.sep)?;
        }
        self.first = false;
        write!(self.w, "{x}")?;
        Ok(self)
    }

    fn end(&mut self) -> Result<(), RunError> {
        writeln!(self.w)?;
        Ok(())
    }
}

fn steps_for(cfg: &ExperimentConfig) -> u64 {
    ((cfg.run.horizon / cfg.run.dt).round() as u64).max(1)
}

/// Single-trajectory series plus ensemble statistics of the endpoint.
fn run_simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<serde_json::Value, RunError> {
    use rayon::prelude::*;

    let grid = cfg.build_grid()?;
    let stepper = cfg.build_stepper(&grid)?;
    let basis = cfg.build_basis(&grid)?;
    let spec = cfg.build_noise()?;
    let u0 = cfg.initial_field(&grid);
    let n_steps = steps_for(cfg);
    let stride = if cfg.run.record_every > 0 {
        cfg.run.record_every as u64
    } else {
        (n_steps / 1000).max(1)
    };

    // trajectory 0 twice over: once here for the decimated series and the
    // final snapshot, once more inside the ensemble sweep below
    let mut st = stepper.init_state(&u0, true)?;
    let mut sc = stepper.scratch();
    let mut stream = spec.stream(cfg.run.seed, 0);
    let mut series = csv_writer(dir, "series.csv", "t,norm_sq,energy,weighted,weighted_tail")?;
    let mut rows = 0u64;
    let mut record = |st: &cgl_core::dynamics::TrajectoryState| -> Result<(), RunError> {
        let lv = stepper.energy_levels(st).expect("tracking");
        Row::new(&mut series)
            .num(st.t())?
            .num(st.norm_sq())?
            .num(lv.plain)?
            .num(lv.weighted)?
            .num(lv.weighted_tail)?
            .end()?;
        rows += 1;
        Ok(())
    };
    record(&st)?;
    for step in 0..n_steps {
        let incr = sample_increment(&spec, &mut stream, step, stepper.dt())?;
        stepper.step(&mut st, &mut sc, Some((&basis, &incr)))?;
        if (step + 1).is_multiple_of(stride) || step + 1 == n_steps {
            record(&st)?;
        }
    }
    series.flush()?;

    let mut bin = BufWriter::new(File::create(dir.join("final_state.bin"))?);
    snapshot::write_record(&mut bin, st.t(), st.field().values())?;
    bin.flush()?;
    let sidecar = json!({
        "file": "final_state.bin",
        "t": st.t(),
        "n": grid.n(),
        "half_width": grid.half_width(),
        "config_hash": cfg.hash(),
    });
    fs::write(
        dir.join("final_state.json"),
        serde_json::to_string_pretty(&sidecar).map_err(std::io::Error::from)? + "\n",
    )?;

    let finals: Vec<f64> = (0..cfg.run.ensemble_size)
        .into_par_iter()
        .map(|traj| -> cgl_core::Result<f64> {
            let mut st = stepper.init_state(&u0, false)?;
            let mut sc = stepper.scratch();
            let mut stream = spec.stream(cfg.run.seed, traj);
            for step in 0..n_steps {
                let incr = sample_increment(&spec, &mut stream, step, stepper.dt())?;
                stepper.step(&mut st, &mut sc, Some((&basis, &incr)))?;
            }
            Ok(st.norm_sq())
        })
        .collect::<cgl_core::Result<_>>()?;
    let stats = SampleStats::from_slice(&finals).expect("nonempty ensemble");

    println!(
        "final |u|^2 over {} paths: mean {:.6e} (se {:.2e})",
        stats.n, stats.mean, stats.std_error
    );
    Ok(json!({
        "ensemble_size": cfg.run.ensemble_size,
        "horizon": cfg.run.horizon,
        "dt": cfg.run.dt,
        "series_rows": rows,
        "final_norm_sq_mean": stats.mean,
        "final_norm_sq_se": stats.std_error,
    }))
}

/// Stopped coupled pairs: contraction fit plus the likelihood ledger.
fn run_couple(cfg: &ExperimentConfig, dir: &Path) -> Result<serde_json::Value, RunError> {
    let grid = cfg.build_grid()?;
    let stepper = cfg.build_stepper(&grid)?;
    let basis = cfg.build_basis(&grid)?;
    let spec = cfg.build_noise()?;
    let u0 = cfg.initial_field(&grid);
    let v0 = cfg.pair_partner_field(&grid);

    let (rate, calibrated) = envelope_rate(cfg, &stepper, &basis, &spec, &u0)?;
    let mut stopping = cfg.stopping();
    stopping.rate = rate;
    let pair_cfg = NovikovConfig { n_ctrl: cfg.control.rank, horizon: cfg.run.horizon, stopping };
    let paths = run_novikov_ensemble(
        &stepper,
        &basis,
        &spec,
        &pair_cfg,
        &u0,
        &v0,
        cfg.run.seed,
        cfg.run.ensemble_size,
    )?;

    let mut w = csv_writer(
        dir,
        "pairs.csv",
        "pair,d,n_ctrl,w0_norm_sq,w_end_norm_sq,c_prime,success,tau,triggered,int_a_sq,log_density",
    )?;
    let d = cfg.init.pair_offset;
    for (k, p) in paths.iter().enumerate() {
        use cgl_core::functionals::StoppingOutcome::*;
        let tau = match p.tau {
            Triggered(t) | NotWithinHorizon(t) => t,
        };
        Row::new(&mut w)
            .int(k as u64)?
            .num(d)?
            .int(cfg.control.rank as u64)?
            .num(p.w0_norm_sq)?
            .num(p.w_end_norm_sq)?
            .num(-p.rate)?
            .int(u64::from(p.rate < 0.0))?
            .num(tau)?
            .int(u64::from(p.tau.is_triggered()))?
            .num(p.int_a_sq)?
            .num(p.log_density)?
            .end()?;
    }
    w.flush()?;

    let c_primes: Vec<f64> = paths.iter().map(|p| -p.rate).collect();
    let densities: Vec<f64> = paths.iter().map(|p| p.log_density.exp()).collect();
    let density = SampleStats::from_slice(&densities).expect("nonempty ensemble");
    let median_c = median(&c_primes).expect("nonempty ensemble");
    let success = c_primes.iter().filter(|c| **c > 0.0).count() as f64 / paths.len() as f64;
    let triggered =
        paths.iter().filter(|p| p.tau.is_triggered()).count() as f64 / paths.len() as f64;

    println!(
        "{} pairs: median c' {:.4}, success {:.2}, E[density] {:.4} (se {:.2e})",
        paths.len(),
        median_c,
        success,
        density.mean,
        density.std_error
    );
    Ok(json!({
        "n_pairs": paths.len(),
        "pair_offset": d,
        "control_rank": cfg.control.rank,
        "envelope_rate": rate,
        "envelope_rate_calibrated": calibrated,
        "median_c_prime": median_c,
        "success_fraction": success,
        "triggered_fraction": triggered,
        "mean_density": density.mean,
        "mean_density_se": density.std_error,
    }))
}

/// Proxy dual-Lipschitz distance between two initial laws over a grid of
/// probe times.
fn run_mixing(cfg: &ExperimentConfig, dir: &Path) -> Result<serde_json::Value, RunError> {
    let grid = cfg.build_grid()?;
    let stepper = cfg.build_stepper(&grid)?;
    let basis = cfg.build_basis(&grid)?;
    let spec = cfg.build_noise()?;
    let u0_a = cfg.initial_field(&grid);
    let u0_b = cgl_core::field::Field::zeros(&grid);

    let n_steps = steps_for(cfg);
    let n_probe = 20u64.min(n_steps).max(1);
    let mut times: Vec<f64> = Vec::new();
    let mut last_step = 0u64;
    for i in 1..=n_probe {
        let step = ((n_steps * i) / n_probe).max(1);
        if step > last_step {
            times.push(step as f64 * cfg.run.dt);
            last_step = step;
        }
    }
    let band = basis.len().min(16);
    let family = TestFamily::standard(&grid, &basis, band, 8, cfg.run.seed)?;
    let report = estimate_mixing_rate(
        &stepper,
        &basis,
        &spec,
        &family,
        &u0_a,
        &u0_b,
        &times,
        cfg.run.ensemble_size,
        cfg.run.seed,
    )?;

    let mut w = csv_writer(dir, "distances.csv", "t,distance,noise_floor,floor_limited")?;
    for p in &report.points {
        Row::new(&mut w)
            .num(p.t)?
            .num(p.distance)?
            .num(p.noise_floor)?
            .int(u64::from(p.floor_limited))?
            .end()?;
    }
    w.flush()?;

    match (report.kappa_hat, report.r_squared) {
        (Some(k), Some(r2)) => println!(
            "distance decay over {} probes: kappa {:.4} (r^2 {:.3}, {} fit points)",
            report.points.len(),
            k,
            r2,
            report.fit_points
        ),
        _ => println!(
            "distance decay over {} probes: too few usable points for a fit",
            report.points.len()
        ),
    }
    Ok(json!({
        "ensemble_size": report.ensemble_size,
        "family_size": report.family_size,
        "probe_count": report.points.len(),
        "kappa_hat": report.kappa_hat,
        "r_squared": report.r_squared,
        "fit_points": report.fit_points,
    }))
}

/// Calibrated envelope rate: a pilot ensemble when the configured rate is
/// zero, otherwise the configured value.
fn envelope_rate(
    cfg: &ExperimentConfig,
    stepper: &cgl_core::dynamics::CglStepper,
    basis: &cgl_core::basis::TrigBasis,
    spec: &cgl_core::noise::NoiseSpec,
    u0: &cgl_core::field::Field,
) -> Result<(f64, bool), RunError> {
    if cfg.control.rate > 0.0 {
        return Ok((cfg.control.rate, false));
    }
    let pilot_horizon = cfg.run.horizon.min(5.0).max(cfg.run.dt);
    let slope =
        pilot_energy_slope(stepper, basis, spec, u0, pilot_horizon, 50, cfg.run.seed ^ 0x9e3779b9)?;
    Ok((1.5 * slope.max(0.0), true))
}

/// Tail frequencies of the weighted-energy supremum and of the stopping
/// time.
fn run_tails(cfg: &ExperimentConfig, dir: &Path) -> Result<serde_json::Value, RunError> {
    let grid = cfg.build_grid()?;
    let stepper = cfg.build_stepper(&grid)?;
    let basis = cfg.build_basis(&grid)?;
    let spec = cfg.build_noise()?;
    let u0 = cfg.initial_field(&grid);

    let (rate, calibrated) = envelope_rate(cfg, &stepper, &basis, &spec, &u0)?;
    let rho = cfg.control.offset.max(1e-6);
    let rho_list = [rho, 2.0 * rho, 4.0 * rho];
    let energy = check_energy_tails(
        &stepper,
        &basis,
        &spec,
        &u0,
        rate,
        cfg.control.init_weight,
        &rho_list,
        cfg.run.horizon,
        cfg.run.ensemble_size,
        cfg.run.seed,
    )?;
    let mut w = csv_writer(dir, "energy_tails.csv", "rho,frequency")?;
    for (r, f) in energy.offsets.iter().zip(&energy.frequencies) {
        Row::new(&mut w).num(*r)?.num(*f)?.end()?;
    }
    w.flush()?;

    let mut stopping = cfg.stopping();
    stopping.rate = rate;
    let l_list: Vec<f64> = [0.125, 0.25, 0.5].iter().map(|f| f * cfg.run.horizon).collect();
    let stop = check_stopping_tails(
        &stepper,
        &basis,
        &spec,
        &u0,
        &stopping,
        &l_list,
        cfg.run.horizon,
        cfg.run.ensemble_size,
        cfg.run.seed + 1,
    )?;
    let mut w = csv_writer(dir, "stopping_tails.csv", "l,frequency")?;
    for (l, f) in stop.l_values.iter().zip(&stop.frequencies) {
        Row::new(&mut w).num(*l)?.num(*f)?.end()?;
    }
    w.flush()?;

    if energy.vacuous {
        println!("warning: no path exceeded the smallest energy offset; tail check is vacuous");
    }
    println!(
        "energy tails {}, gamma {:?}; stopping tails {} ({} of {} triggered)",
        if energy.pass { "monotone" } else { "NOT monotone" },
        energy.gamma_hat,
        if stop.pass { "monotone" } else { "NOT monotone" },
        stop.n_triggered,
        cfg.run.ensemble_size,
    );
    Ok(json!({
        "envelope_rate": rate,
        "envelope_rate_calibrated": calibrated,
        "energy": {
            "offsets": energy.offsets,
            "frequencies": energy.frequencies,
            "gamma_hat": energy.gamma_hat,
            "pass": energy.pass,
            "vacuous": energy.vacuous,
        },
        "stopping": {
            "l_values": stop.l_values,
            "frequencies": stop.frequencies,
            "n_triggered": stop.n_triggered,
            "slope": stop.slope,
            "pass": stop.pass,
        },
    }))
}

/// Sampled tail constant of the spectral truncation on band-limited bumps.
fn run_poincare(cfg: &ExperimentConfig, dir: &Path) -> Result<serde_json::Value, RunError> {
    let grid = cfg.build_grid()?;
    let basis = cfg.build_basis(&grid)?;
    let support = cfg.grid.half_width / 2.0;
    let band = basis.len();
    let table: Vec<usize> =
        [4usize, 8, 16, 32, 64].iter().copied().filter(|n| *n <= band).collect();
    if table.is_empty() {
        return Err(RunError::Validation(vec![format!(
            "the truncation table needs at least 4 basis directions, got {band}"
        )]));
    }

    let mut w = csv_writer(dir, "poincare.csv", "n_modes,epsilon")?;
    let mut rows = Vec::new();
    for &n in &table {
        let eps = truncated_poincare_epsilon(&basis, n, support, 1.0, band, 500, cfg.run.seed)?;
        Row::new(&mut w).int(n as u64)?.num(eps)?.end()?;
        rows.push((n, eps));
    }
    w.flush()?;

    let monotone = rows.windows(2).all(|p| p[1].1 <= p[0].1 + 1e-12);
    let last = rows.last().expect("nonempty table");
    println!(
        "epsilon({}) = {:.4} over {} truncation levels ({})",
        last.0,
        last.1,
        rows.len(),
        if monotone { "nonincreasing" } else { "NOT monotone" }
    );
    Ok(json!({
        "support": support,
        "sobolev_s": 1.0,
        "samples": 500,
        "levels": rows.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
        "epsilons": rows.iter().map(|(_, e)| *e).collect::<Vec<_>>(),
        "monotone": monotone,
    }))
}

/// Deterministic self-checks of the numerical kernels; exit 3 when any
/// fails.
fn run_validate(cfg: &ExperimentConfig) -> Result<(serde_json::Value, i32), RunError> {
    let checks = run_self_checks();
    let mut all = true;
    for c in &checks {
        if c.pass {
            println!("PASS {}", c.name);
        } else {
            all = false;
            println!("FAIL {} — {}", c.name, c.detail);
        }
    }
    println!(
        "{} of {} self-checks passed; configuration admissible (hash {})",
        checks.iter().filter(|c| c.pass).count(),
        checks.len(),
        &cfg.hash()[..8]
    );
    let report = json!({
        "checks": checks
            .iter()
            .map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail}))
            .collect::<Vec<_>>(),
        "all_pass": all,
    });
    Ok((report, if all { 0 } else { EXIT_VALIDATION }))
}

/// Moment-bound sweep used by the library consumers; exposed here so the
/// binary and the tests share one entry point.
pub fn moment_bound_for(
    cfg: &ExperimentConfig,
    times: &[f64],
) -> Result<cgl_core::estimators::MomentBoundReport, RunError> {
    let grid = cfg.build_grid()?;
    let stepper = cfg.build_stepper(&grid)?;
    let basis = cfg.build_basis(&grid)?;
    let spec = cfg.build_noise()?;
    let u0 = cfg.initial_field(&grid);
    Ok(check_moment_bound(
        &stepper,
        &basis,
        &spec,
        &u0,
        times,
        cfg.run.ensemble_size,
        cfg.run.seed,
    )?)
}

//! Time integration: explicit update for the density with an adaptive CFL
//! step, backward-Euler solve for the nutrient, positivity accounting,
//! diagnostics emission and steady-state detection.

use crate::dualnorm::dual_norm;
use crate::error::Error;
use crate::functionals::{compute_record, DiagnosticsRecord, FunctionalConfig};
use crate::grid::{integrate, CompensatedSum, Field};
use crate::linsolve::{solve_v_system, CG_RELATIVE_TOLERANCE};
use crate::model::{rhs_u, stable_dt_parts, v_implicit_operator, ClipPolicy, Params, State};

/// Bookkeeping for a single step.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub dt: f64,
    /// Total |negative u| zeroed, in density·volume units.
    pub mass_clipped: f64,
    pub solve_iterations: usize,
    pub solve_residual: f64,
    pub max_u: f64,
    pub min_u: f64,
    pub max_v: f64,
    pub min_v: f64,
    /// ∫v lost to consumption this step (telescoped, clamped at 0).
    pub consumed_v_mass: f64,
    /// dt·ℓ·∫u·v evaluated on the pre-step state.
    pub produced_u_mass: f64,
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    Steady,
    Instability,
    RegimeViolation,
}

/// Completed trajectory with its diagnostics series.
#[derive(Debug)]
pub struct RunResult {
    pub final_state: State,
    pub records: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    /// First time the steady detector fired, whether or not it stopped the run.
    pub steady_time: Option<f64>,
    /// u snapshots (t, field) kept at the snapshot cadence, starting at t = 0.
    pub snapshots: Vec<(f64, Field)>,
    pub total_clipped: f64,
    pub total_steps: u64,
}

/// Steady-state detection thresholds.
#[derive(Debug, Clone, Copy)]
pub struct SteadyTolerances {
    /// ∫v must fall below tol_v·∫v₀.
    pub tol_v: f64,
    /// ‖u(t₂)−u(t₁)‖_*/(t₂−t₁) must fall below tol_u.
    pub tol_u: f64,
}

impl Default for SteadyTolerances {
    fn default() -> Self {
        Self {
            tol_v: 1e-6,
            tol_u: 1e-8,
        }
    }
}

/// Run controls beyond the model parameters.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub horizon: f64,
    /// Diagnostics sampling interval.
    pub sample_cadence: f64,
    /// Snapshot interval; must be an integer multiple of the sample cadence.
    pub snapshot_cadence: f64,
    pub steady: SteadyTolerances,
    /// Stop as soon as the steady detector fires.
    pub stop_on_steady: bool,
    /// Track ‖u(t) − u₀‖_* at snapshot times.
    pub track_dual_dist: bool,
    /// Refuse to run outside the admissible α window.
    pub certify: bool,
    pub functionals: FunctionalConfig,
}

impl RunOptions {
    pub fn new(horizon: f64, alpha: f64) -> Self {
        Self {
            horizon,
            sample_cadence: 0.1,
            snapshot_cadence: 1.0,
            steady: SteadyTolerances::default(),
            stop_on_steady: false,
            track_dual_dist: false,
            certify: false,
            functionals: FunctionalConfig::for_alpha(alpha),
        }
    }
}

/// Sink for run outputs. File-backed implementations live in the CLI layer.
pub trait RunSink {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> Result<(), Error> {
        let _ = record;
        Ok(())
    }
    fn on_snapshot(&mut self, state: &State) -> Result<(), Error> {
        let _ = state;
        Ok(())
    }
    fn on_crash(&mut self, state: &State) -> Result<(), Error> {
        let _ = state;
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl RunSink for NullSink {}

/// Largest admissible explicit step for the current state:
/// safety · min over axes of h²/(2·dim·max mobility + h·max |drift|),
/// capped at dt_max; dt_max when the state is fully degenerate.
pub fn stable_dt(state: &State, params: &Params) -> f64 {
    let (max_mob, max_drift) = stable_dt_parts(state, params);
    if max_mob == 0.0 && max_drift == 0.0 {
        return params.dt_max;
    }
    let grid = state.grid();
    let dim = grid.dim() as f64;
    let mut dt = f64::INFINITY;
    for a in 0..grid.dim() {
        let h = grid.spacing()[a];
        let denom = 2.0 * dim * max_mob + h * max_drift;
        if denom > 0.0 {
            dt = dt.min(h * h / denom);
        }
    }
    (params.safety * dt).min(params.dt_max)
}

/// One step: explicit density update with the old nutrient, then the
/// implicit nutrient solve with the old density.
pub fn step(state: &State, params: &Params, dt: f64) -> Result<(State, StepReport), Error> {
    let cap = stable_dt(state, params);
    if dt > cap * (1.0 + 1e-9) {
        return Err(Error::Params(format!(
            "dt = {dt} exceeds the stable step {cap}"
        )));
    }
    step_unchecked(state, params, dt)
}

/// One step at the current stable step size.
pub fn step_adaptive(state: &State, params: &Params) -> Result<(State, StepReport), Error> {
    step_unchecked(state, params, stable_dt(state, params))
}

pub(crate) fn step_unchecked(
    state: &State,
    params: &Params,
    dt: f64,
) -> Result<(State, StepReport), Error> {
    if !(dt > 0.0) {
        return Err(Error::Params(format!("dt must be > 0, got {dt}")));
    }
    let grid = state.grid();
    let vol = grid.cell_volume();

    let produced_u_mass = dt * crate::model::mass_production_rate(state, params);
    let rhs = rhs_u(state, params)?;
    let mut u_new = state.u.clone();
    let mut clipped = CompensatedSum::new();
    for (u, &r) in u_new.values_mut().iter_mut().zip(rhs.values()) {
        let raw = *u + dt * r;
        if !raw.is_finite() {
            return Err(Error::Instability {
                t: state.t,
                what: "non-finite density update".into(),
            });
        }
        if raw < 0.0 {
            match params.clip_policy {
                ClipPolicy::Reject => {
                    return Err(Error::NegativeDensity(format!(
                        "u = {raw} after explicit update at t = {}",
                        state.t
                    )));
                }
                ClipPolicy::ClipAndAccount => {
                    clipped.add(-raw);
                    *u = 0.0;
                }
            }
        } else {
            *u = raw;
        }
    }
    let mass_clipped = clipped.value() * vol;

    let mass_v_before = integrate(&state.v);
    let sys = v_implicit_operator(state, dt)?;
    let (v_values, stats) = solve_v_system(&sys, Some(state.v.values()))?;
    if v_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Instability {
            t: state.t,
            what: "non-finite nutrient solve".into(),
        });
    }
    let v_new = Field::new(grid, v_values)?;
    let mass_v_after = integrate(&v_new);
    let consumed_v_mass = (mass_v_before - mass_v_after).max(0.0);

    let report = StepReport {
        dt,
        mass_clipped,
        solve_iterations: stats.iterations,
        solve_residual: stats.relative_residual,
        max_u: u_new.max(),
        min_u: u_new.min(),
        max_v: v_new.max(),
        min_v: v_new.min(),
        consumed_v_mass,
        produced_u_mass,
    };
    debug_assert!(report.solve_residual <= CG_RELATIVE_TOLERANCE);
    let next = State {
        u: u_new,
        v: v_new,
        t: state.t + dt,
    };
    Ok((next, report))
}

/// Window entry handed to the steady detector: sampled time, u field and ∫v.
#[derive(Debug, Clone)]
pub struct SteadySample {
    pub t: f64,
    pub u: Field,
    pub mass_v: f64,
}

/// True iff ∫v has decayed below tol_v·∫v₀ and the dual-norm rate of change
/// of u between the last two window entries is below tol_u.
pub fn detect_steady(
    window: &[SteadySample],
    mass_v0: f64,
    tol: &SteadyTolerances,
) -> Result<bool, Error> {
    if window.len() < 2 {
        return Err(Error::Params(
            "steady detection needs a window of at least 2 records".into(),
        ));
    }
    let prev = &window[window.len() - 2];
    let last = &window[window.len() - 1];
    if !(last.mass_v < tol.tol_v * mass_v0) {
        return Ok(false);
    }
    let dt = last.t - prev.t;
    if dt <= 0.0 {
        return Ok(false);
    }
    let diff = last.u.zip_with(&prev.u, |a, b| a - b);
    let rate = dual_norm(&diff)?.value / dt;
    Ok(rate < tol.tol_u)
}

/// Hard abort threshold: clipped mass per unit time above this fraction of
/// the initial mass means the scheme is no longer trustworthy.
pub const CLIP_ABORT_FRACTION: f64 = 1e-8;

/// Advance `initial` to the horizon (or steady state), emitting diagnostics
/// at the sample cadence and snapshots at the snapshot cadence.
pub fn run(
    initial: &State,
    params: &Params,
    options: &RunOptions,
    sink: &mut dyn RunSink,
) -> Result<RunResult, Error> {
    params.validate()?;
    initial.check()?;
    if options.certify && !params.in_admissible_window() {
        return Ok(RunResult {
            final_state: initial.clone(),
            records: Vec::new(),
            termination: Termination::RegimeViolation,
            steady_time: None,
            snapshots: Vec::new(),
            total_clipped: 0.0,
            total_steps: 0,
        });
    }
    if options.horizon <= 0.0 {
        return Ok(RunResult {
            final_state: initial.clone(),
            records: Vec::new(),
            termination: Termination::Horizon,
            steady_time: None,
            snapshots: Vec::new(),
            total_clipped: 0.0,
            total_steps: 0,
        });
    }
    if !(options.sample_cadence > 0.0) || !(options.snapshot_cadence > 0.0) {
        return Err(Error::Params("cadences must be positive".into()));
    }
    let ratio = options.snapshot_cadence / options.sample_cadence;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
        return Err(Error::Params(
            "snapshot cadence must be an integer multiple of the sample cadence".into(),
        ));
    }

    let mass_u0 = integrate(&initial.u);
    let mass_v0 = integrate(&initial.v);
    let mut cumulative_consumption = CompensatedSum::new();
    let mut total_clipped = CompensatedSum::new();
    let mut records = Vec::new();
    let mut snapshots: Vec<(f64, Field)> = Vec::new();
    let mut steady_window: Vec<SteadySample> = Vec::new();
    let mut steady_time = None;
    let mut total_steps: u64 = 0;

    let mut state = initial.clone();
    let mut sample_index: u64 = 0; // samples emitted so far
    let snap_every = ratio.round() as u64;

    let emit = |state: &State,
                sample_index: u64,
                cumulative_consumption: f64,
                total_clipped: f64,
                records: &mut Vec<DiagnosticsRecord>,
                snapshots: &mut Vec<(f64, Field)>,
                steady_window: &mut Vec<SteadySample>,
                sink: &mut dyn RunSink|
     -> Result<(), Error> {
        let is_snapshot = sample_index.is_multiple_of(snap_every);
        let dual_dist = if is_snapshot && options.track_dual_dist {
            let diff = state.u.zip_with(&initial.u, |a, b| a - b);
            Some(dual_norm(&diff)?.value)
        } else {
            None
        };
        let record = compute_record(
            state,
            &options.functionals,
            cumulative_consumption,
            total_clipped,
            dual_dist,
        )?;
        sink.on_record(&record)?;
        records.push(record);
        if is_snapshot {
            snapshots.push((state.t, state.u.clone()));
            steady_window.push(SteadySample {
                t: state.t,
                u: state.u.clone(),
                mass_v: integrate(&state.v),
            });
            if steady_window.len() > 2 {
                steady_window.remove(0);
            }
            sink.on_snapshot(state)?;
        }
        Ok(())
    };

    emit(
        &state,
        0,
        0.0,
        0.0,
        &mut records,
        &mut snapshots,
        &mut steady_window,
        sink,
    )?;

    let horizon = options.horizon;
    let eps_t = 1e-12 * horizon.max(1.0);
    let mut termination = Termination::Horizon;

    while state.t < horizon - eps_t {
        let next_sample_t = (sample_index + 1) as f64 * options.sample_cadence;
        let dt_cap = (next_sample_t.min(horizon) - state.t).max(eps_t);
        let dt = stable_dt(&state, params).min(dt_cap);
        if !(dt > 0.0) {
            // only a non-finite CFL input can drive the stable step to zero
            sink.on_crash(&state)?;
            termination = Termination::Instability;
            break;
        }

        match step_unchecked(&state, params, dt) {
            Ok((next, report)) => {
                if params.clip_policy == ClipPolicy::ClipAndAccount
                    && report.mass_clipped > CLIP_ABORT_FRACTION * mass_u0.abs().max(1e-300) * dt
                {
                    sink.on_crash(&next)?;
                    state = next;
                    termination = Termination::Instability;
                    break;
                }
                cumulative_consumption.add(report.consumed_v_mass);
                if report.mass_clipped > 0.0 {
                    total_clipped.add(report.mass_clipped);
                }
                state = next;
                total_steps += 1;
            }
            Err(Error::Instability { .. }) => {
                sink.on_crash(&state)?;
                termination = Termination::Instability;
                break;
            }
            Err(e) => return Err(e),
        }

        // landed on a sample boundary?
        if (state.t - next_sample_t).abs() <= eps_t && state.t < horizon + eps_t {
            sample_index += 1;
            emit(
                &state,
                sample_index,
                cumulative_consumption.value(),
                total_clipped.value(),
                &mut records,
                &mut snapshots,
                &mut steady_window,
                sink,
            )?;
            if steady_window.len() == 2
                && steady_time.is_none()
                && detect_steady(&steady_window, mass_v0, &options.steady)?
            {
                steady_time = Some(state.t);
                if options.stop_on_steady {
                    termination = Termination::Steady;
                    break;
                }
            }
        }
    }

    Ok(RunResult {
        final_state: state,
        records,
        termination,
        steady_time,
        snapshots,
        total_clipped: total_clipped.value(),
        total_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn homogeneous_state(n: usize, dim: usize, u0: f64, v0: f64) -> State {
        let (cells, extents): (Vec<usize>, Vec<f64>) = match dim {
            1 => (vec![n], vec![1.0]),
            2 => (vec![n, n], vec![1.0, 1.0]),
            _ => (vec![n, n, n], vec![1.0, 1.0, 1.0]),
        };
        let g = make_grid(dim, &cells, &extents).unwrap();
        State::new(Field::constant(&g, u0), Field::constant(&g, v0), 0.0).unwrap()
    }

    #[test]
    fn stable_dt_examples() {
        // u ≡ 0 → dt = dt_max
        let s = homogeneous_state(8, 1, 0.0, 1.0);
        let p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        assert_eq!(stable_dt(&s, &p), p.dt_max);

        // 1D, h = 0.1, max mobility 1, no drift, safety 0.5 → 0.0025
        let g = make_grid(1, &[10], &[1.0]).unwrap();
        let s = State::new(Field::constant(&g, 1.0), Field::constant(&g, 1.0), 0.0).unwrap();
        let mut p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        p.safety = 0.5;
        p.dt_max = 1.0;
        assert!((stable_dt(&s, &p) - 0.0025).abs() < 1e-15);

        // doubling h quadruples the diffusion-limited dt
        let g2 = make_grid(1, &[5], &[1.0]).unwrap();
        let s2 = State::new(Field::constant(&g2, 1.0), Field::constant(&g2, 1.0), 0.0).unwrap();
        assert!((stable_dt(&s2, &p) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn step_constant_state_update() {
        // (u, v) = (1, 1), ℓ = 1, dt = 0.01 → u ≡ 1.01, v ≡ 1/1.01
        let s = homogeneous_state(4, 2, 1.0, 1.0);
        let mut p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        p.dt_max = 0.05;
        p.safety = 1.0;
        let (next, report) = step(&s, &p, 0.01).unwrap();
        for &u in next.u.values() {
            assert!((u - 1.01).abs() < 1e-14);
        }
        for &v in next.v.values() {
            assert!((v - 1.0 / 1.01).abs() < 1e-10);
        }
        assert_eq!(report.mass_clipped, 0.0);
        assert!(report.max_v <= 1.0 && report.min_v > 0.0);
    }

    #[test]
    fn step_frozen_when_v_zero() {
        let g = make_grid(1, &[16], &[1.0]).unwrap();
        let u = Field::from_fn(&g, |x| 1.0 + (3.0 * x[0]).sin().abs());
        let v = Field::constant(&g, 0.0);
        let s = State {
            u: u.clone(),
            v,
            t: 0.0,
        };
        let p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        let (next, _) = step_unchecked(&s, &p, 1e-3).unwrap();
        for (a, b) in next.u.values().iter().zip(u.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn step_rejects_oversized_dt() {
        let s = homogeneous_state(16, 1, 1.0, 1.0);
        let p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        let cap = stable_dt(&s, &p);
        assert!(step(&s, &p, cap * 2.0).is_err());
    }

    #[test]
    fn per_step_budget_identity_randomized() {
        let mut rng = crate::rng::Rng::seed_from(77);
        let g = make_grid(2, &[12, 12], &[1.0, 1.0]).unwrap();
        let p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        for trial in 0..40 {
            let a = rng.uniform(0.3, 2.0);
            let b = rng.uniform(0.1, 1.0);
            let w1 = rng.uniform(1.0, 4.0);
            let w2 = rng.uniform(1.0, 4.0);
            let u = Field::from_fn(&g, |x| a + b * (w1 * x[0]).sin() * (w2 * x[1]).cos() + b);
            let v = Field::from_fn(&g, |x| 0.2 + b * (0.5 + 0.5 * (w2 * x[0]).cos()));
            let s = State::new(u, v, 0.0).unwrap();
            let dt = stable_dt(&s, &p);
            let (next, report) = step_unchecked(&s, &p, dt).unwrap();
            let lhs = integrate(&next.u) - integrate(&s.u);
            let rhs = report.produced_u_mass + report.mass_clipped;
            let scale = integrate(&s.u).abs().max(1.0);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * scale,
                "trial {trial}: budget violated by {}",
                (lhs - rhs).abs() / scale
            );
            // nutrient monotonicity
            assert!(integrate(&next.v) <= integrate(&s.v));
            assert!(next.v.max() <= s.v.max() + 1e-14);
            assert!(next.v.min() > 0.0);
        }
    }

    #[test]
    fn homogeneous_logistic_oracle() {
        // u' = uv, v' = -uv from (1, 1): v(t) = 2e^{-2t}/(1+e^{-2t})
        let s = homogeneous_state(4, 2, 1.0, 1.0);
        let mut p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        p.dt_max = 1e-4;
        let mut opts = RunOptions::new(1.0, p.alpha);
        opts.sample_cadence = 0.5;
        opts.snapshot_cadence = 0.5;
        let result = run(&s, &p, &opts, &mut NullSink).unwrap();
        assert_eq!(result.termination, Termination::Horizon);
        let e2 = (-2.0f64).exp();
        let v_exact = 2.0 * e2 / (1.0 + e2);
        let u_exact = 2.0 - v_exact;
        let v_num = result.final_state.v.values()[0];
        let u_num = result.final_state.u.values()[0];
        assert!(
            (v_num - v_exact).abs() <= 1e-4,
            "v error {}",
            (v_num - v_exact).abs()
        );
        assert!(
            (u_num - u_exact).abs() <= 1e-4,
            "u error {}",
            (u_num - u_exact).abs()
        );
        // spatially exact homogeneity is preserved
        assert!((result.final_state.u.max() - result.final_state.u.min()).abs() < 1e-13);
    }

    #[test]
    fn homogeneous_first_order_in_dt() {
        let s = homogeneous_state(4, 1, 1.0, 1.0);
        let run_with = |dt: f64| {
            let mut p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
            p.dt_max = dt;
            let opts = RunOptions::new(1.0, p.alpha);
            let r = run(&s, &p, &opts, &mut NullSink).unwrap();
            r.final_state.v.values()[0]
        };
        let e2 = (-2.0f64).exp();
        let v_exact = 2.0 * e2 / (1.0 + e2);
        let err1 = (run_with(2e-3) - v_exact).abs();
        let err2 = (run_with(1e-3) - v_exact).abs();
        let rate = err1 / err2;
        assert!(
            (1.5..=2.7).contains(&rate),
            "halving dt should roughly halve the error, got ratio {rate} ({err1} vs {err2})"
        );
    }

    #[test]
    fn heat_mode_oracle() {
        // u ≡ 0: v solves the Neumann heat equation; the cosine mode decays
        // as e^{-π² t}
        let g = make_grid(1, &[128], &[1.0]).unwrap();
        let pi = std::f64::consts::PI;
        let v0 = Field::from_fn(&g, |x| 1.0 + 0.5 * (pi * x[0]).cos());
        let s = State::new(Field::constant(&g, 0.0), v0, 0.0).unwrap();
        let mut p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        p.dt_max = 1e-5;
        let mut opts = RunOptions::new(0.1, p.alpha);
        opts.sample_cadence = 0.05;
        opts.snapshot_cadence = 0.05;
        let result = run(&s, &p, &opts, &mut NullSink).unwrap();
        let t = result.final_state.t;
        assert!((t - 0.1).abs() < 1e-9);
        let decay = (-pi * pi * t).exp();
        let mut max_err = 0.0f64;
        for (i, &v) in result.final_state.v.values().iter().enumerate() {
            let x = g.center(0, i);
            let exact = 1.0 + 0.5 * decay * (pi * x).cos();
            max_err = max_err.max((v - exact).abs());
        }
        assert!(max_err <= 1e-3, "L∞ error {max_err}");
    }

    #[test]
    fn run_horizon_zero_returns_initial() {
        let s = homogeneous_state(4, 1, 1.0, 1.0);
        let p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        let opts = RunOptions::new(0.0, p.alpha);
        let r = run(&s, &p, &opts, &mut NullSink).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.termination, Termination::Horizon);
        assert_eq!(r.final_state.t, 0.0);
    }

    #[test]
    fn run_certify_refuses_outside_regime() {
        let s = homogeneous_state(4, 1, 1.0, 1.0);
        let p = Params::new(1.0, 1.0, 2.0, 0.0).unwrap();
        let mut opts = RunOptions::new(1.0, p.alpha);
        opts.certify = true;
        let r = run(&s, &p, &opts, &mut NullSink).unwrap();
        assert_eq!(r.termination, Termination::RegimeViolation);
        assert!(r.records.is_empty());
    }

    #[test]
    fn detect_steady_cases() {
        let g = make_grid(1, &[8], &[1.0]).unwrap();
        let u = Field::constant(&g, 1.0);
        let tol = SteadyTolerances::default();
        // v ≡ 0 and u static → steady
        let window = vec![
            SteadySample {
                t: 0.0,
                u: u.clone(),
                mass_v: 0.0,
            },
            SteadySample {
                t: 1.0,
                u: u.clone(),
                mass_v: 0.0,
            },
        ];
        assert!(detect_steady(&window, 1.0, &tol).unwrap());
        // fresh run with big v → not steady
        let window = vec![
            SteadySample {
                t: 0.0,
                u: u.clone(),
                mass_v: 1.0,
            },
            SteadySample {
                t: 1.0,
                u: u.clone(),
                mass_v: 0.9,
            },
        ];
        assert!(!detect_steady(&window, 1.0, &tol).unwrap());
        assert!(detect_steady(&window[..1], 1.0, &tol).is_err());
    }

    #[test]
    fn logistic_run_reaches_steady() {
        let s = homogeneous_state(4, 1, 1.0, 1.0);
        let p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        let mut opts = RunOptions::new(20.0, p.alpha);
        opts.sample_cadence = 0.25;
        opts.snapshot_cadence = 0.5;
        opts.stop_on_steady = true;
        let r = run(&s, &p, &opts, &mut NullSink).unwrap();
        assert_eq!(r.termination, Termination::Steady);
        let t_steady = r.steady_time.unwrap();
        assert!(t_steady <= 16.0, "steady at {t_steady}");
        assert!(t_steady >= 7.0, "suspiciously early steady at {t_steady}");
    }

    #[test]
    fn instability_saves_crash_snapshot() {
        struct CrashSink {
            crashed: Option<f64>,
        }
        impl RunSink for CrashSink {
            fn on_crash(&mut self, state: &State) -> Result<(), crate::error::Error> {
                self.crashed = Some(state.t);
                Ok(())
            }
        }
        let g = make_grid(1, &[8], &[1.0]).unwrap();
        let u = Field::from_fn(&g, |x| 1.0 + x[0]);
        let v = Field::from_fn(&g, |x| 1.0 + 0.5 * x[0]);
        let s = State::new(u, v, 0.0).unwrap();
        // a taxis strength at the overflow edge drives the CFL bound to zero
        let mut p = Params::new(1e308, 1.0, 1.55, 0.0).unwrap();
        p.dt_max = 1e-3;
        let opts = RunOptions::new(1.0, p.alpha);
        let mut sink = CrashSink { crashed: None };
        let r = run(&s, &p, &opts, &mut sink).unwrap();
        assert_eq!(r.termination, Termination::Instability);
        assert!(sink.crashed.is_some());
    }

    #[test]
    fn nutrient_mass_monotone_along_run() {
        let g = make_grid(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let u = Field::from_fn(&g, |x| {
            0.5 + ((x[0] - 0.3).powi(2) + (x[1] - 0.5).powi(2)) / 0.5
        });
        let v = Field::from_fn(&g, |x| 1.0 + 0.2 * (3.0 * x[1]).cos());
        let s = State::new(u, v, 0.0).unwrap();
        let p = Params::new(1.0, 1.0, 1.55, 0.0).unwrap();
        let mut opts = RunOptions::new(0.5, p.alpha);
        opts.sample_cadence = 0.05;
        opts.snapshot_cadence = 0.1;
        let r = run(&s, &p, &opts, &mut NullSink).unwrap();
        let masses: Vec<f64> = r.records.iter().map(|rec| rec.mass_v).collect();
        for w in masses.windows(2) {
            assert!(w[1] <= w[0] + 1e-13);
        }
        let consumption: Vec<f64> = r
            .records
            .iter()
            .map(|rec| rec.cumulative_consumption)
            .collect();
        for w in consumption.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // cumulative consumption bounded by the initial nutrient mass
        let last = r.records.last().unwrap();
        assert!(last.cumulative_consumption <= r.records[0].mass_v + 1e-10);
        // u-mass sandwich
        let mass_u0 = r.records[0].mass_u;
        let mass_v0 = r.records[0].mass_v;
        for rec in &r.records {
            assert!(rec.mass_u >= mass_u0 - 1e-12 * mass_u0.max(1.0));
            assert!(rec.mass_u <= mass_u0 + p.ell * mass_v0 + r.total_clipped + 1e-10);
        }
    }
}

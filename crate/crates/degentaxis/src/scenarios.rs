//! Initial-data construction and experiment drivers: stabilization runs,
//! the small-v₀ non-constancy check, and the v₀-scaling sweep with its
//! fitted decay exponent.

use serde::Serialize;

use crate::dualnorm::{dual_norm, trajectory_variation};
use crate::error::Error;
use crate::functionals::FunctionalConfig;
use crate::grid::{cell_gradient_magnitude, integrate, Field, Grid};
use crate::inequalities::sample_positive_field;
use crate::model::{Params, State};
use crate::stepper::{run, RunOptions, RunResult, RunSink, SteadyTolerances, Termination};

/// Initial-profile menu shared by u₀ and v₀.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Constant,
    TwoBump,
    CosineMix,
    SeededRandom,
}

impl Recipe {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(Self::Constant),
            "two-bump" => Some(Self::TwoBump),
            "cosine-mix" => Some(Self::CosineMix),
            "seeded-random" => Some(Self::SeededRandom),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::TwoBump => "two-bump",
            Self::CosineMix => "cosine-mix",
            Self::SeededRandom => "seeded-random",
        }
    }
}

/// Recipe-based initial data: u₀ ≥ 0 with u₀ ≢ 0, v₀ > 0.
#[derive(Debug, Clone)]
pub struct InitialDataSpec {
    pub u0_recipe: Recipe,
    pub v0_recipe: Recipe,
    /// Multiplies the v₀ recipe; must be positive.
    pub v0_scale: f64,
    pub u0_floor: f64,
    pub v0_floor: f64,
    pub seed: u64,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        Self {
            u0_recipe: Recipe::TwoBump,
            v0_recipe: Recipe::Constant,
            v0_scale: 1.0,
            u0_floor: 0.1,
            v0_floor: 1.0,
            seed: 42,
        }
    }
}

fn build_recipe(grid: &Grid, recipe: Recipe, floor: f64, seed: u64) -> Result<Field, Error> {
    let extents = *grid.extents();
    let field = match recipe {
        Recipe::Constant => Field::constant(grid, 1.0f64.max(floor)),
        Recipe::TwoBump => {
            let width = 0.12 * extents[0];
            Field::from_fn(grid, |x| {
                let bump = |cx: f64| {
                    let mut d2 = (x[0] - cx * extents[0]).powi(2);
                    for a in 1..grid.dim() {
                        d2 += (x[a] - 0.5 * extents[a]).powi(2);
                    }
                    2.0 * (-d2 / (width * width)).exp()
                };
                floor + bump(0.3) + bump(0.7)
            })
        }
        Recipe::CosineMix => {
            let pi = std::f64::consts::PI;
            Field::from_fn(grid, |x| {
                let mut raw = 0.5 * (pi * x[0] / extents[0]).cos()
                    + 0.3 * (2.0 * pi * x[0] / extents[0]).cos();
                if grid.dim() > 1 {
                    raw += 0.2 * (pi * x[1] / extents[1]).cos();
                } else {
                    raw += 0.2 * (3.0 * pi * x[0] / extents[0]).cos();
                }
                floor + 1.0 + raw
            })
        }
        Recipe::SeededRandom => {
            if !(floor > 0.0) {
                return Err(Error::Scenario(
                    "seeded-random recipe needs a positive floor".into(),
                ));
            }
            sample_positive_field(grid, seed, 5, floor)?
        }
    };
    Ok(field)
}

/// Build (u₀, v₀, K) where K bounds ‖u₀‖_∞ + ‖v₀‖_∞ + ‖∇ln v₀‖_∞ and
/// −∫ln u₀. K is infinite when u₀ touches zero; runs without a positive
/// regularizing shift must reject such data.
pub fn make_initial_data(
    grid: &Grid,
    spec: &InitialDataSpec,
) -> Result<(Field, Field, f64), Error> {
    if !(spec.v0_scale > 0.0) {
        return Err(Error::Scenario(format!(
            "v0_scale must be positive, got {}",
            spec.v0_scale
        )));
    }
    if spec.u0_floor < 0.0 {
        return Err(Error::Scenario("u0_floor must be nonnegative".into()));
    }
    if !(spec.v0_floor > 0.0) {
        return Err(Error::Scenario("v0_floor must be positive".into()));
    }
    let u0 = build_recipe(grid, spec.u0_recipe, spec.u0_floor, spec.seed)?;
    let v0_raw = build_recipe(
        grid,
        spec.v0_recipe,
        spec.v0_floor,
        spec.seed ^ 0x9e3779b97f4a7c15,
    )?;
    let v0 = v0_raw.map(|x| x * spec.v0_scale);

    if u0.max() <= 0.0 {
        return Err(Error::Scenario("u0 recipe produced u0 ≡ 0".into()));
    }
    if !(v0.min() > 0.0) {
        return Err(Error::Scenario("v0 must be strictly positive".into()));
    }

    let ln_v0 = v0.map(f64::ln);
    let grad_ln_v0_max = cell_gradient_magnitude(&ln_v0).max();
    let norm_sum = u0.max() + v0.max() + grad_ln_v0_max;
    let ln_u0_integral = if u0.min() > 0.0 {
        integrate(&u0.map(f64::ln))
    } else {
        f64::NEG_INFINITY
    };
    let k = norm_sum.max(-ln_u0_integral);
    Ok((u0, v0, k))
}

/// Apply the regularizing shift and assemble the runnable state.
pub fn initial_state(u0: &Field, v0: &Field, params: &Params) -> Result<State, Error> {
    let u = if params.eps > 0.0 {
        u0.map(|x| x + params.eps)
    } else {
        u0.clone()
    };
    if u.min() <= 0.0 {
        return Err(Error::Scenario(
            "u0 touches zero and eps = 0; the log-mass bound (K) is infinite".into(),
        ));
    }
    State::new(u, v0.clone(), 0.0)
}

/// Controls for the experiment drivers.
#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    pub horizon: f64,
    pub sample_cadence: f64,
    pub snapshot_cadence: f64,
    pub steady: SteadyTolerances,
    pub stop_on_steady: bool,
    /// Refuse certified verdicts outside the admissible α window.
    pub certify: bool,
    /// Non-constancy verdict: final dual distance to the mean must be at
    /// least this fraction of the initial one.
    pub nonconstancy_fraction: f64,
    /// Decay verdict thresholds.
    pub v_decay_mass_factor: f64,
    pub v_decay_grad_factor: f64,
    /// Worker pool bound for sweep legs.
    pub threads: usize,
    pub functionals: FunctionalConfig,
}

impl ScenarioOptions {
    pub fn new(horizon: f64, alpha: f64) -> Self {
        Self {
            horizon,
            sample_cadence: 0.1,
            snapshot_cadence: 0.5,
            steady: SteadyTolerances::default(),
            stop_on_steady: false,
            certify: false,
            nonconstancy_fraction: 0.5,
            v_decay_mass_factor: 1e-6,
            v_decay_grad_factor: 1e-4,
            threads: 1,
            functionals: FunctionalConfig::for_alpha(alpha),
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            horizon: self.horizon,
            sample_cadence: self.sample_cadence,
            snapshot_cadence: self.snapshot_cadence,
            steady: self.steady,
            stop_on_steady: self.stop_on_steady,
            track_dual_dist: true,
            certify: self.certify,
            functionals: self.functionals.clone(),
        }
    }
}

/// Verdicts of one stabilization run, recomputable from the stored series.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Verdicts {
    /// ∫v(end) < mass_factor·∫v₀ and ‖∇v‖₂(end) < grad_factor·peak.
    pub v_decay: bool,
    /// Final u keeps at least `nonconstancy_fraction` of u₀'s dual distance
    /// to its spatial mean.
    pub nonconstant: bool,
    /// Horizon was hit before the decay thresholds.
    pub incomplete_decay: bool,
    /// Whether the steady detector fired, and when.
    pub steady_fired: bool,
    pub steady_time: Option<f64>,
    /// Verdicts are certified only inside the admissible α window.
    pub certified: bool,
}

/// Full report of one stabilization experiment.
#[derive(Debug, Clone, Serialize)]
pub struct StabilizationReport {
    pub v0_scale: f64,
    pub mass_v0: f64,
    pub k_bound: f64,
    /// (t, ‖u(t) − u₀‖_*) at snapshot times.
    pub dual_dist_series: Vec<(f64, f64)>,
    pub max_dual_dist_u0: f64,
    pub final_dual_dist_u0: f64,
    /// (t, ∫v).
    pub v_mass_series: Vec<(f64, f64)>,
    /// (t, ‖∇v‖_{L²}).
    pub grad_v_norm_series: Vec<(f64, f64)>,
    pub peak_grad_v_norm: f64,
    /// Spatial variance of the final u.
    pub final_u_variance: f64,
    pub u0_dist_to_mean: f64,
    pub final_dist_to_mean: f64,
    /// Thresholds the verdicts were computed with.
    pub nonconstancy_fraction: f64,
    pub v_decay_mass_factor: f64,
    pub v_decay_grad_factor: f64,
    pub verdicts: Verdicts,
}

/// Dual-norm distance of a field to its own spatial mean.
pub fn dist_to_mean(f: &Field) -> Result<f64, Error> {
    let mean = integrate(f) / f.grid().total_volume();
    Ok(dual_norm(&f.map(|x| x - mean))?.value)
}

fn spatial_variance(f: &Field) -> f64 {
    let mean = integrate(f) / f.grid().total_volume();
    integrate(&f.map(|x| (x - mean) * (x - mean))) / f.grid().total_volume()
}

/// Recompute the verdicts from the serialized series alone.
pub fn recheck_verdicts(report: &StabilizationReport) -> Verdicts {
    let mass_v_end = report.v_mass_series.last().map(|p| p.1).unwrap_or(f64::NAN);
    let grad_end = report
        .grad_v_norm_series
        .last()
        .map(|p| p.1)
        .unwrap_or(f64::NAN);
    let v_decay = mass_v_end < report.v_decay_mass_factor * report.mass_v0
        && grad_end < report.v_decay_grad_factor * report.peak_grad_v_norm;
    Verdicts {
        v_decay,
        nonconstant: report.final_dist_to_mean
            >= report.nonconstancy_fraction * report.u0_dist_to_mean,
        incomplete_decay: !v_decay,
        steady_fired: report.verdicts.steady_fired,
        steady_time: report.verdicts.steady_time,
        certified: report.verdicts.certified,
    }
}

/// Run one stabilization experiment.
pub fn stabilization_experiment(
    grid: &Grid,
    spec: &InitialDataSpec,
    params: &Params,
    options: &ScenarioOptions,
    sink: &mut dyn RunSink,
) -> Result<(StabilizationReport, RunResult), Error> {
    let (u0, v0, k_bound) = make_initial_data(grid, spec)?;
    let state0 = initial_state(&u0, &v0, params)?;
    let result = run(&state0, params, &options.run_options(), sink)?;
    if result.termination == Termination::RegimeViolation {
        return Err(Error::Regime {
            alpha: params.alpha,
        });
    }

    let mass_v0 = integrate(&v0);
    let mut dual_dist_series = Vec::new();
    for rec in &result.records {
        if let Some(d) = rec.dual_dist_u0 {
            dual_dist_series.push((rec.t, d));
        }
    }
    let v_mass_series: Vec<(f64, f64)> = result.records.iter().map(|r| (r.t, r.mass_v)).collect();
    let grad_v_norm_series: Vec<(f64, f64)> = result
        .records
        .iter()
        .map(|r| (r.t, r.grad_v_l2.max(0.0).sqrt()))
        .collect();
    let peak_grad_v_norm = grad_v_norm_series.iter().fold(0.0f64, |m, p| m.max(p.1));
    let max_dual_dist_u0 = dual_dist_series.iter().fold(0.0f64, |m, p| m.max(p.1));
    let final_dual_dist_u0 = dual_dist_series.last().map(|p| p.1).unwrap_or(0.0);

    let u0_shifted = &state0.u;
    let u0_dist_to_mean = dist_to_mean(u0_shifted)?;
    let final_dist_to_mean = dist_to_mean(&result.final_state.u)?;

    let mass_v_end = v_mass_series.last().map(|p| p.1).unwrap_or(f64::NAN);
    let grad_end = grad_v_norm_series.last().map(|p| p.1).unwrap_or(f64::NAN);
    let v_decay = mass_v_end < options.v_decay_mass_factor * mass_v0
        && grad_end < options.v_decay_grad_factor * peak_grad_v_norm;

    let verdicts = Verdicts {
        v_decay,
        nonconstant: final_dist_to_mean >= options.nonconstancy_fraction * u0_dist_to_mean,
        incomplete_decay: !v_decay,
        steady_fired: result.steady_time.is_some(),
        steady_time: result.steady_time,
        certified: params.in_admissible_window(),
    };

    let report = StabilizationReport {
        v0_scale: spec.v0_scale,
        mass_v0,
        k_bound,
        dual_dist_series,
        max_dual_dist_u0,
        final_dual_dist_u0,
        v_mass_series,
        grad_v_norm_series,
        peak_grad_v_norm,
        final_u_variance: spatial_variance(&result.final_state.u),
        u0_dist_to_mean,
        final_dist_to_mean,
        nonconstancy_fraction: options.nonconstancy_fraction,
        v_decay_mass_factor: options.v_decay_mass_factor,
        v_decay_grad_factor: options.v_decay_grad_factor,
        verdicts,
    };
    Ok((report, result))
}

/// One leg of a v₀-scaling sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepLeg {
    pub scale: f64,
    pub mass_v0: f64,
    /// Total trajectory variation Σ‖u(t_{k+1}) − u(t_k)‖_*.
    pub variation: f64,
    pub report: StabilizationReport,
}

/// Sweep outcome with the fitted exponent of V against ∫v₀.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub legs: Vec<SweepLeg>,
    /// Slope of log V against log ∫v₀; positive when smaller nutrient
    /// budgets move u less.
    pub sigma_hat: Option<f64>,
    pub log_intercept: Option<f64>,
    /// V decreasing with the scale?
    pub monotone: bool,
    /// Set when some leg had zero variation (frozen u).
    pub degenerate_legs: usize,
}

/// Run the sweep over `scales` (each leg is `spec` with its v0_scale
/// replaced). Legs may run on a bounded worker pool; reports are merged in
/// scale order.
pub fn v0_sweep(
    grid: &Grid,
    spec: &InitialDataSpec,
    scales: &[f64],
    params: &Params,
    options: &ScenarioOptions,
) -> Result<SweepReport, Error> {
    if scales.len() < 3 {
        return Err(Error::Scenario("sweep needs at least 3 scales".into()));
    }
    let max = scales.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Scenario(
            "sweep scales must be positive and span at least two decades".into(),
        ));
    }

    let legs: Vec<Result<SweepLeg, Error>> = run_legs(grid, spec, scales, params, options);
    let mut out = Vec::with_capacity(legs.len());
    for leg in legs {
        out.push(leg?);
    }

    let points: Vec<(f64, f64)> = out.iter().map(|l| (l.mass_v0, l.variation)).collect();
    let (sigma_hat, intercept, degenerate) = fit_sigma(&points);

    // monotone: variation ordered like the scales
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&i, &j| out[i].scale.partial_cmp(&out[j].scale).unwrap());
    let monotone = order
        .windows(2)
        .all(|w| out[w[0]].variation <= out[w[1]].variation + 1e-15);

    Ok(SweepReport {
        legs: out,
        sigma_hat,
        log_intercept: intercept,
        monotone,
        degenerate_legs: degenerate,
    })
}

fn run_legs(
    grid: &Grid,
    spec: &InitialDataSpec,
    scales: &[f64],
    params: &Params,
    options: &ScenarioOptions,
) -> Vec<Result<SweepLeg, Error>> {
    let worker = |scale: f64| -> Result<SweepLeg, Error> {
        let mut leg_spec = spec.clone();
        leg_spec.v0_scale = scale;
        let (report, result) = stabilization_experiment(
            grid,
            &leg_spec,
            params,
            options,
            &mut crate::stepper::NullSink,
        )?;
        let snapshots: Vec<Field> = result.snapshots.iter().map(|(_, u)| u.clone()).collect();
        let variation = trajectory_variation(&snapshots)?;
        Ok(SweepLeg {
            scale,
            mass_v0: report.mass_v0,
            variation,
            report,
        })
    };

    let pool = options.threads.max(1).min(scales.len().max(1));
    if pool <= 1 {
        scales.iter().map(|&s| worker(s)).collect()
    } else {
        // bounded pool; results land in scale order regardless of timing
        let mut results: Vec<Option<Result<SweepLeg, Error>>> =
            (0..scales.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let worker_ref = &worker;
            let mut handles = Vec::new();
            for chunk in scales
                .iter()
                .enumerate()
                .collect::<Vec<_>>()
                .chunks(scales.len().div_ceil(pool))
            {
                let chunk: Vec<(usize, f64)> = chunk.iter().map(|(i, s)| (*i, **s)).collect();
                handles.push(scope.spawn(move || {
                    chunk
                        .into_iter()
                        .map(|(i, s)| (i, worker_ref(s)))
                        .collect::<Vec<_>>()
                }));
            }
            for handle in handles {
                for (i, res) in handle.join().expect("sweep worker panicked") {
                    results[i] = Some(res);
                }
            }
        });
        results
            .into_iter()
            .map(|r| r.expect("leg missing"))
            .collect()
    }
}

/// Least-squares fit of log V against log ∫v₀ over the legs with positive
/// variation. Returns (slope, intercept, number of degenerate legs); the
/// slope is undefined when fewer than two usable legs remain.
pub fn fit_sigma(points: &[(f64, f64)]) -> (Option<f64>, Option<f64>, usize) {
    let mut degenerate = 0usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(mass_v0, variation) in points {
        if variation > 0.0 && mass_v0 > 0.0 {
            xs.push(mass_v0.ln());
            ys.push(variation.ln());
        } else {
            degenerate += 1;
        }
    }
    if xs.len() < 2 {
        return (None, None, degenerate);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx > 0.0 {
        let slope = sxy / sxx;
        (Some(slope), Some(my - slope * mx), degenerate)
    } else {
        (None, None, degenerate)
    }
}

/// Plain-text summary table for a sweep.
pub fn sweep_summary_table(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str(
        "scale        mass_v0       variation     final_dist    max_dist      v_decay nonconst\n",
    );
    for leg in &report.legs {
        out.push_str(&format!(
            "{:<12.6e} {:<13.6e} {:<13.6e} {:<13.6e} {:<13.6e} {:<7} {:<8}\n",
            leg.scale,
            leg.mass_v0,
            leg.variation,
            leg.report.final_dual_dist_u0,
            leg.report.max_dual_dist_u0,
            leg.report.verdicts.v_decay,
            leg.report.verdicts.nonconstant,
        ));
    }
    match report.sigma_hat {
        Some(s) => out.push_str(&format!("fitted sigma_hat = {s:.6}\n")),
        None => out.push_str("fitted sigma_hat = undefined (degenerate sweep)\n"),
    }
    out
}

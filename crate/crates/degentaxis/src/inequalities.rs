//! Numerical exercise of the interpolation-inequality toolbox: evaluate both
//! sides on sampled positive fields, fit empirical constants, and probe for
//! violations inside and just outside the admissible exponent ranges.
//!
//! Four inequalities are covered, named by where their exponent hypotheses
//! come from:
//!
//! * `I2.28`: ∫φ^p ψ ≤ C{∫φ^{q−1}ψ|∇φ|² + ∫(φ/ψ)|∇ψ|² + ∫φψ},
//!   p = (2p*+3)/3, q ∈ [0, 2p*/3], ∫φ^{p*} ≤ M.
//! * `I2.38`: ‖φ^{(p+1)/2}√ψ‖²_{L^r} ≤ η∫φ^{p−1}ψ|∇φ|² +
//!   η∫φ^{p+1}ψ^{−1}|∇ψ|² + C{∫φ}^p{∫φψ}, p > 0, 1 < r < 6.
//! * `I3.10`: ∫φ^β ψ ≤ ∫φ^k ψ|∇φ|² + ∫φ|∇ψ|⁴/ψ³ + C∫φψ,
//!   k ∈ (−1, −1/3), β ∈ [1, k+8/3), ∫φ ≤ L.
//! * `I3.25`: ∫φ^β ψ ≤ η∫φ^{p−1}ψ|∇φ|² + η∫φ|∇ψ|^q/ψ^{q−1} + C∫φψ,
//!   p₀ > 3/2, p > 1, q > 2 + 3p/p₀, β ∈ [1, 2p₀/3 + p + 1), ∫φ^{p₀} ≤ L.
//!
//! For the η-weighted forms the fitted constant attaches only to the mass
//! term; for `I2.28` the constant multiplies the whole brace, as stated.

use crate::error::Error;
use crate::grid::{cell_gradient_magnitude, integrate, CompensatedSum, Field, Grid};
use crate::rng::Rng;

/// Which inequality a case exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InequalityId {
    I228,
    I238,
    I310,
    I325,
}

impl InequalityId {
    pub fn name(&self) -> &'static str {
        match self {
            InequalityId::I228 => "I2.28",
            InequalityId::I238 => "I2.38",
            InequalityId::I310 => "I3.10",
            InequalityId::I325 => "I3.25",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "I2.28" => Some(Self::I228),
            "I2.38" => Some(Self::I238),
            "I3.10" => Some(Self::I310),
            "I3.25" => Some(Self::I325),
            _ => None,
        }
    }

    pub fn all() -> [Self; 4] {
        [Self::I228, Self::I238, Self::I310, Self::I325]
    }
}

/// Exponent tuple, one variant per inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponents {
    I228 {
        p_star: f64,
        q: f64,
    },
    I238 {
        p: f64,
        r: f64,
        eta: f64,
    },
    I310 {
        k: f64,
        beta: f64,
    },
    I325 {
        p: f64,
        q: f64,
        beta: f64,
        p0: f64,
        eta: f64,
    },
}

impl Exponents {
    pub fn id(&self) -> InequalityId {
        match self {
            Exponents::I228 { .. } => InequalityId::I228,
            Exponents::I238 { .. } => InequalityId::I238,
            Exponents::I310 { .. } => InequalityId::I310,
            Exponents::I325 { .. } => InequalityId::I325,
        }
    }

    /// Hypotheses violated by this tuple (empty when admissible). The mass
    /// bound on φ is checked per sample, not here.
    pub fn violated_hypotheses(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            Exponents::I228 { p_star, q } => {
                if !(p_star >= 1.0) {
                    out.push(format!("p* >= 1 (got {p_star})"));
                }
                if !(0.0..=2.0 * p_star / 3.0).contains(&q) {
                    out.push(format!("q in [0, 2p*/3] (got {q})"));
                }
            }
            Exponents::I238 { p, r, eta } => {
                if !(p > 0.0) {
                    out.push(format!("p > 0 (got {p})"));
                }
                if !(r > 1.0 && r < 6.0) {
                    out.push(format!("1 < r < 6 (got {r})"));
                }
                if !(eta > 0.0) {
                    out.push(format!("eta > 0 (got {eta})"));
                }
            }
            Exponents::I310 { k, beta } => {
                if !(k > -1.0 && k < -1.0 / 3.0) {
                    out.push(format!("k in (-1, -1/3) (got {k})"));
                }
                if !(beta >= 1.0 && beta < k + 8.0 / 3.0) {
                    out.push(format!("beta in [1, k + 8/3) (got {beta})"));
                }
            }
            Exponents::I325 {
                p,
                q,
                beta,
                p0,
                eta,
            } => {
                if !(p0 > 1.5) {
                    out.push(format!("p0 > 3/2 (got {p0})"));
                }
                if !(p > 1.0) {
                    out.push(format!("p > 1 (got {p})"));
                }
                if !(q > 2.0 + 3.0 * p / p0) {
                    out.push(format!("q > 2 + 3p/p0 (got {q})"));
                }
                if !(beta >= 1.0 && beta < 2.0 * p0 / 3.0 + p + 1.0) {
                    out.push(format!("beta in [1, 2p0/3 + p + 1) (got {beta})"));
                }
                if !(eta > 0.0 && eta < 1.0) {
                    out.push(format!("eta in (0, 1) (got {eta})"));
                }
            }
        }
        out
    }

    /// Flat key=value listing for reports.
    pub fn describe(&self) -> String {
        match *self {
            Exponents::I228 { p_star, q } => format!("p*={p_star} q={q}"),
            Exponents::I238 { p, r, eta } => format!("p={p} r={r} eta={eta}"),
            Exponents::I310 { k, beta } => format!("k={k} beta={beta}"),
            Exponents::I325 {
                p,
                q,
                beta,
                p0,
                eta,
            } => {
                format!("p={p} q={q} beta={beta} p0={p0} eta={eta}")
            }
        }
    }
}

/// One evaluated case: both sides with the rhs broken into its terms.
#[derive(Debug, Clone)]
pub struct InequalityCase {
    pub exponents: Exponents,
    /// The mass bound M (I2.28) or L (I3.10, I3.25); unused for I2.38.
    pub mass_bound: f64,
    pub lhs: f64,
    /// The φ-gradient integral.
    pub grad_phi_term: f64,
    /// The ψ-gradient integral.
    pub grad_psi_term: f64,
    /// The term the fitted constant attaches to.
    pub mass_term: f64,
    /// Smallest C making the inequality hold for this sample.
    pub implied_constant: f64,
}

fn power_integral(phi: &Field, e: f64) -> f64 {
    if e == 1.0 {
        integrate(phi)
    } else {
        integrate(&phi.map(|x| x.powf(e)))
    }
}

/// Weighted gradient integral ∫φ^a ψ^b |∇f|^c with pointwise weights.
fn weighted_grad_integral(
    weight: impl Fn(f64, f64, f64) -> f64,
    phi: &Field,
    psi: &Field,
    grad_of: &Field,
) -> f64 {
    let g = cell_gradient_magnitude(grad_of);
    let mut acc = CompensatedSum::new();
    for ((&p, &s), &gv) in phi.values().iter().zip(psi.values()).zip(g.values()) {
        acc.add(weight(p, s, gv));
    }
    acc.value() * phi.grid().cell_volume()
}

/// Evaluate one inequality on a field pair. Exponent hypotheses must hold
/// and both fields must be strictly positive; the per-sample mass bound is
/// reported through `Error::Inadmissible` when violated.
pub fn evaluate(
    exponents: &Exponents,
    mass_bound: f64,
    phi: &Field,
    psi: &Field,
) -> Result<InequalityCase, Error> {
    let violated = exponents.violated_hypotheses();
    if let Some(first) = violated.first() {
        return Err(Error::Inadmissible {
            id: exponents.id().name(),
            hypothesis: first.clone(),
        });
    }
    evaluate_unchecked(exponents, mass_bound, phi, psi)
}

/// As [`evaluate`] but skipping the exponent-hypothesis gate, so the hunt can
/// probe outside the admissible ranges.
pub fn evaluate_unchecked(
    exponents: &Exponents,
    mass_bound: f64,
    phi: &Field,
    psi: &Field,
) -> Result<InequalityCase, Error> {
    if phi.grid() != psi.grid() {
        return Err(Error::Grid("phi and psi live on different grids".into()));
    }
    if !(phi.min() > 0.0) || !(psi.min() > 0.0) {
        return Err(Error::Inadmissible {
            id: exponents.id().name(),
            hypothesis: "fields strictly positive".into(),
        });
    }
    let id = exponents.id();
    let mass_ok = match *exponents {
        Exponents::I228 { p_star, .. } => power_integral(phi, p_star) <= mass_bound,
        Exponents::I310 { .. } => integrate(phi) <= mass_bound,
        Exponents::I325 { p0, .. } => power_integral(phi, p0) <= mass_bound,
        Exponents::I238 { .. } => true,
    };
    if !mass_ok {
        return Err(Error::Inadmissible {
            id: id.name(),
            hypothesis: "mass bound on phi".into(),
        });
    }

    let case = match *exponents {
        Exponents::I228 { p_star, q } => {
            let p = (2.0 * p_star + 3.0) / 3.0;
            let lhs = weighted_grad_integral(|f, s, _| f.powf(p) * s, phi, psi, phi);
            let grad_phi =
                weighted_grad_integral(|f, s, g| f.powf(q - 1.0) * s * g * g, phi, psi, phi);
            let grad_psi = weighted_grad_integral(|f, s, g| f / s * g * g, phi, psi, psi);
            let mass = integrate(&phi.zip_with(psi, |a, b| a * b));
            let denom = grad_phi + grad_psi + mass;
            InequalityCase {
                exponents: *exponents,
                mass_bound,
                lhs,
                grad_phi_term: grad_phi,
                grad_psi_term: grad_psi,
                mass_term: mass,
                implied_constant: if denom > 0.0 {
                    lhs / denom
                } else {
                    f64::INFINITY
                },
            }
        }
        Exponents::I238 { p, r, eta } => {
            let integrand = phi.zip_with(psi, |f, s| (f.powf(0.5 * (p + 1.0)) * s.sqrt()).powf(r));
            let lhs = integrate(&integrand).powf(2.0 / r);
            let grad_phi =
                weighted_grad_integral(|f, s, g| f.powf(p - 1.0) * s * g * g, phi, psi, phi);
            let grad_psi =
                weighted_grad_integral(|f, s, g| f.powf(p + 1.0) / s * g * g, phi, psi, psi);
            let mass =
                power_integral(phi, 1.0).powf(p) * integrate(&phi.zip_with(psi, |a, b| a * b));
            let implied = if mass > 0.0 {
                (lhs - eta * (grad_phi + grad_psi)) / mass
            } else {
                f64::INFINITY
            };
            InequalityCase {
                exponents: *exponents,
                mass_bound,
                lhs,
                grad_phi_term: grad_phi,
                grad_psi_term: grad_psi,
                mass_term: mass,
                implied_constant: implied,
            }
        }
        Exponents::I310 { k, beta } => {
            let lhs = weighted_grad_integral(|f, s, _| f.powf(beta) * s, phi, psi, phi);
            let grad_phi = weighted_grad_integral(|f, s, g| f.powf(k) * s * g * g, phi, psi, phi);
            let grad_psi = weighted_grad_integral(|f, s, g| f * s * (g / s).powi(4), phi, psi, psi);
            let mass = integrate(&phi.zip_with(psi, |a, b| a * b));
            let implied = if mass > 0.0 {
                (lhs - grad_phi - grad_psi) / mass
            } else {
                f64::INFINITY
            };
            InequalityCase {
                exponents: *exponents,
                mass_bound,
                lhs,
                grad_phi_term: grad_phi,
                grad_psi_term: grad_psi,
                mass_term: mass,
                implied_constant: implied,
            }
        }
        Exponents::I325 {
            p, q, beta, eta, ..
        } => {
            let lhs = weighted_grad_integral(|f, s, _| f.powf(beta) * s, phi, psi, phi);
            let grad_phi =
                weighted_grad_integral(|f, s, g| f.powf(p - 1.0) * s * g * g, phi, psi, phi);
            let grad_psi = weighted_grad_integral(|f, s, g| f * s * (g / s).powf(q), phi, psi, psi);
            let mass = integrate(&phi.zip_with(psi, |a, b| a * b));
            let implied = if mass > 0.0 {
                (lhs - eta * (grad_phi + grad_psi)) / mass
            } else {
                f64::INFINITY
            };
            InequalityCase {
                exponents: *exponents,
                mass_bound,
                lhs,
                grad_phi_term: grad_phi,
                grad_psi_term: grad_psi,
                mass_term: mass,
                implied_constant: implied,
            }
        }
    };
    Ok(case)
}

/// Strictly positive random field: a shifted truncated cosine series.
/// Deterministic per seed; the minimum never falls below `min_value`.
pub fn sample_positive_field(
    grid: &Grid,
    seed: u64,
    mode_count: usize,
    min_value: f64,
) -> Result<Field, Error> {
    if !(min_value > 0.0) {
        return Err(Error::Params(format!(
            "min_value must be > 0, got {min_value}"
        )));
    }
    let mut rng = Rng::seed_from(seed);
    let offset = rng.uniform(0.5, 1.5);
    // overall amplitude is itself random, biased toward small values, so
    // near-flat samples are common; the batch maximum of fitted constants
    // then saturates instead of riding a thin tail
    let amp_scale = rng.next_f64().powi(2);
    let pi = std::f64::consts::PI;
    struct Mode {
        amp: f64,
        freq: [f64; 3],
    }
    let modes: Vec<Mode> = (1..=mode_count)
        .map(|m| {
            let amp = amp_scale * rng.uniform(-1.0, 1.0) / m as f64;
            let mut freq = [0.0; 3];
            for f in freq.iter_mut().take(grid.dim()) {
                *f = rng.below(4) as f64 + 1.0;
            }
            Mode { amp, freq }
        })
        .collect();
    let extents = *grid.extents();
    let raw = Field::from_fn(grid, |x| {
        let mut s = 0.0;
        for mode in &modes {
            let mut term = mode.amp;
            for a in 0..grid.dim() {
                term *= (pi * mode.freq[a] * x[a] / extents[a]).cos();
            }
            s += term;
        }
        s
    });
    let shift = min_value + offset - raw.min();
    Ok(raw.map(|x| x + shift))
}

/// Result of fitting the empirical constant over a sample batch.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub c_hat: f64,
    /// Seed of the sample attaining the maximum.
    pub argmax_seed: u64,
    /// Implied constants of every used sample, in seed order.
    pub ratios: Vec<f64>,
    /// Samples skipped for degenerate denominators.
    pub skipped_degenerate: usize,
    /// Samples skipped because the φ mass bound failed.
    pub skipped_mass_bound: usize,
    /// Evaluated rows, ready for the CSV report.
    pub rows: Vec<SampleRow>,
}

/// One CSV row of the report.
#[derive(Debug, Clone)]
pub struct SampleRow {
    pub id: InequalityId,
    pub exponents: Exponents,
    pub seed: u64,
    pub lhs: f64,
    pub grad_phi_term: f64,
    pub grad_psi_term: f64,
    pub mass_term: f64,
    pub implied_constant: f64,
}

pub fn csv_header() -> &'static str {
    "id,exponents,seed,lhs,grad_phi_term,grad_psi_term,mass_term,implied_constant"
}

impl SampleRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.id.name(),
            self.exponents.describe().replace(' ', ";"),
            self.seed,
            self.lhs,
            self.grad_phi_term,
            self.grad_psi_term,
            self.mass_term,
            self.implied_constant
        )
    }
}

/// Settings shared by the fitting and hunting drivers.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub grid: Grid,
    pub mode_count: usize,
    pub min_value: f64,
    /// Mass bound M or L.
    pub mass_bound: f64,
}

/// C_hat = max over admissible samples of the implied constant, clamped at 0.
pub fn fit_constant(
    exponents: &Exponents,
    cfg: &HarnessConfig,
    sample_count: usize,
    seed: u64,
) -> Result<FitResult, Error> {
    let violated = exponents.violated_hypotheses();
    if let Some(first) = violated.first() {
        return Err(Error::Inadmissible {
            id: exponents.id().name(),
            hypothesis: first.clone(),
        });
    }
    if sample_count == 0 {
        return Err(Error::Params("sample_count must be positive".into()));
    }
    fit_constant_unchecked(exponents, cfg, sample_count, seed)
}

fn fit_constant_unchecked(
    exponents: &Exponents,
    cfg: &HarnessConfig,
    sample_count: usize,
    seed: u64,
) -> Result<FitResult, Error> {
    let mut c_hat = 0.0f64;
    let mut argmax_seed = seed;
    let mut ratios = Vec::with_capacity(sample_count);
    let mut rows = Vec::with_capacity(sample_count);
    let mut skipped_degenerate = 0;
    let mut skipped_mass_bound = 0;
    for i in 0..sample_count {
        let sample_seed = seed.wrapping_add(2 * i as u64);
        let phi = sample_positive_field(&cfg.grid, sample_seed, cfg.mode_count, cfg.min_value)?;
        let psi = sample_positive_field(
            &cfg.grid,
            sample_seed.wrapping_add(1),
            cfg.mode_count,
            cfg.min_value,
        )?;
        match evaluate_unchecked(exponents, cfg.mass_bound, &phi, &psi) {
            Ok(case) => {
                if case.mass_term < 1e-12 {
                    skipped_degenerate += 1;
                    continue;
                }
                let implied = case.implied_constant.max(0.0);
                ratios.push(implied);
                if implied > c_hat {
                    c_hat = implied;
                    argmax_seed = sample_seed;
                }
                rows.push(SampleRow {
                    id: exponents.id(),
                    exponents: *exponents,
                    seed: sample_seed,
                    lhs: case.lhs,
                    grad_phi_term: case.grad_phi_term,
                    grad_psi_term: case.grad_psi_term,
                    mass_term: case.mass_term,
                    implied_constant: case.implied_constant,
                });
            }
            Err(Error::Inadmissible { hypothesis, .. }) if hypothesis == "mass bound on phi" => {
                skipped_mass_bound += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FitResult {
        c_hat,
        argmax_seed,
        ratios,
        skipped_degenerate,
        skipped_mass_bound,
        rows,
    })
}

/// Hunt outcome for one exponent point.
#[derive(Debug, Clone)]
pub struct PointReport {
    pub exponents: Exponents,
    pub violated_hypotheses: Vec<String>,
    /// Fit on the calibration batch (admissible points only).
    pub c_hat: f64,
    /// C_cap used for violation classification.
    pub c_cap: f64,
    /// (seed, implied constant) of probe samples exceeding C_cap.
    pub violations: Vec<(u64, f64)>,
    /// For inadmissible points: C_hat under grid refinement, (cells, C_hat).
    pub refinement_growth: Vec<(usize, f64)>,
}

/// Report over an exponent grid.
#[derive(Debug, Clone, Default)]
pub struct HuntReport {
    pub points: Vec<PointReport>,
}

/// Default cap separating "constant exists but large" from blowup.
pub const DEFAULT_C_CAP: f64 = 1e6;

/// Three admissible exponent points per inequality, used by the default
/// verification batch.
pub fn default_exponent_points(id: InequalityId) -> Vec<Exponents> {
    match id {
        InequalityId::I228 => vec![
            Exponents::I228 {
                p_star: 1.0,
                q: 0.0,
            },
            Exponents::I228 {
                p_star: 1.0,
                q: 2.0 / 3.0,
            },
            Exponents::I228 {
                p_star: 1.5,
                q: 0.5,
            },
        ],
        InequalityId::I238 => vec![
            Exponents::I238 {
                p: 1.0,
                r: 2.0,
                eta: 0.5,
            },
            Exponents::I238 {
                p: 2.0,
                r: 3.0,
                eta: 0.5,
            },
            Exponents::I238 {
                p: 0.5,
                r: 1.5,
                eta: 0.5,
            },
        ],
        InequalityId::I310 => vec![
            Exponents::I310 { k: -0.5, beta: 2.0 },
            Exponents::I310 { k: -0.9, beta: 1.5 },
            Exponents::I310 { k: -0.4, beta: 1.2 },
        ],
        InequalityId::I325 => vec![
            Exponents::I325 {
                p: 2.0,
                q: 6.5,
                beta: 2.0,
                p0: 1.6,
                eta: 0.5,
            },
            Exponents::I325 {
                p: 1.5,
                q: 5.5,
                beta: 3.0,
                p0: 1.6,
                eta: 0.5,
            },
            Exponents::I325 {
                p: 2.5,
                q: 7.2,
                beta: 1.5,
                p0: 1.6,
                eta: 0.9,
            },
        ],
    }
}

/// One boundary point per inequality, just outside the admissible range, for
/// the refinement-growth log.
pub fn default_boundary_points(id: InequalityId) -> Vec<Exponents> {
    match id {
        InequalityId::I228 => vec![Exponents::I228 {
            p_star: 1.0,
            q: 2.0 / 3.0 + 0.3,
        }],
        InequalityId::I238 => vec![Exponents::I238 {
            p: 1.0,
            r: 6.0,
            eta: 0.5,
        }],
        InequalityId::I310 => vec![Exponents::I310 {
            k: -0.5,
            beta: -0.5 + 8.0 / 3.0,
        }],
        InequalityId::I325 => vec![Exponents::I325 {
            p: 2.0,
            q: 2.0 + 3.0 * 2.0 / 1.6,
            beta: 2.0,
            p0: 1.6,
            eta: 0.5,
        }],
    }
}

/// Probe each exponent point with `budget` fresh samples against
/// C_cap = 2·C_hat (calibrated on a disjoint batch). Inadmissible points are
/// not pass/failed; their C_hat growth under grid refinement is logged.
pub fn violation_hunt(
    exponent_grid: &[Exponents],
    cfg: &HarnessConfig,
    budget: usize,
    seed: u64,
) -> Result<HuntReport, Error> {
    if budget == 0 {
        return Err(Error::Params("hunt budget must be positive".into()));
    }
    let mut report = HuntReport::default();
    for (point_idx, exponents) in exponent_grid.iter().enumerate() {
        let violated = exponents.violated_hypotheses();
        let point_seed = seed.wrapping_add(0x1000_0000u64.wrapping_mul(point_idx as u64 + 1));
        if violated.is_empty() {
            let calib = fit_constant_unchecked(exponents, cfg, budget, point_seed)?;
            let c_cap = (2.0 * calib.c_hat).clamp(f64::MIN_POSITIVE, DEFAULT_C_CAP);
            let probe = fit_constant_unchecked(
                exponents,
                cfg,
                budget,
                point_seed.wrapping_add(2 * budget as u64 + 1),
            )?;
            let violations = probe
                .rows
                .iter()
                .filter(|row| row.implied_constant > c_cap)
                .map(|row| (row.seed, row.implied_constant))
                .collect();
            report.points.push(PointReport {
                exponents: *exponents,
                violated_hypotheses: violated,
                c_hat: calib.c_hat,
                c_cap,
                violations,
                refinement_growth: Vec::new(),
            });
        } else {
            // outside the admissible range: log growth under refinement
            let mut growth = Vec::new();
            for factor in [1usize, 2, 4] {
                let cells: Vec<usize> = cfg.grid.cells()[..cfg.grid.dim()]
                    .iter()
                    .map(|&c| c * factor)
                    .collect();
                let extents = cfg.grid.extents()[..cfg.grid.dim()].to_vec();
                let fine = crate::grid::make_grid(cfg.grid.dim(), &cells, &extents)?;
                let fine_cfg = HarnessConfig {
                    grid: fine,
                    ..cfg.clone()
                };
                let fit = fit_constant_unchecked(exponents, &fine_cfg, budget, point_seed)?;
                growth.push((fine_cfg.grid.n_cells(), fit.c_hat));
            }
            report.points.push(PointReport {
                exponents: *exponents,
                violated_hypotheses: violated,
                c_hat: growth.first().map(|g| g.1).unwrap_or(0.0),
                c_cap: DEFAULT_C_CAP,
                violations: Vec::new(),
                refinement_growth: growth,
            });
        }
    }
    Ok(report)
}

//! Integral functionals tracked along trajectories: masses, extrema,
//! Lᵖ norms, the weighted gradient functionals ∫|∇v|^q/v^{q−1}, the
//! quasi-energies F, G, H and the dissipation integrals whose time integrals
//! stay bounded on admissible runs.
//!
//! Quantities with v in a denominator are evaluated as v·(|∇v|/v)^q so they
//! stay well-scaled while v decays over many orders of magnitude. All cells
//! share the single cell-centered gradient definition from [`crate::grid`].

use serde::Serialize;

use crate::error::Error;
use crate::grid::{cell_gradient_magnitude, integrate, CompensatedSum, Field};
use crate::model::State;

/// Which exponents the diagnostics track.
#[derive(Debug, Clone)]
pub struct FunctionalConfig {
    /// Exponents for ∫u^p.
    pub p_list: Vec<f64>,
    /// Exponents for ∫|∇v|^q/v^{q−1}; every q ≥ 2.
    pub q_list: Vec<f64>,
    /// Exponents for ∫u^k v|∇u|².
    pub k_list: Vec<f64>,
    /// Coefficient a in F = a∫|∇v|²/v − ∫ln u.
    pub f_coeff: f64,
    /// Coefficient a in G = ∫u ln u + a∫|∇v|⁴/v³.
    pub g_coeff: f64,
    /// Exponent p > 1 in H.
    pub h_p: f64,
    /// Exponent q ≥ 2 in H.
    pub h_q: f64,
}

impl FunctionalConfig {
    /// Defaults mirroring the estimate ladder: p ∈ {2, p₀, 4} and
    /// k ∈ {1−α, (1−α)/2, 0} when α sits in the admissible window,
    /// with H driven at p = 2, q just above 2 + 3p/p₀.
    pub fn for_alpha(alpha: f64) -> Self {
        let (p0, k_lo) = match crate::model::regime_exponents(alpha) {
            Ok(r) => (r.p0, 1.0 - alpha),
            Err(_) => (2.0, -0.5),
        };
        let h_p = 2.0;
        let h_q = (2.0 + 3.0 * h_p / p0 + 0.25).max(4.0);
        Self {
            p_list: vec![2.0, p0, 4.0],
            q_list: vec![2.0, 4.0],
            k_list: vec![k_lo, 0.5 * k_lo, 0.0],
            f_coeff: 1.0,
            g_coeff: 1.0,
            h_p,
            h_q,
        }
    }
}

/// One time-stamped row of every tracked functional and budget.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub coupling: f64,
    pub cumulative_consumption: f64,
    /// Pairs [p, ∫u^p] in configuration order.
    pub lp_norms: Vec<(f64, f64)>,
    pub max_u: f64,
    pub max_v: f64,
    pub min_v: f64,
    pub grad_v_l2: f64,
    /// Pairs [q, ∫|∇v|^q/v^{q−1}] in configuration order.
    pub gradv_q: Vec<(f64, f64)>,
    /// F = a∫|∇v|²/v − ∫ln u; absent while any cell has u = 0.
    #[serde(rename = "F")]
    pub quasi_f: Option<f64>,
    #[serde(rename = "G")]
    pub quasi_g: f64,
    #[serde(rename = "H")]
    pub quasi_h: f64,
    pub dissipations: DissipationRecord,
    pub clip_budget: f64,
    /// ‖u(t) − u₀‖_* when the dual-norm tracker is enabled for this sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_dist_u0: Option<f64>,
}

/// The dissipation integrals of the estimate ladder.
#[derive(Debug, Clone, Serialize)]
pub struct DissipationRecord {
    /// Triples [k, ∫u^k v|∇u|², excluded volume fraction] (cells with u = 0
    /// are excluded when k < 0).
    pub uk_v_grad_u2: Vec<(f64, f64, f64)>,
    /// ∫(u/v)|∇v|².
    pub u_over_v_grad_v2: f64,
    /// [∫(v/u)|∇u|², excluded volume fraction].
    pub v_over_u_grad_u2: (f64, f64),
    /// ∫|∇v|⁴/v³.
    pub grad_v4_over_v3: f64,
    /// ∫u|∇v|⁴/v³.
    pub u_grad_v4_over_v3: f64,
}

/// Masses, coupling and extrema. Does not require v > 0.
pub struct BasicMoments {
    pub mass_u: f64,
    pub mass_v: f64,
    pub coupling: f64,
    pub max_u: f64,
    pub max_v: f64,
    pub min_v: f64,
    pub min_u: f64,
}

pub fn basic_moments(state: &State) -> BasicMoments {
    let coupling = integrate(&state.u.zip_with(&state.v, |a, b| a * b));
    BasicMoments {
        mass_u: integrate(&state.u),
        mass_v: integrate(&state.v),
        coupling,
        max_u: state.u.max(),
        max_v: state.v.max(),
        min_v: state.v.min(),
        min_u: state.u.min(),
    }
}

/// ∫|∇v|^q / v^{q−1} for q ≥ 2, evaluated as ∫v·(|∇v|/v)^q.
pub fn gradv_functional(state: &State, q: f64) -> Result<f64, Error> {
    if q < 2.0 {
        return Err(Error::Params(format!(
            "gradient functional needs q >= 2, got {q}"
        )));
    }
    if state.v.min() <= 0.0 {
        return Err(Error::UndefinedFunctional(
            "gradient functional needs v > 0".into(),
        ));
    }
    let g = cell_gradient_magnitude(&state.v);
    let density = state.v.zip_with(&g, |v, gv| v * (gv / v).powf(q));
    Ok(integrate(&density))
}

/// F = a∫|∇v|²/v − ∫ln u. Undefined (error) when any cell has u ≤ 0.
pub fn quasi_energy_f(state: &State, a: f64) -> Result<f64, Error> {
    if state.u.min() <= 0.0 {
        return Err(Error::UndefinedFunctional(
            "F needs strictly positive u".into(),
        ));
    }
    let grad_term = gradv_functional(state, 2.0)?;
    let ln_u = integrate(&state.u.map(f64::ln));
    Ok(a * grad_term - ln_u)
}

/// G = ∫u ln u + a∫|∇v|⁴/v³, with 0·ln 0 := 0.
pub fn quasi_energy_g(state: &State, a: f64) -> Result<f64, Error> {
    let u_ln_u = integrate(&state.u.map(|u| if u > 0.0 { u * u.ln() } else { 0.0 }));
    let grad_term = gradv_functional(state, 4.0)?;
    Ok(u_ln_u + a * grad_term)
}

/// H = ∫|∇v|^q/v^{q−1} + ∫u^p for p > 1, q ≥ 2.
pub fn quasi_energy_h(state: &State, p: f64, q: f64) -> Result<f64, Error> {
    if p <= 1.0 {
        return Err(Error::Params(format!("H needs p > 1, got {p}")));
    }
    Ok(gradv_functional(state, q)? + lp_norm(&state.u, p))
}

/// ∫u^p (the p-th power integral, not the norm itself).
pub fn lp_norm(u: &Field, p: f64) -> f64 {
    integrate(&u.map(|x| x.powf(p)))
}

/// All dissipation integrals. Entries with u in a denominator (or u^k with
/// k < 0) are accumulated over cells with u > 0 only; the skipped volume is
/// reported as a fraction of the domain.
pub fn dissipations(state: &State, k_list: &[f64]) -> Result<DissipationRecord, Error> {
    if state.v.min() <= 0.0 {
        return Err(Error::UndefinedFunctional("dissipations need v > 0".into()));
    }
    let grid = state.grid();
    let vol = grid.cell_volume();
    let domain = grid.total_volume();
    let gu = cell_gradient_magnitude(&state.u);
    let gv = cell_gradient_magnitude(&state.v);
    let u = state.u.values();
    let v = state.v.values();

    let mut uk_v_grad_u2 = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut acc = CompensatedSum::new();
        let mut excluded = 0usize;
        for i in 0..u.len() {
            if u[i] <= 0.0 && k < 0.0 {
                excluded += 1;
                continue;
            }
            let weight = if k == 0.0 { 1.0 } else { u[i].powf(k) };
            let g = gu.values()[i];
            acc.add(weight * v[i] * g * g);
        }
        uk_v_grad_u2.push((k, acc.value() * vol, excluded as f64 * vol / domain));
    }

    let mut u_over_v = CompensatedSum::new();
    let mut v_over_u = CompensatedSum::new();
    let mut v_over_u_excluded = 0usize;
    let mut gv4 = CompensatedSum::new();
    let mut ugv4 = CompensatedSum::new();
    for i in 0..u.len() {
        let ratio = gv.values()[i] / v[i];
        u_over_v.add(u[i] * v[i] * ratio * ratio);
        let r4 = v[i] * ratio.powi(4);
        gv4.add(r4);
        ugv4.add(u[i] * r4);
        if u[i] > 0.0 {
            let g = gu.values()[i];
            v_over_u.add(v[i] / u[i] * g * g);
        } else {
            v_over_u_excluded += 1;
        }
    }

    Ok(DissipationRecord {
        uk_v_grad_u2,
        u_over_v_grad_v2: u_over_v.value() * vol,
        v_over_u_grad_u2: (
            v_over_u.value() * vol,
            v_over_u_excluded as f64 * vol / domain,
        ),
        grad_v4_over_v3: gv4.value() * vol,
        u_grad_v4_over_v3: ugv4.value() * vol,
    })
}

/// Assemble a full record at the state's current time.
pub fn compute_record(
    state: &State,
    cfg: &FunctionalConfig,
    cumulative_consumption: f64,
    clip_budget: f64,
    dual_dist_u0: Option<f64>,
) -> Result<DiagnosticsRecord, Error> {
    let moments = basic_moments(state);
    if moments.min_v <= 0.0 {
        return Err(Error::UndefinedFunctional(
            "diagnostics need min v > 0".into(),
        ));
    }
    let lp_norms = cfg
        .p_list
        .iter()
        .map(|&p| (p, lp_norm(&state.u, p)))
        .collect();
    let mut gradv_q = Vec::with_capacity(cfg.q_list.len());
    for &q in &cfg.q_list {
        gradv_q.push((q, gradv_functional(state, q)?));
    }
    let gv = cell_gradient_magnitude(&state.v);
    let grad_v_l2 = integrate(&gv.map(|g| g * g));
    let quasi_f = quasi_energy_f(state, cfg.f_coeff).ok();
    let quasi_g = quasi_energy_g(state, cfg.g_coeff)?;
    let quasi_h = quasi_energy_h(state, cfg.h_p, cfg.h_q)?;
    let dissip = dissipations(state, &cfg.k_list)?;

    Ok(DiagnosticsRecord {
        t: state.t,
        mass_u: moments.mass_u,
        mass_v: moments.mass_v,
        coupling: moments.coupling,
        cumulative_consumption,
        lp_norms,
        max_u: moments.max_u,
        max_v: moments.max_v,
        min_v: moments.min_v,
        grad_v_l2,
        gradv_q,
        quasi_f,
        quasi_g,
        quasi_h,
        dissipations: dissip,
        clip_budget,
        dual_dist_u0,
    })
}

impl DiagnosticsRecord {
    /// One NDJSON line (no trailing newline).
    pub fn to_ndjson(&self) -> String {
        serde_json::to_string(self).expect("diagnostics record serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::{E, PI};

    fn unit_state(u: f64, v: f64) -> State {
        let g = make_grid(1, &[16], &[1.0]).unwrap();
        State::new(Field::constant(&g, u), Field::constant(&g, v), 0.0).unwrap()
    }

    #[test]
    fn basic_moments_constants() {
        let m = basic_moments(&unit_state(1.0, 1.0));
        assert!((m.mass_u - 1.0).abs() < 1e-14);
        assert!((m.mass_v - 1.0).abs() < 1e-14);
        assert!((m.coupling - 1.0).abs() < 1e-14);

        let g = make_grid(1, &[8], &[1.0]).unwrap();
        let s = State {
            u: Field::from_fn(&g, |x| 1.0 + x[0]),
            v: Field::constant(&g, 0.0),
            t: 0.0,
        };
        assert_eq!(basic_moments(&s).coupling, 0.0);
    }

    #[test]
    fn coupling_bounded_by_holder() {
        let g = make_grid(2, &[9, 9], &[1.0, 1.0]).unwrap();
        let mut rng = crate::rng::Rng::seed_from(3);
        for _ in 0..20 {
            let a = rng.uniform(0.1, 3.0);
            let b = rng.uniform(0.1, 2.0);
            let u = Field::from_fn(&g, |x| a * (1.0 + (5.0 * x[0]).sin().abs()));
            let v = Field::from_fn(&g, |x| b * (1.0 + (3.0 * x[1]).cos().abs()));
            let s = State::new(u, v, 0.0).unwrap();
            let m = basic_moments(&s);
            assert!(m.coupling <= m.max_v * m.mass_u + 1e-12);
        }
    }

    #[test]
    fn gradv_functional_cases() {
        let s = unit_state(1.0, 2.5);
        assert_eq!(gradv_functional(&s, 2.0).unwrap(), 0.0);
        assert!(gradv_functional(&s, 1.5).is_err());

        // v = e^x on (0,1): ∫|∇v|²/v = ∫ e^x = e − 1
        let g = make_grid(1, &[256], &[1.0]).unwrap();
        let v = Field::from_fn(&g, |x| x[0].exp());
        let s = State::new(Field::constant(&g, 1.0), v, 0.0).unwrap();
        let val = gradv_functional(&s, 2.0).unwrap();
        assert!((val - (E - 1.0)).abs() < 1e-2, "got {val}");
    }

    #[test]
    fn gradv_functional_scaling_exact() {
        let g = make_grid(1, &[64], &[1.0]).unwrap();
        let v = Field::from_fn(&g, |x| 1.0 + 0.5 * (PI * x[0]).cos());
        let v2 = v.map(|x| 2.0 * x);
        let u = Field::constant(&g, 1.0);
        for q in [2.0, 4.0] {
            let a = gradv_functional(&State::new(u.clone(), v.clone(), 0.0).unwrap(), q).unwrap();
            let b = gradv_functional(&State::new(u.clone(), v2.clone(), 0.0).unwrap(), q).unwrap();
            assert_eq!((2.0 * a).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn quasi_f_cases() {
        assert_eq!(quasi_energy_f(&unit_state(1.0, 3.0), 1.0).unwrap(), 0.0);
        let val = quasi_energy_f(&unit_state(E, 1.0), 1.0).unwrap();
        assert!((val - (-1.0)).abs() < 1e-12);

        let g = make_grid(1, &[4], &[1.0]).unwrap();
        let u = Field::new(&g, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let s = State::new(u, Field::constant(&g, 1.0), 0.0).unwrap();
        assert!(matches!(
            quasi_energy_f(&s, 1.0),
            Err(Error::UndefinedFunctional(_))
        ));
    }

    #[test]
    fn quasi_g_cases() {
        assert_eq!(quasi_energy_g(&unit_state(1.0, 2.0), 1.0).unwrap(), 0.0);
        let val = quasi_energy_g(&unit_state(2.0, 1.0), 1.0).unwrap();
        assert!((val - 2.0 * 2.0_f64.ln()).abs() < 1e-12);

        let g = make_grid(1, &[4], &[1.0]).unwrap();
        let u = Field::new(&g, vec![1.0, 0.0, 2.0, 1.0]).unwrap();
        let s = State::new(u, Field::constant(&g, 1.0), 0.0).unwrap();
        assert!(quasi_energy_g(&s, 1.0).unwrap().is_finite());
    }

    #[test]
    fn quasi_h_cases() {
        assert!((quasi_energy_h(&unit_state(1.0, 1.0), 2.0, 2.0).unwrap() - 1.0).abs() < 1e-13);
        assert!(quasi_energy_h(&unit_state(1.0, 1.0), 1.0, 2.0).is_err());
        assert!(quasi_energy_h(&unit_state(1.0, 1.0), 2.0, 1.0).is_err());

        // H nondecreasing in p when u >= 1 everywhere
        let g = make_grid(1, &[32], &[1.0]).unwrap();
        let u = Field::from_fn(&g, |x| 1.0 + x[0]);
        let v = Field::from_fn(&g, |x| 1.0 + 0.5 * (PI * x[0]).cos());
        let s = State::new(u, v, 0.0).unwrap();
        let h2 = quasi_energy_h(&s, 2.0, 2.0).unwrap();
        let h3 = quasi_energy_h(&s, 3.0, 2.0).unwrap();
        assert!(h3 >= h2);
    }

    #[test]
    fn dissipations_cases() {
        // constant u: all ∫u^k v|∇u|² vanish
        let g = make_grid(1, &[64], &[1.0]).unwrap();
        let u = Field::constant(&g, 2.0);
        let v = Field::from_fn(&g, |x| 1.0 + 0.5 * (PI * x[0]).cos());
        let s = State::new(u, v, 0.0).unwrap();
        let d = dissipations(&s, &[-0.55, 0.0]).unwrap();
        for &(_, val, _) in &d.uk_v_grad_u2 {
            assert_eq!(val, 0.0);
        }

        // constant v: ∫(u/v)|∇v|² = ∫|∇v|⁴/v³ = 0
        let u = Field::from_fn(&g, |x| 1.0 + x[0]);
        let v = Field::constant(&g, 0.7);
        let s = State::new(u, v, 0.0).unwrap();
        let d = dissipations(&s, &[0.0]).unwrap();
        assert_eq!(d.u_over_v_grad_v2, 0.0);
        assert_eq!(d.grad_v4_over_v3, 0.0);
        assert_eq!(d.u_grad_v4_over_v3, 0.0);
    }

    #[test]
    fn dissipation_cosine_oracle() {
        // u = v = 1 + cos(πx)/2, k = 0: ∫v|∇u|² = π²/8
        let g = make_grid(1, &[256], &[1.0]).unwrap();
        let f = Field::from_fn(&g, |x| 1.0 + 0.5 * (PI * x[0]).cos());
        let s = State::new(f.clone(), f, 0.0).unwrap();
        let d = dissipations(&s, &[0.0]).unwrap();
        let expected = 0.125 * PI * PI;
        assert!(
            (d.uk_v_grad_u2[0].1 - expected).abs() < 1e-2,
            "got {}",
            d.uk_v_grad_u2[0].1
        );
    }

    #[test]
    fn excluded_volume_reported() {
        let g = make_grid(1, &[4], &[1.0]).unwrap();
        let u = Field::new(&g, vec![0.0, 1.0, 2.0, 1.0]).unwrap();
        let v = Field::constant(&g, 1.0);
        let s = State::new(u, v, 0.0).unwrap();
        let d = dissipations(&s, &[-0.5]).unwrap();
        assert!((d.uk_v_grad_u2[0].2 - 0.25).abs() < 1e-14);
        assert!((d.v_over_u_grad_u2.1 - 0.25).abs() < 1e-14);
    }

    #[test]
    fn record_serializes_with_stable_names() {
        let s = unit_state(1.0, 1.0);
        let cfg = FunctionalConfig::for_alpha(1.55);
        let rec = compute_record(&s, &cfg, 0.0, 0.0, None).unwrap();
        let line = rec.to_ndjson();
        for key in [
            "\"t\":",
            "\"mass_u\":",
            "\"mass_v\":",
            "\"coupling\":",
            "\"cumulative_consumption\":",
            "\"lp_norms\":",
            "\"max_u\":",
            "\"max_v\":",
            "\"min_v\":",
            "\"grad_v_l2\":",
            "\"gradv_q\":",
            "\"F\":",
            "\"G\":",
            "\"H\":",
            "\"dissipations\":",
            "\"clip_budget\":",
        ] {
            assert!(line.contains(key), "missing {key} in {line}");
        }
        assert!(!line.contains("dual_dist_u0"));
        let rec2 = compute_record(&s, &cfg, 0.0, 0.0, Some(0.5)).unwrap();
        assert!(rec2.to_ndjson().contains("\"dual_dist_u0\":0.5"));
    }

    #[test]
    fn constant_state_record_matches_closed_forms() {
        let s = unit_state(2.0, 1.0);
        let cfg = FunctionalConfig::for_alpha(1.55);
        let rec = compute_record(&s, &cfg, 0.0, 0.0, None).unwrap();
        assert!((rec.mass_u - 2.0).abs() < 1e-13);
        assert!((rec.coupling - 2.0).abs() < 1e-13);
        assert_eq!(rec.grad_v_l2, 0.0);
        assert!((rec.quasi_f.unwrap() + 2.0_f64.ln()).abs() < 1e-14);
        assert!((rec.quasi_g - 2.0 * 2.0_f64.ln()).abs() < 1e-12);
        // H = ∫u^p = 2^p on the unit domain
        assert!((rec.quasi_h - 2.0_f64.powf(cfg.h_p)).abs() < 1e-12);
        for &(p, val) in &rec.lp_norms {
            assert!((val - 2.0_f64.powf(p)).abs() < 1e-12);
        }
    }
}

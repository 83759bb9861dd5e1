//! Property tests for the structural invariants of the discrete calculus,
//! the scheme and the dual norm.

use proptest::prelude::*;

use degentaxis::dualnorm::dual_norm;
use degentaxis::grid::{divergence, integrate, integrate_product, make_grid, FaceField, Field};
use degentaxis::linsolve::solve_v_system;
use degentaxis::model::{rhs_u, taxis_flux, v_implicit_operator, Params, State};
use degentaxis::snapshot::{read_state, write_state};

fn grid_1d(n: usize) -> degentaxis::grid::Grid {
    make_grid(1, &[n], &[1.0]).unwrap()
}

fn grid_2d(nx: usize, ny: usize) -> degentaxis::grid::Grid {
    make_grid(2, &[nx, ny], &[1.0, 1.3]).unwrap()
}

/// Smooth positive field built from a few low modes, parameterized by plain
/// floats so proptest can shrink it.
fn smooth_field(grid: &degentaxis::grid::Grid, base: f64, amps: &[f64; 3]) -> Field {
    let pi = std::f64::consts::PI;
    let e = *grid.extents();
    Field::from_fn(grid, |x| {
        let mut v = base;
        for (m, &a) in amps.iter().enumerate() {
            let k = (m + 1) as f64;
            v += a * (pi * k * x[0] / e[0]).cos();
            if grid.dim() > 1 {
                v += 0.5 * a * (pi * k * x[1] / e[1]).cos();
            }
        }
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // discrete divergence theorem at machine precision
    #[test]
    fn divergence_integrates_to_zero(
        nx in 3usize..10,
        ny in 3usize..8,
        fill in proptest::collection::vec(-10.0f64..10.0, 200),
    ) {
        let g = grid_2d(nx, ny);
        let mut flux = FaceField::zeros(&g);
        let mut k = 0usize;
        for a in 0..2 {
            for v in flux.component_mut(a).iter_mut() {
                *v = fill[k % fill.len()];
                k += 1;
            }
        }
        let d = divergence(&flux);
        prop_assert!(integrate(&d).abs() < 1e-13);
    }

    // ∫rhs_u = ℓ∫uv for smooth positive states
    #[test]
    fn rhs_conserves_reaction_mass(
        base_u in 0.5f64..3.0,
        base_v in 0.3f64..2.0,
        a1 in -0.2f64..0.2,
        a2 in -0.2f64..0.2,
        chi in 0.5f64..2.0,
        ell in 0.1f64..2.0,
    ) {
        let g = grid_2d(9, 7);
        let u = smooth_field(&g, base_u, &[a1, a2, 0.05]);
        let v = smooth_field(&g, base_v, &[a2, -a1, 0.0]);
        let s = State::new(u, v, 0.0).unwrap();
        let mut p = Params::new(chi, ell, 1.55, 0.0).unwrap();
        p.dt_max = 1e-3;
        let r = rhs_u(&s, &p).unwrap();
        let lhs = integrate(&r);
        let rhs = p.ell * integrate_product(&s.u, &s.v);
        prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs().max(1.0),
            "off by {}", (lhs - rhs).abs());
    }

    // taxis flux is exactly 1-homogeneous in chi (power-of-two factor)
    #[test]
    fn taxis_chi_homogeneity(
        base_u in 0.2f64..2.0,
        a in -0.3f64..0.3,
    ) {
        let g = grid_1d(24);
        let u = smooth_field(&g, base_u, &[a, 0.1, 0.0]);
        let v = smooth_field(&g, 1.0, &[0.2, a, 0.0]);
        let s = State::new(u, v, 0.0).unwrap();
        let f1 = taxis_flux(&s, &Params::new(1.0, 1.0, 1.55, 0.0).unwrap()).unwrap();
        let f2 = taxis_flux(&s, &Params::new(2.0, 1.0, 1.55, 0.0).unwrap()).unwrap();
        for (x, y) in f1.component(0).iter().zip(f2.component(0)) {
            prop_assert_eq!((2.0 * x).to_bits(), y.to_bits());
        }
    }

    // implicit nutrient solve: max principle and positivity for any
    // admissible inputs
    #[test]
    fn v_solve_max_principle(
        base_u in 0.6f64..4.0,
        base_v in 0.8f64..3.0,
        a in -0.15f64..0.15,
        dt in 1e-4f64..0.2,
    ) {
        let g = grid_2d(8, 6);
        let u = smooth_field(&g, base_u, &[a, -a, 0.0]);
        let v = smooth_field(&g, base_v, &[-a, a, 0.05]);
        let max_v = v.max();
        let s = State::new(u, v, 0.0).unwrap();
        let sys = v_implicit_operator(&s, dt).unwrap();
        let (x, _) = solve_v_system(&sys, None).unwrap();
        let xmax = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xmin = x.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(xmax <= max_v * (1.0 + 1e-12));
        prop_assert!(xmin > 0.0);
    }

    // dual norm sandwich: |∫f| ≤ ‖f‖_* ≤ ∫|f|
    #[test]
    fn dual_norm_sandwich(
        values in proptest::collection::vec(-5.0f64..5.0, 12),
    ) {
        let g = grid_1d(12);
        let f = Field::new(&g, values).unwrap();
        let sol = dual_norm(&f).unwrap();
        let l1 = integrate(&f.map(f64::abs));
        let mean = integrate(&f).abs();
        let slack = 1e-9 * (1.0 + l1);
        prop_assert!(sol.value <= l1 + slack);
        prop_assert!(sol.value >= mean - slack);
        prop_assert!(sol.gap <= 1e-6 * l1 + 1e-15);
    }

    // snapshots round-trip bit-exactly
    #[test]
    fn snapshot_roundtrip(
        u_vals in proptest::collection::vec(0.0f64..10.0, 8),
        v_vals in proptest::collection::vec(1e-12f64..10.0, 8),
        t in 0.0f64..100.0,
    ) {
        let g = grid_1d(8);
        let s = State::new(
            Field::new(&g, u_vals).unwrap(),
            Field::new(&g, v_vals).unwrap(),
            t,
        ).unwrap();
        let mut bytes = Vec::new();
        write_state(&mut bytes, &s).unwrap();
        let back = read_state(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.t.to_bits(), s.t.to_bits());
        for (a, b) in back.u.values().iter().zip(s.u.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.v.values().iter().zip(s.v.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

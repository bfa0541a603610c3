use std::sync::Arc;

use dinls_core::gn::weinstein_quotient;
use dinls_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, r_max: f64, len: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::build(n, r_max, len, Grading::LogGraded).unwrap())
}

/// Independent RK4 shooting for the planar cubic ground state
/// `Q'' + Q'/r - Q + Q³ = 0`, bisecting on `Q(0)`.
fn townes_center_rk4() -> f64 {
    fn escapes_up(a: f64) -> bool {
        let h = 1e-3;
        // Series start away from the singular point.
        let r0 = 1e-3;
        let mut r = r0;
        let mut q = a + (a - a * a * a) * r0 * r0 / 4.0;
        let mut dq = (a - a * a * a) * r0 / 2.0;
        let f = |r: f64, q: f64, dq: f64| (dq, -dq / r + q - q * q * q);
        while r < 12.0 {
            let (k1q, k1d) = f(r, q, dq);
            let (k2q, k2d) = f(r + h / 2.0, q + h / 2.0 * k1q, dq + h / 2.0 * k1d);
            let (k3q, k3d) = f(r + h / 2.0, q + h / 2.0 * k2q, dq + h / 2.0 * k2d);
            let (k4q, k4d) = f(r + h, q + h * k3q, dq + h * k3d);
            q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            dq += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
            r += h;
            if q < 0.0 {
                return false;
            }
            if dq > 0.0 {
                return true;
            }
        }
        true
    }
    let (mut lo, mut hi) = (2.0, 2.5);
    assert!(escapes_up(lo) && !escapes_up(hi));
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if escapes_up(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn townes_center_matches_rk4_oracle() {
    let params = ModelParams::new(2, 0.0, 0.0, 2.0).unwrap();
    let prob = EllipticProblem::new(ProblemKind::SingleTerm, params).unwrap();
    let q = shoot(&prob, grid(2, 30.0, 4096), &ShootingConfig::default()).unwrap();
    let oracle = townes_center_rk4();
    let got = q.shooting_value.unwrap();
    assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
}

#[test]
fn relaxation_agrees_with_shooting() {
    let params = ModelParams::new(3, -0.5, 0.0, 1.0).unwrap();
    let prob = EllipticProblem::new(ProblemKind::TwoTerm, params).unwrap();
    let g = grid(3, 30.0, 4096);
    let shot = shoot(&prob, g.clone(), &ShootingConfig::default()).unwrap();
    let relaxed = relax_weinstein(&prob, g.clone(), None, &RelaxConfig::default()).unwrap();
    let rel = (shot.norms.morrey - relaxed.norms.morrey).abs() / shot.norms.morrey;
    assert!(rel < 1e-3, "{} vs {}", shot.norms.morrey, relaxed.norms.morrey);

    // A different initial guess reaches the same minimiser.
    let sech: Vec<f64> = g.nodes().iter().map(|r| 1.0 / r.cosh()).collect();
    let from_sech = relax_weinstein(&prob, g, Some(&sech), &RelaxConfig::default()).unwrap();
    let rel = (from_sech.norms.morrey - relaxed.norms.morrey).abs() / relaxed.norms.morrey;
    assert!(rel < 1e-3);
}

#[test]
fn ground_state_minimises_weinstein_quotient() {
    let params = ModelParams::new(3, -0.5, 0.0, 1.0).unwrap();
    let idx = params.derive_indices().unwrap();
    let prob = EllipticProblem::new(ProblemKind::TwoTerm, params).unwrap();
    let g = grid(3, 30.0, 4096);
    let q = shoot(&prob, g.clone(), &ShootingConfig::default()).unwrap();
    let j_min = weinstein_quotient(&q.field, &params, &idx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..200 {
        let s = rng.gen_range(0.1..5.0);
        let k = rng.gen_range(0.0..2.0);
        let shift = rng.gen_range(0.0..3.0);
        let f = RadialField::from_real_fn(g.clone(), |r| (1.0 + k * r * r) * (-s * (r - shift).powi(2)).exp()).unwrap();
        let j = weinstein_quotient(&f, &params, &idx).unwrap();
        assert!(j >= j_min * (1.0 - 1e-3), "{j} < {j_min}");
    }
}

#[test]
fn sech_profile_is_the_one_dimensional_ground_state() {
    let params = ModelParams::new(1, 0.0, 0.0, 2.0).unwrap();
    let prob = EllipticProblem::new(ProblemKind::SingleTerm, params).unwrap();
    let q = shoot(&prob, grid(1, 30.0, 4096), &ShootingConfig::default()).unwrap();
    // ‖√2 sech‖₂² on the line is 4.
    assert!((q.field.mass() - 4.0).abs() < 1e-6, "{}", q.field.mass());
    let (r1, r2) = dinls_core::groundstate::pohozaev_residuals(&q, &prob).unwrap();
    assert!(r1 < 1e-6 && r2 < 1e-6);
}

#[test]
fn mismatched_kinds_are_rejected() {
    let params = ModelParams::new(3, 0.0, 0.0, 1.0).unwrap();
    let prob = EllipticProblem::new(ProblemKind::SingleTerm, params).unwrap();
    let r = relax_weinstein(&prob, grid(3, 30.0, 256), None, &RelaxConfig::default());
    assert!(matches!(r, Err(Error::MismatchedKind { .. })));
}

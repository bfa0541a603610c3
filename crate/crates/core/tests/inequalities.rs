use std::sync::Arc;

use dinls_core::gn::{
    generate_battery, sharp_constant, verify_inequality, BatterySpec, CheckOptions, GnKind, InequalityKind,
};
use dinls_core::*;

fn setup(params: ModelParams) -> (Arc<RadialGrid>, GroundStateProfile) {
    let g = Arc::new(RadialGrid::build(params.n, 30.0, 4096, Grading::LogGraded).unwrap());
    let prob = EllipticProblem::new(ProblemKind::TwoTerm, params).unwrap();
    let q = shoot(&prob, g.clone(), &ShootingConfig::default()).unwrap();
    (g, q)
}

fn battery() -> Vec<TrialFn> {
    generate_battery(
        &BatterySpec {
            size: 120,
            seed: 3,
            include_ground: false,
            length: 1.0,
        },
        true,
    )
}

#[test]
fn non_sharp_kinds_are_stable_under_refinement() {
    let params = ModelParams::new(3, -0.5, 0.0, 1.0).unwrap();
    let idx = params.derive_indices().unwrap();
    let (g, q) = setup(params);
    let rep = sharp_constant(GnKind::TwoTermSharp, &q, &params, &idx).unwrap();
    for kind in [
        InequalityKind::Ckn,
        InequalityKind::HardySobolev,
        InequalityKind::Strauss,
        InequalityKind::StandardGn,
    ] {
        let check = verify_inequality(
            kind,
            &battery(),
            g.clone(),
            &params,
            &idx,
            Some((&rep, &q)),
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(check.max_quotient.is_finite() && check.max_quotient > 0.0, "{kind:?}");
        let change = check.refinement_change.unwrap();
        assert!(change < gn::REFINEMENT_TOL, "{kind:?}: {change}");
    }
}

#[test]
fn tail_constants_are_stable_under_refinement() {
    // p < 4/n so both tail forms apply.
    let params = ModelParams::new(3, -0.5, -0.25, 1.0).unwrap();
    let idx = params.derive_indices().unwrap();
    let (g, q) = setup(params);
    let rep = sharp_constant(GnKind::TwoTermSharp, &q, &params, &idx).unwrap();
    let opts = CheckOptions {
        eta: 0.1,
        radius: 1.0,
        refine: true,
    };
    for kind in [InequalityKind::TailMorrey, InequalityKind::TailStrauss] {
        let check = verify_inequality(kind, &battery(), g.clone(), &params, &idx, Some((&rep, &q)), &opts).unwrap();
        assert!(check.max_quotient >= 0.0 && check.max_quotient.is_finite());
        let change = check.refinement_change.unwrap();
        assert!(change < 0.10, "{kind:?}: {change}");
    }
}

#[test]
fn sharp_kind_needs_matching_ground_state() {
    let params = ModelParams::new(3, -0.5, 0.0, 1.0).unwrap();
    let idx = params.derive_indices().unwrap();
    let (g, q) = setup(params);
    let rep = sharp_constant(GnKind::TwoTermSharp, &q, &params, &idx).unwrap();
    let r = verify_inequality(
        InequalityKind::RadialGn,
        &battery(),
        g.clone(),
        &params,
        &idx,
        Some((&rep, &q)),
        &CheckOptions::default(),
    );
    assert!(matches!(r, Err(Error::MismatchedKind { .. })));
    let r = verify_inequality(InequalityKind::SharpGn, &battery(), g, &params, &idx, None, &CheckOptions::default());
    assert!(r.is_err());
}

#[test]
fn radial_gn_holds_on_a_battery() {
    let params = ModelParams::new(3, 0.0, 0.0, 4.0 / 3.0).unwrap();
    let idx = params.derive_indices().unwrap();
    let g = Arc::new(RadialGrid::build(3, 30.0, 4096, Grading::LogGraded).unwrap());
    let prob = EllipticProblem::new(ProblemKind::SingleTerm, params).unwrap();
    let q = shoot(&prob, g.clone(), &ShootingConfig::default()).unwrap();
    let rep = sharp_constant(GnKind::MassCriticalRadial, &q, &params, &idx).unwrap();
    assert!((rep.quotient_at_ground * rep.c_gn - 1.0).abs() < 1e-3);
    let battery = generate_battery(
        &BatterySpec {
            size: 150,
            seed: 11,
            include_ground: true,
            length: 1.0,
        },
        true,
    );
    let check = verify_inequality(
        InequalityKind::RadialGn,
        &battery,
        g,
        &params,
        &idx,
        Some((&rep, &q)),
        &CheckOptions::default(),
    )
    .unwrap();
    assert_eq!(check.violations, 0);
    assert!(check.max_quotient <= rep.c_gn * (1.0 + gn::SHARP_TOL));
}

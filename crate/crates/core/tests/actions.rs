use eqf_core::kinematics::{
    apply_dstar_r, check_equivariance, formal_action, formal_lift, input_action_law_residual, FormalInput, KinematicSystem, VectorField,
};
use eqf_core::systems::{build_system, registry, SystemParams};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_systems() -> Vec<KinematicSystem> {
    registry()
        .iter()
        .map(|e| build_system(e.id, &SystemParams::default()).unwrap())
        .collect()
}

fn random_input(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn dstar_action_is_a_group_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for sys in all_systems() {
        let spec = sys.spec().clone();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (a, b, x) = (
                spec.random_element(&mut rng, 1.0),
                spec.random_element(&mut rng, 1.0),
                spec.random_element(&mut rng, 1.0),
            );
            let f = VectorField::from_system(&sys, &random_input(&mut rng, sys.input_dim())).unwrap();
            let nested = f.translate(&b).translate(&a).eval(&x);
            let direct = f.translate(&(&b * &a)).eval(&x);
            worst = worst.max((nested - direct).norm());
            let unit = f.translate(&spec.identity()).eval(&x) - f.eval(&x);
            worst = worst.max(unit.norm());
        }
        assert!(worst < 1e-9, "{}: {worst}", sys.label());
    }
}

#[test]
fn dstar_applied_to_system_matches_translate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for sys in all_systems() {
        let spec = sys.spec().clone();
        for _ in 0..20 {
            let (a, x) = (spec.random_element(&mut rng, 1.0), spec.random_element(&mut rng, 1.0));
            let v = random_input(&mut rng, sys.input_dim());
            let via_op = apply_dstar_r(&a, &sys, &v).unwrap().eval(&x);
            let via_field = VectorField::from_system(&sys, &v).unwrap().translate(&a).eval(&x);
            assert!((via_op - via_field).norm() < 1e-12);
        }
    }
}

#[test]
fn input_actions_are_right_actions() {
    for sys in all_systems().iter().filter(|s| s.input_action().is_some()) {
        let r = input_action_law_residual(sys, 100, 42).unwrap();
        assert!(r < 1e-9, "{}: {r}", sys.label());
    }
}

#[test]
fn equivariance_identity_on_builtins() {
    for entry in registry().iter().filter(|e| e.equivariant) {
        let sys = build_system(entry.id, &SystemParams::default()).unwrap();
        let r = check_equivariance(&sys, 100, 1e-9, 42).unwrap();
        assert!(r.passed && r.max_residual < 1e-9, "{}: {}", entry.id, r.max_residual);
        assert_eq!(r.samples, 100);
    }
}

#[test]
fn non_equivariant_builtins_fail_with_witness() {
    for id in ["so3_single_axis", "so3_curved"] {
        let sys = build_system(id, &SystemParams::default()).unwrap();
        match check_equivariance(&sys, 50, 1e-9, 42) {
            Ok(r) => {
                assert!(!r.passed, "{id}");
                assert!(r.witness.is_some());
            }
            Err(e) => assert!(matches!(e, eqf_core::Error::MissingInputAction(_)), "{id}: {e}"),
        }
    }
}

#[test]
fn formal_inputs_satisfy_the_lift_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sys in all_systems() {
        let spec = sys.spec().clone();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let mut w = FormalInput::zero(&sys);
            for _ in 0..rng.random_range(1..4) {
                w = w
                    .with_term(
                        rng.random_range(-2.0..2.0),
                        spec.random_element(&mut rng, 1.0),
                        random_input(&mut rng, sys.input_dim()),
                    )
                    .unwrap();
            }
            let (b, x) = (spec.random_element(&mut rng, 1.0), spec.random_element(&mut rng, 1.0));
            let moved = formal_lift(&formal_action(&b, &w).unwrap(), &(&x * &b)).unwrap();
            let expected = b.inverse().adjoint() * formal_lift(&w, &x).unwrap();
            worst = worst.max((moved - expected).norm());
        }
        assert!(worst < 1e-9, "{}: {worst}", sys.label());
    }
}

#[test]
fn formal_action_composes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sys = build_system("so3_curved", &SystemParams::default()).unwrap();
    let spec = sys.spec().clone();
    for _ in 0..20 {
        let w = FormalInput::embed(&sys, &random_input(&mut rng, 3))
            .unwrap()
            .with_term(0.5, spec.random_element(&mut rng, 1.0), random_input(&mut rng, 3))
            .unwrap();
        let (a, b, x) = (
            spec.random_element(&mut rng, 1.0),
            spec.random_element(&mut rng, 1.0),
            spec.random_element(&mut rng, 1.0),
        );
        let nested = formal_action(&b, &formal_action(&a, &w).unwrap()).unwrap();
        let direct = formal_action(&(&a * &b), &w).unwrap();
        let r = (formal_lift(&nested, &x).unwrap() - formal_lift(&direct, &x).unwrap()).norm();
        assert!(r < 1e-9, "{r}");
    }
}

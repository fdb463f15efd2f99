mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qvar_core::convexity_lab::{necessity_experiment, quasiconvexity_test, OptimizerConfig, Status};
use qvar_core::integrands::{
    check_growth, check_perm_invariance, energy, mattila_energy, GrowthBound, IntegrandSpec, MatrixProfileSpec,
    QuadraticIntegrand,
};
use qvar_core::mesh::{Cube, Mesh};
use qvar_core::qfield::{AffineQMap, QSheetField};
use qvar_core::rng::stream_rng;

fn small_config(seed: u64) -> OptimizerConfig {
    OptimizerConfig { cells_per_side: 4, restarts: 4, max_iters: 80, seed, ..OptimizerConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn quadrature_energy_matches_closed_form(seed in any::<u64>(), q in 1usize..=3) {
        let mut rng = stream_rng(seed, 0);
        let a = QuadraticIntegrand::new(2, 2, random_symmetric(&mut rng, 4, 1.0)).unwrap();
        let poly = RandomPoly::new(&mut rng, 2, 2 * q);
        let u = QSheetField::from_sheets(Mesh::new(Cube::centered(2, 1.0), 3).unwrap(), q, 2, |x| {
            let v = poly.eval(x);
            (0..q).map(|t| v[2 * t..2 * t + 2].to_vec()).collect()
        })
        .unwrap();
        let e = energy(&a, &u).unwrap();
        let closed = mattila_energy(&a, &u).unwrap();
        prop_assert!((e - closed).abs() <= 1e-11 * (1.0 + closed.abs()));
    }
}

#[test]
fn example_families_are_symmetric_with_growth() {
    let b = GrowthBound::new(8.0, 2.0, 2, Some(2.0)).unwrap();
    let f = IntegrandSpec::FamilyB { g: MatrixProfileSpec::FrobeniusPower { exponent: 2.0, coefficient: 1.0 } }
        .build(2, 1)
        .unwrap();
    for q in 1..=3 {
        assert!(check_perm_invariance(f.as_ref(), q, 50, 7));
        assert!(check_growth(f.as_ref(), &b, q, 50, 7));
    }
}

#[test]
fn polyconvex_family_shows_no_violation() {
    let f = IntegrandSpec::FamilyB { g: MatrixProfileSpec::FrobeniusPower { exponent: 2.0, coefficient: 1.0 } }
        .build(2, 1)
        .unwrap();
    let mut rng = stream_rng(31, 0);
    let l = DMatrix::from_fn(1, 2, |_, _| normal(&mut rng));
    let u = AffineQMap::single(2, vec![0.5], l).unwrap();
    let verdict = quasiconvexity_test(f.as_ref(), &u, &small_config(3)).unwrap();
    assert_eq!(verdict.status, Status::NoViolationFound);
    assert!(verdict.margin >= -1e-9, "{}", verdict.margin);
}

#[test]
fn violations_come_with_sound_certificates() {
    let mut rng = stream_rng(32, 0);
    let a = form_with_rank_one_min(&mut rng, 2, 2, -0.5);
    let u = AffineQMap::single(1, vec![0.0, 0.0], DMatrix::from_fn(2, 2, |_, _| normal(&mut rng))).unwrap();
    let cfg = small_config(5);
    let verdict = quasiconvexity_test(&a, &u, &cfg).unwrap();
    assert_eq!(verdict.status, Status::Violation);
    let cert = verdict.certificate.as_ref().unwrap();
    assert!(cert.boundary_sup_distance(|x| u.eval(x)).unwrap() <= 1e-12);
    let affine = QSheetField::sample_affine(&u, cert.mesh().clone()).unwrap();
    let gap = energy(&a, cert).unwrap() - energy(&a, &affine).unwrap();
    assert!((gap - verdict.margin).abs() <= 1e-9 * (1.0 + gap.abs()));
    assert!(verdict.margin < 0.0);
    for h in &verdict.search_log.histories {
        assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    let again = quasiconvexity_test(&a, &u, &cfg).unwrap();
    assert_eq!(again.margin.to_bits(), verdict.margin.to_bits());

    // the certificate, used as a competitor, lowers the energy of every fold
    let w = vec![cert.clone()];
    let rep = necessity_experiment(&a, &u, &w, &[1, 2, 3], 0.5).unwrap();
    assert!(rep.x_independent);
    for e in &rep.folded_energies {
        assert!(*e < rep.affine_energy);
    }
    assert!(rep.k_spread <= 1e-10);
}

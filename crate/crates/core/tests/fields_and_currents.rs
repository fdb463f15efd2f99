mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qvar_core::currents::{pair_graph, polyaffine_form, stokes_residual, DifferentialForm};
use qvar_core::integrands::{energy, Dirichlet};
use qvar_core::mesh::{Cube, Mesh};
use qvar_core::minors::{tau, PolyaffineFn};
use qvar_core::qfield::{fold_sequence, lp_distance, AffineGroup, AffineQMap, QSheetField};
use qvar_core::qspace::metric_g;
use qvar_core::rng::stream_rng;
use rand::Rng;

fn unit_mesh(m: usize, k: usize) -> Mesh {
    Mesh::new(Cube::centered(m, 1.0), k).unwrap()
}

fn random_affine(seed: u64, m: usize, n: usize, groups: usize) -> AffineQMap {
    let mut rng = stream_rng(seed, 0);
    let gs = (0..groups)
        .map(|j| AffineGroup {
            multiplicity: 1 + j % 2,
            offset: (0..n).map(|c| 3.0 * j as f64 + if c == 0 { 0.0 } else { normal(&mut rng) }).collect(),
            linear: DMatrix::from_fn(n, m, |_, _| normal(&mut rng)),
        })
        .collect();
    AffineQMap::new(m, n, gs).unwrap()
}

fn competitors(seed: u64, u: &AffineQMap, cells: usize) -> Vec<QSheetField> {
    let mut rng = stream_rng(seed, 1);
    let (m, n) = (u.m(), u.n());
    u.groups()
        .iter()
        .map(|g| {
            let poly = RandomPoly::new(&mut rng, m, n * g.multiplicity);
            QSheetField::from_sheets(unit_mesh(m, cells), g.multiplicity, n, |x| {
                let v = poly.eval(x);
                let base = g.eval(x);
                (0..g.multiplicity)
                    .map(|t| (0..n).map(|c| base[c] + 4.0 * bubble(x) * v[t * n + c]).collect())
                    .collect()
            })
            .unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_sampling_is_exact(seed in any::<u64>(), m in 1usize..=3, n in 1usize..=2, groups in 1usize..=2) {
        let u = random_affine(seed, m, n, groups);
        let f = QSheetField::sample_affine(&u, unit_mesh(m, 3)).unwrap();
        prop_assert!(f.face_consistency_defect() <= 1e-12);
        let mut rng = stream_rng(seed, 2);
        for _ in 0..20 {
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
            prop_assert!(metric_g(&f.evaluate(&x).unwrap(), &u.eval(&x)).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn sheet_fields_are_face_consistent(seed in any::<u64>(), q in 1usize..=3, n in 1usize..=2) {
        let mut rng = stream_rng(seed, 3);
        let poly = RandomPoly::new(&mut rng, 2, q * n);
        let f = QSheetField::from_sheets(unit_mesh(2, 5), q, n, |x| {
            let v = poly.eval(x);
            (0..q).map(|t| v[t * n..(t + 1) * n].to_vec()).collect()
        })
        .unwrap();
        prop_assert!(f.face_consistency_defect() <= 1e-12);
        prop_assert_eq!(lp_distance(&f, &f, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn exterior_derivative_squares_to_zero(seed in any::<u64>(), m in 1usize..=3, n in 1usize..=2, deg in 0usize..=2) {
        let mut rng = stream_rng(seed, 4);
        let form = DifferentialForm::random(m, n, deg, 3, &mut rng);
        prop_assert!(form.exterior_derivative().exterior_derivative().is_zero());
    }

    #[test]
    fn stokes_on_random_fields(seed in any::<u64>(), q in 1usize..=2, n in 1usize..=2) {
        let mut rng = stream_rng(seed, 5);
        let poly = RandomPoly::new(&mut rng, 2, q * n);
        let f = QSheetField::from_sheets(unit_mesh(2, 3), q, n, |x| {
            let v = poly.eval(x);
            (0..q).map(|t| v[t * n..(t + 1) * n].to_vec()).collect()
        })
        .unwrap();
        let form = DifferentialForm::random(2, n, 1, 3, &mut rng);
        prop_assert!(stokes_residual(&f, &form).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn polyaffine_pairing_is_integral_of_integrand(seed in any::<u64>(), q in 1usize..=2) {
        let mut rng = stream_rng(seed, 6);
        let poly = RandomPoly::new(&mut rng, 2, 2 * q);
        let f = QSheetField::from_sheets(unit_mesh(2, 3), q, 2, |x| {
            let v = poly.eval(x);
            (0..q).map(|t| v[2 * t..2 * t + 2].to_vec()).collect()
        })
        .unwrap();
        let zeta: Vec<f64> = (0..tau(2, 2)).map(|_| normal(&mut rng)).collect();
        let p = PolyaffineFn::new(2, 2, normal(&mut rng), zeta).unwrap();
        let vol = f.mesh().simplex_volume();
        let direct: f64 = (0..f.mesh().num_simplices())
            .map(|s| vol * f.sheet_gradients(s).iter().map(|d| p.eval(d)).sum::<f64>())
            .sum();
        let paired = pair_graph(&f, &polyaffine_form(&p)).unwrap();
        prop_assert!((paired - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }
}

#[test]
fn folds_keep_the_trace_for_every_k() {
    for seed in 0..3 {
        let u = random_affine(seed, 2, 1 + seed as usize % 2, 1 + seed as usize % 2);
        let w = competitors(seed, &u, 3);
        for k in 1..=6 {
            let f = fold_sequence(&u, &w, k, 0.7).unwrap();
            assert!(f.boundary_sup_distance(|x| u.eval(x)).unwrap() <= 1e-12, "seed {seed}, k {k}");
            assert!(f.face_consistency_defect() <= 1e-12);
        }
    }
}

#[test]
fn dirichlet_energy_of_folds_scales_with_the_cube() {
    let d = Dirichlet { m: 2, n: 2 };
    for seed in 0..3 {
        let u = random_affine(10 + seed, 2, 2, 1);
        let w = competitors(10 + seed, &u, 4);
        let r = 0.6;
        let unit = energy(&d, &w[0]).unwrap() * r * r;
        for k in [1, 2, 3, 5] {
            let e = energy(&d, &fold_sequence(&u, &w, k, r).unwrap()).unwrap();
            assert!((e - unit).abs() <= 1e-10 * (1.0 + unit), "k {k}: {e} vs {unit}");
        }
    }
}

#[test]
fn folds_approach_the_affine_map() {
    let u = random_affine(20, 2, 1, 1);
    let w = competitors(20, &u, 4);
    let target = QSheetField::sample_affine(&u, Mesh::new(Cube::centered(2, 0.5), 4).unwrap()).unwrap();
    let d: Vec<f64> =
        [1, 2, 4, 8].iter().map(|&k| lp_distance(&fold_sequence(&u, &w, k, 0.5).unwrap(), &target, 2.0).unwrap()).collect();
    for pair in d.windows(2) {
        assert!(pair[1] < pair[0]);
    }
    // the oscillation amplitude scales like 1/k
    assert!((d[3] / d[0] - 0.125).abs() < 0.05, "{d:?}");
}

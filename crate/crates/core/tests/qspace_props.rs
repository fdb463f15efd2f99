mod common;

use common::brute_force_g;
use proptest::prelude::*;
use qvar_core::qspace::{group_by_support, mean_eta, metric_g, optimal_matching, translate, QPoint};

fn qpoint(q: usize, n: usize) -> impl Strategy<Value = QPoint> {
    prop::collection::vec(-5.0..5.0f64, q * n).prop_map(move |c| QPoint::from_flat(n, c).unwrap())
}

fn pair() -> impl Strategy<Value = (QPoint, QPoint)> {
    (1usize..=6, 1usize..=3).prop_flat_map(|(q, n)| (qpoint(q, n), qpoint(q, n)))
}

fn triple() -> impl Strategy<Value = (QPoint, QPoint, QPoint)> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(q, n)| (qpoint(q, n), qpoint(q, n), qpoint(q, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metric_matches_enumeration((a, b) in pair()) {
        let g = metric_g(&a, &b).unwrap();
        prop_assert!((g - brute_force_g(&a, &b)).abs() <= 1e-12 * (1.0 + g));
    }

    #[test]
    fn metric_is_symmetric_and_vanishes_on_diagonal((a, b) in pair()) {
        let ab = metric_g(&a, &b).unwrap();
        let ba = metric_g(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert_eq!(metric_g(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn triangle_inequality((a, b, c) in triple()) {
        let ab = metric_g(&a, &b).unwrap();
        let bc = metric_g(&b, &c).unwrap();
        let ac = metric_g(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-10);
    }

    #[test]
    fn metric_ignores_point_order((a, b) in pair(), rot in 0usize..6) {
        let q = a.q();
        let pts: Vec<Vec<f64>> = (0..q).map(|i| a.point((i + rot) % q).to_vec()).collect();
        let shuffled = QPoint::new(a.n(), &pts).unwrap();
        let d = metric_g(&shuffled, &b).unwrap() - metric_g(&a, &b).unwrap();
        prop_assert!(d.abs() <= 1e-12);
        prop_assert_eq!(metric_g(&shuffled, &a).unwrap(), 0.0);
    }

    #[test]
    fn translation_is_an_isometry((a, b) in pair(), v in prop::collection::vec(-3.0..3.0f64, 3)) {
        let v = &v[..a.n()];
        let d = metric_g(&translate(&a, v).unwrap(), &translate(&b, v).unwrap()).unwrap() - metric_g(&a, &b).unwrap();
        prop_assert!(d.abs() <= 1e-10);
    }

    #[test]
    fn matching_realizes_metric((a, b) in pair()) {
        let (perm, cost) = optimal_matching(&a, &b).unwrap();
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..a.q()).collect::<Vec<_>>());
        let direct: f64 = (0..a.q())
            .map(|i| a.point(i).iter().zip(b.point(perm[i])).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        prop_assert!((direct.sqrt() - metric_g(&a, &b).unwrap()).abs() <= 1e-12 * (1.0 + direct));
        prop_assert!((cost - direct).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn mean_is_lipschitz((a, b) in pair()) {
        let (ea, eb) = (mean_eta(&a), mean_eta(&b));
        let d = ea.iter().zip(&eb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        prop_assert!(d <= metric_g(&a, &b).unwrap() / (a.q() as f64).sqrt() + 1e-12);
    }

    #[test]
    fn grouping_partitions_points(a in (1usize..=6, 1usize..=2).prop_flat_map(|(q, n)| qpoint(q, n)), tol in 0.0..3.0f64) {
        let g = group_by_support(&a, tol).unwrap();
        prop_assert_eq!(g.total_multiplicity(), a.q());
        let mut members: Vec<usize> = g.groups.iter().flat_map(|x| x.members.clone()).collect();
        members.sort_unstable();
        prop_assert_eq!(members, (0..a.q()).collect::<Vec<_>>());
        for (i, x) in g.groups.iter().enumerate() {
            prop_assert_eq!(x.multiplicity, x.members.len());
            for y in &g.groups[i + 1..] {
                let d = x.center.iter().zip(&y.center).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                prop_assert!(d > tol);
            }
        }
    }
}

#[test]
fn multiple_point_distance() {
    let a = QPoint::multiple(3, &[1.0, 2.0]);
    let b = QPoint::multiple(3, &[4.0, 6.0]);
    assert!((metric_g(&a, &b).unwrap() - 5.0 * 3f64.sqrt()).abs() < 1e-14);
}

use proptest::prelude::*;
use qvar_core::equiint::{
    biting_truncations, distribution_tail, dlvp_check, read_sequence_csv, small_set_sup, sobolev_critical_check,
    SampledFunctionSeq, SobolevSamples, TailSchedule,
};

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tail_is_nonincreasing(g in samples(), s in 0.0..60.0f64, t in 0.0..60.0f64) {
        let vol = 1.0 / g.len() as f64;
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        prop_assert!(distribution_tail(&g, vol, hi) <= distribution_tail(&g, vol, lo));
    }

    #[test]
    fn small_sets_and_tails_control_each_other(g in samples(), t in 0.0..60.0f64, delta in 0.0..1.0f64) {
        let vol = 1.0 / g.len() as f64;
        let tail = distribution_tail(&g, vol, t);
        let big = g.iter().filter(|v| v.abs() >= t).count() as f64 * vol;
        prop_assert!(tail <= small_set_sup(&g, vol, big) + 1e-9);
        prop_assert!(small_set_sup(&g, vol, delta) <= tail + t * delta + 1e-9);
    }

    #[test]
    fn biting_report_is_well_formed(seqs in prop::collection::vec(prop::collection::vec(0.0..40.0f64, 64), 1..12)) {
        let seq = SampledFunctionSeq::new(1.0, seqs, 1.0).unwrap();
        let schedule = TailSchedule::calibrated(&seq);
        let rep = biting_truncations(&seq, schedule).unwrap();
        prop_assert!(rep.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rep.levels.windows(2).all(|w| w[0] < w[1]));
        for (j, row) in rep.tails.iter().enumerate() {
            prop_assert!(row.windows(2).all(|w| w[1] <= w[0]));
            for (i, &v) in row.iter().enumerate() {
                prop_assert!(v <= schedule.eps(rep.tail_levels[i]) * (1.0 + 1e-9));
                if j + 1 < rep.tails.len() {
                    prop_assert!(rep.tails[j + 1][i] <= v);
                }
            }
        }
        for (&k, &m) in rep.indices.iter().zip(&rep.truncated_mass) {
            prop_assert!(m <= seq.l1_norms()[k] + 1e-12);
        }
    }
}

fn spikes(levels: u32) -> SampledFunctionSeq {
    let cells = 1usize << levels;
    let samples = (0..=levels)
        .map(|e| {
            let k = 1usize << e;
            (0..cells).map(|c| if c < cells / k { k as f64 } else { 0.0 }).collect()
        })
        .collect();
    SampledFunctionSeq::new(1.0, samples, 1.0).unwrap()
}

#[test]
fn spikes_are_bounded_in_l1_but_not_equi_integrable() {
    let seq = spikes(10);
    for n in seq.l1_norms() {
        assert!((n - 1.0).abs() < 1e-12);
    }
    let vol = seq.cell_volume();
    let worst = seq.samples().iter().map(|g| distribution_tail(g, vol, 100.0)).fold(0.0, f64::max);
    assert_eq!(worst, 1.0);
    let tlogt = |t: f64| if t > 1.0 { t * t.ln() } else { 0.0 };
    let rep = dlvp_check(&seq, &tlogt, 5.0);
    assert!(!rep.bounded);
    assert!((rep.sup - 1024f64.ln()).abs() < 1e-9);
}

#[test]
fn bounded_family_passes_dlvp() {
    let samples: Vec<Vec<f64>> =
        (1..=8).map(|k| (0..100).map(|c| ((c * k) as f64 * 0.37).sin() * 3.0).collect()).collect();
    let seq = SampledFunctionSeq::new(2.0, samples, 1.0).unwrap();
    let rep = dlvp_check(&seq, &|t: f64| t * t, 18.0 + 1e-9);
    assert!(rep.bounded);
    assert!(rep.integrals.iter().all(|&v| v <= 18.0 + 1e-9));
}

#[test]
fn tight_schedule_forces_low_levels() {
    let seq = spikes(6);
    let c = 1e-6;
    let rep = biting_truncations(&seq, TailSchedule { c }).unwrap();
    assert!(!rep.indices.is_empty());
    // a truncation at level t carries at most t of mass, so t^2 <= c is feasible
    assert!(rep.levels[0] >= c.sqrt() * (1.0 - 1e-9));
    assert!(rep.truncated_mass.iter().all(|&m| m <= 1.0));
}

/// `g_k(x) = k^{a}·1_{[0, 1/k]^m}` on a uniform grid of the unit cube, with
/// zero gradients, so that only the value tails matter.
fn concentration(m: usize, a: f64, side: usize, ks: &[usize]) -> SobolevSamples {
    let cells = side.pow(m as u32);
    let values = ks
        .iter()
        .map(|&k| {
            (0..cells)
                .map(|c| {
                    let inside = (0..m).all(|d| ((c / side.pow(d as u32)) % side) < side / k);
                    if inside { (k as f64).powf(a) } else { 0.0 }
                })
                .collect()
        })
        .collect();
    SobolevSamples { m, cell_volume: 1.0 / cells as f64, values, gradients: vec![vec![0.0; cells]; ks.len()] }
}

#[test]
fn critical_exponent_concentration_is_detected() {
    // in m = 2 with p = 1 the critical exponent is 2; k^{1}·1_{[0,1/k]^2}
    // has |g|^2 of unit mass concentrating, and |g|^1 of mass 1/k
    let fam = concentration(2, 1.0, 64, &[1, 2, 4, 8, 16, 32]);
    let rep = sobolev_critical_check(&fam, 1.0, &[4.0, 16.0, 64.0, 256.0], 0.05).unwrap();
    assert_eq!(rep.p_star, 2.0);
    assert!(rep.values.equi_integrable);
    assert!(rep.gradients.equi_integrable);
    assert!(!rep.critical.equi_integrable);
    assert!((rep.critical.sup_tails[2] - 1.0).abs() < 1e-12);
}

#[test]
fn sobolev_check_rejects_supercritical_exponent() {
    let fam = concentration(2, 1.0, 8, &[1, 2]);
    assert!(sobolev_critical_check(&fam, 2.0, &[1.0], 0.1).is_err());
}

#[test]
fn csv_rows_fill_the_grid() {
    let text = "k,cell_index,value\n1,1,4.0\n0,0,1.5\n0,1,2.5\n1,0,3.0\n";
    let s = read_sequence_csv(text.as_bytes()).unwrap();
    assert_eq!(s, vec![vec![1.5, 2.5], vec![3.0, 4.0]]);
    assert!(read_sequence_csv("k,cell_index,value\n0,0,1\n1,1,2\n".as_bytes()).is_err());
}

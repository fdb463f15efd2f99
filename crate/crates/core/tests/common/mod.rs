#![allow(dead_code)]

use nalgebra::DMatrix;
use qvar_core::convexity_lab::rank_one_min;
use qvar_core::integrands::QuadraticIntegrand;
use qvar_core::qspace::QPoint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Minimum over all Q! assignments, enumerated with Heap's algorithm.
pub fn brute_force_g(a: &QPoint, b: &QPoint) -> f64 {
    let q = a.q();
    let cost = |perm: &[usize]| -> f64 {
        (0..q)
            .map(|i| a.point(i).iter().zip(b.point(perm[i])).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum()
    };
    let mut perm: Vec<usize> = (0..q).collect();
    let mut best = cost(&perm);
    let mut c = vec![0usize; q];
    let mut i = 0;
    while i < q {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best.sqrt()
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| scale * normal(rng));
    (&g + g.transpose()) * 0.5
}

/// Random symmetric form on `n × m` matrices shifted by a multiple of the
/// identity so that its rank-one minimum equals `target`.
pub fn form_with_rank_one_min(rng: &mut ChaCha8Rng, m: usize, n: usize, target: f64) -> QuadraticIntegrand {
    let a = random_symmetric(rng, m * n, 0.5);
    let r1 = rank_one_min(&QuadraticIntegrand::new(m, n, a.clone()).unwrap()).value;
    let shifted = a + DMatrix::identity(m * n, m * n) * (target - r1);
    QuadraticIntegrand::new(m, n, shifted).unwrap()
}

/// `⟨A(a⊗b), a⊗b⟩` with the column-major vectorization of `n × m` matrices.
pub fn rank_one_value(a: &DMatrix<f64>, av: &[f64], bv: &[f64]) -> f64 {
    let v: Vec<f64> = bv.iter().flat_map(|b| av.iter().map(move |x| x * b)).collect();
    let mut s = 0.0;
    for p in 0..v.len() {
        for q in 0..v.len() {
            s += a[(p, q)] * v[p] * v[q];
        }
    }
    s
}

/// Grid search over angle pairs for `m = n = 2`, refined by repeated zooms
/// around the best grid points.
pub fn rank_one_grid_oracle(a: &DMatrix<f64>, grid: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let value = |s: f64, t: f64| rank_one_value(a, &[s.cos(), s.sin()], &[t.cos(), t.sin()]);
    let mut cands: Vec<(f64, f64, f64)> = Vec::new();
    let step = pi / grid as f64;
    for i in 0..grid {
        for j in 0..grid {
            let (s, t) = (i as f64 * step, j as f64 * step);
            cands.push((value(s, t), s, t));
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for &(v0, s0, t0) in cands.iter().take(8) {
        let (mut bv, mut bs, mut bt) = (v0, s0, t0);
        let mut h = step;
        for _ in 0..12 {
            let (cs, ct) = (bs, bt);
            for i in -10..=10 {
                for j in -10..=10 {
                    let (s, t) = (cs + i as f64 * h / 10.0, ct + j as f64 * h / 10.0);
                    let v = value(s, t);
                    if v < bv {
                        (bv, bs, bt) = (v, s, t);
                    }
                }
            }
            h /= 5.0;
        }
        best = best.min(bv);
    }
    best
}

/// `(1/4 − x_0²)(1/4 − x_1²)…`, vanishing on the boundary of the unit cube.
pub fn bubble(x: &[f64]) -> f64 {
    x.iter().map(|c| 0.25 - c * c).product()
}

/// Random cubic polynomial in `x` with the given number of outputs.
pub struct RandomPoly {
    coeffs: Vec<Vec<f64>>,
}

impl RandomPoly {
    pub fn new(rng: &mut ChaCha8Rng, m: usize, outputs: usize) -> Self {
        let terms = 1 + 3 * m + m * m;
        RandomPoly { coeffs: (0..outputs).map(|_| (0..terms).map(|_| normal(rng)).collect()).collect() }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let m = x.len();
        let mut basis = vec![1.0];
        basis.extend(x.iter().copied());
        basis.extend(x.iter().map(|v| v * v));
        basis.extend(x.iter().map(|v| v * v * v));
        for i in 0..m {
            for j in 0..m {
                basis.push(x[i] * x[j] * x[(i + 1) % m]);
            }
        }
        self.coeffs.iter().map(|c| c.iter().zip(&basis).map(|(a, b)| a * b).sum()).collect()
    }
}

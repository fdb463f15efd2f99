//! Multi-indices, minors and polyaffine maps.
//!
//! Indices are 0-based. For an `n × m` matrix `A`, the pair `(α, β)` with
//! `α ⊂ {0..m}` (columns) and `β ⊂ {0..n}` (rows) selects the minor
//! `M_{αβ}(A) = det A[β, α]`. The minor vector `M(A)` lists pairs by order
//! `l` ascending, then `α` lexicographically, then `β` lexicographically; its
//! first `n·m` entries are `A` flattened column-major.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QvarError, Result};

/// `τ(m,n) = Σ_{k=1}^{min(m,n)} C(m,k)·C(n,k)`; symmetric in its arguments.
pub fn tau(m: usize, n: usize) -> usize {
    (1..=m.min(n)).map(|k| binomial(m, k) * binomial(n, k)).sum()
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndexPair {
    pub l: usize,
    /// Column subset, increasing.
    pub alpha: Vec<usize>,
    /// Row subset, increasing.
    pub beta: Vec<usize>,
    /// Sign of the permutation `(α, ᾱ)` of `{0..m}`.
    pub sigma: i8,
}

/// Increasing `l`-subsets of `{0..k}` in lexicographic order.
pub fn subsets(k: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if l > k {
        return out;
    }
    let mut cur: Vec<usize> = (0..l).collect();
    loop {
        out.push(cur.clone());
        let mut i = l;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < k - l + i {
                cur[i] += 1;
                for j in i + 1..l {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Complement of `alpha` in `{0..m}`, increasing.
pub fn complement(alpha: &[usize], m: usize) -> Vec<usize> {
    (0..m).filter(|i| !alpha.contains(i)).collect()
}

/// `σ_α`: sign of the permutation listing `α` followed by `ᾱ`.
pub fn sigma_alpha(alpha: &[usize], m: usize) -> i8 {
    let inversions: usize = complement(alpha, m)
        .iter()
        .map(|&y| alpha.iter().filter(|&&x| x > y).count())
        .sum();
    if inversions % 2 == 0 { 1 } else { -1 }
}

/// All pairs in canonical order; the list has `τ(m,n)` entries.
pub fn enumerate_pairs(m: usize, n: usize) -> Vec<MultiIndexPair> {
    let mut out = Vec::with_capacity(tau(m, n));
    for l in 1..=m.min(n) {
        for alpha in subsets(m, l) {
            let sigma = sigma_alpha(&alpha, m);
            for beta in subsets(n, l) {
                out.push(MultiIndexPair { l, alpha: alpha.clone(), beta, sigma });
            }
        }
    }
    out
}

/// Position of `pair` in the canonical enumeration.
pub fn pair_index(m: usize, n: usize, pair: &MultiIndexPair) -> Result<usize> {
    validate_pair(m, n, pair)?;
    let offset: usize = (1..pair.l).map(|k| binomial(m, k) * binomial(n, k)).sum();
    let rank = |set: &[usize], k: usize| subsets(k, pair.l).iter().position(|s| s == set).expect("valid subset");
    Ok(offset + rank(&pair.alpha, m) * binomial(n, pair.l) + rank(&pair.beta, n))
}

fn validate_pair(m: usize, n: usize, pair: &MultiIndexPair) -> Result<()> {
    let increasing = |s: &[usize], k: usize| s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&i| i < k);
    if pair.l == 0
        || pair.l > m.min(n)
        || pair.alpha.len() != pair.l
        || pair.beta.len() != pair.l
        || !increasing(&pair.alpha, m)
        || !increasing(&pair.beta, n)
    {
        return Err(QvarError::Index(format!("{pair:?} is not a multi-index pair for m={m}, n={n}")));
    }
    Ok(())
}

/// Determinant by cofactor expansion along the first row.
pub fn det(a: &DMatrix<f64>) -> f64 {
    let k = a.nrows();
    assert_eq!(k, a.ncols(), "determinant of a non-square matrix");
    match k {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => (0..k)
            .map(|c| {
                let sub = a.clone().remove_row(0).remove_column(c);
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, c)] * det(&sub)
            })
            .sum(),
    }
}

/// `M_{αβ}(A)`, the determinant of rows `β` and columns `α` of `A` (`n × m`).
pub fn minor(a: &DMatrix<f64>, pair: &MultiIndexPair) -> Result<f64> {
    validate_pair(a.ncols(), a.nrows(), pair)?;
    Ok(minor_unchecked(a, &pair.alpha, &pair.beta))
}

fn minor_unchecked(a: &DMatrix<f64>, alpha: &[usize], beta: &[usize]) -> f64 {
    let l = alpha.len();
    det(&DMatrix::from_fn(l, l, |r, c| a[(beta[r], alpha[c])]))
}

/// The minor vector `M(A)` in canonical order.
pub fn all_minors(a: &DMatrix<f64>) -> Vec<f64> {
    let (n, m) = a.shape();
    enumerate_pairs(m, n).iter().map(|p| minor_unchecked(a, &p.alpha, &p.beta)).collect()
}

/// `P(A) = c0 + ⟨ζ, M(A)⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyaffineFn {
    pub m: usize,
    pub n: usize,
    pub c0: f64,
    pub zeta: Vec<f64>,
}

impl PolyaffineFn {
    pub fn new(m: usize, n: usize, c0: f64, zeta: Vec<f64>) -> Result<Self> {
        if zeta.len() != tau(m, n) {
            return Err(invalid!("ζ has {} entries, τ({m},{n}) = {}", zeta.len(), tau(m, n)));
        }
        Ok(Self { m, n, c0, zeta })
    }

    pub fn eval(&self, a: &DMatrix<f64>) -> f64 {
        debug_assert_eq!(a.shape(), (self.n, self.m));
        self.c0 + self.zeta.iter().zip(all_minors(a)).map(|(z, x)| z * x).sum::<f64>()
    }
}

/// A convex function `g(a_1..a_Q, X_1..X_Q)` of values and minor vectors
/// with a subgradient oracle in the `X` variables.
pub trait ConvexInMinors {
    fn value(&self, a: &[Vec<f64>], x: &[Vec<f64>]) -> f64;
    /// One `ζ_j ∈ R^τ` per sheet.
    fn subgradient(&self, a: &[Vec<f64>], x: &[Vec<f64>]) -> Vec<Vec<f64>>;
}

/// [`ConvexInMinors`] from a pair of closures.
pub struct ConvexFn<V, S> {
    pub value: V,
    pub subgradient: S,
}

impl<V, S> ConvexInMinors for ConvexFn<V, S>
where
    V: Fn(&[Vec<f64>], &[Vec<f64>]) -> f64,
    S: Fn(&[Vec<f64>], &[Vec<f64>]) -> Vec<Vec<f64>>,
{
    fn value(&self, a: &[Vec<f64>], x: &[Vec<f64>]) -> f64 {
        (self.value)(a, x)
    }
    fn subgradient(&self, a: &[Vec<f64>], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (self.subgradient)(a, x)
    }
}

/// Support polyaffine maps `P_j(L) = g(a, M(A))/Q + ⟨ζ_j, M(L) − M(A_j)⟩`
/// touching `f(a, ·) = g(a, M(·))` at `A`. Subgradients are averaged over
/// sheets with equal values so that `P_i = P_j` whenever `a_i = a_j`.
pub fn polyaffine_support(g: &dyn ConvexInMinors, a: &[Vec<f64>], mats: &[DMatrix<f64>]) -> Result<Vec<PolyaffineFn>> {
    let q = a.len();
    if q == 0 || mats.len() != q {
        return Err(invalid!("need Q ≥ 1 values and as many matrices"));
    }
    let (n, m) = mats[0].shape();
    if mats.iter().any(|x| x.shape() != (n, m)) || a.iter().any(|v| v.len() != n) {
        return Err(invalid!("values must lie in R^{n} and matrices be {n}×{m}"));
    }
    let mut class = vec![usize::MAX; q];
    for i in 0..q {
        if class[i] != usize::MAX {
            continue;
        }
        class[i] = i;
        for j in i + 1..q {
            if a[i] == a[j] {
                if mats[i] != mats[j] {
                    return Err(invalid!("a_{i} = a_{j} but A_{i} ≠ A_{j}"));
                }
                class[j] = i;
            }
        }
    }
    let x: Vec<Vec<f64>> = mats.iter().map(all_minors).collect();
    let value = g.value(a, &x);
    let raw = g.subgradient(a, &x);
    let t = tau(m, n);
    if raw.len() != q || raw.iter().any(|z| z.len() != t) {
        return Err(invalid!("subgradient oracle must return {q} vectors of length {t}"));
    }
    (0..q)
        .map(|j| {
            let members: Vec<usize> = (0..q).filter(|&i| class[i] == class[j]).collect();
            let zeta: Vec<f64> = (0..t)
                .map(|c| members.iter().map(|&i| raw[i][c]).sum::<f64>() / members.len() as f64)
                .collect();
            let shift: f64 = zeta.iter().zip(&x[j]).map(|(z, v)| z * v).sum();
            PolyaffineFn::new(m, n, value / q as f64 - shift, zeta)
        })
        .collect()
}

//! Q-integrands `f(x, a_1..a_Q, A_1..A_Q)` and their energies.
//!
//! Matrices are `n × m`. Quadratic forms act on `vec(M)`, the column-major
//! flattening of `M`, so `⟨A M, M⟩ = vec(M)ᵀ A vec(M)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QvarError, Result};
use crate::par;
use crate::qfield::QSheetField;
use crate::quadrature::{simplex_rule, DEFAULT_ORDER};
use crate::rng::stream_rng;

pub trait QIntegrand: Send + Sync {
    fn m(&self) -> usize;
    fn n(&self) -> usize;
    /// Fixed number of sheets, if the integrand only makes sense for one Q.
    fn q(&self) -> Option<usize> {
        None
    }
    fn eval(&self, x: &[f64], values: &[Vec<f64>], grads: &[DMatrix<f64>]) -> f64;
    /// `∂f/∂A_i` for each sheet, when available in closed form.
    fn grad_matrices(&self, _x: &[f64], _values: &[Vec<f64>], _grads: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        None
    }
    /// True when `f` ignores `x` and the values.
    fn gradient_only(&self) -> bool {
        false
    }
}

/// `∂f/∂A_i`, analytic when offered, central differences with step `1e-6` otherwise.
pub fn matrix_gradient(f: &dyn QIntegrand, x: &[f64], values: &[Vec<f64>], grads: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    if let Some(g) = f.grad_matrices(x, values, grads) {
        return g;
    }
    let step = 1e-6;
    let mut work = grads.to_vec();
    (0..grads.len())
        .map(|i| {
            let mut d = DMatrix::zeros(grads[i].nrows(), grads[i].ncols());
            for e in 0..d.len() {
                let orig = work[i][e];
                work[i][e] = orig + step;
                let hi = f.eval(x, values, &work);
                work[i][e] = orig - step;
                let lo = f.eval(x, values, &work);
                work[i][e] = orig;
                d[e] = (hi - lo) / (2.0 * step);
            }
            d
        })
        .collect()
}

fn check_dims(f: &dyn QIntegrand, u: &QSheetField) -> Result<()> {
    if f.m() != u.m() || f.n() != u.n() {
        return Err(invalid!("integrand is for m={}, n={}, field has m={}, n={}", f.m(), f.n(), u.m(), u.n()));
    }
    if let Some(q) = f.q() {
        if q != u.q() {
            return Err(invalid!("integrand is for Q={q}, field has Q={}", u.q()));
        }
    }
    Ok(())
}

/// `F(u) = ∫ f(x, u, Du)` with the default quadrature order.
pub fn energy(f: &dyn QIntegrand, u: &QSheetField) -> Result<f64> {
    energy_with_order(f, u, DEFAULT_ORDER)
}

pub fn energy_with_order(f: &dyn QIntegrand, u: &QSheetField, order: usize) -> Result<f64> {
    check_dims(f, u)?;
    Ok(energy_density_per_simplex(f, u, order).iter().sum())
}

/// Energy of each simplex, in simplex order.
pub fn energy_density_per_simplex(f: &dyn QIntegrand, u: &QSheetField, order: usize) -> Vec<f64> {
    let mesh = u.mesh();
    let vol = mesh.simplex_volume();
    let scale = mesh.h().powi(mesh.dim() as i32);
    let rule = simplex_rule(mesh.dim(), order);
    let centroid = vec![1.0 / (mesh.dim() + 1) as f64; mesh.dim() + 1];
    par::map_range(mesh.num_simplices(), |s| {
        let grads = u.sheet_gradients(s);
        if f.gradient_only() {
            let x = mesh.point_in_simplex(s, &centroid);
            return vol * f.eval(&x, &u.eval_in_simplex(s, &centroid), &grads);
        }
        let mut acc = 0.0;
        for (bary, w) in &rule {
            let x = mesh.point_in_simplex(s, bary);
            acc += w * f.eval(&x, &u.eval_in_simplex(s, bary), &grads);
        }
        acc * scale
    })
}

/// `E(u) = ∫ Σ_i ⟨A Du_i, Du_i⟩`, exact for piecewise-affine fields.
pub fn mattila_energy(a: &QuadraticIntegrand, u: &QSheetField) -> Result<f64> {
    check_dims(a, u)?;
    let vol = u.mesh().simplex_volume();
    Ok((0..u.mesh().num_simplices())
        .map(|s| vol * u.sheet_gradients(s).iter().map(|d| a.form(d)).sum::<f64>())
        .sum())
}

/// Almgren's Dirichlet integrand `Σ_i |A_i|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dirichlet {
    pub m: usize,
    pub n: usize,
}

impl QIntegrand for Dirichlet {
    fn m(&self) -> usize {
        self.m
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, _: &[f64], _: &[Vec<f64>], grads: &[DMatrix<f64>]) -> f64 {
        grads.iter().map(|d| d.norm_squared()).sum()
    }
    fn grad_matrices(&self, _: &[f64], _: &[Vec<f64>], grads: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        Some(grads.iter().map(|d| d * 2.0).collect())
    }
    fn gradient_only(&self) -> bool {
        true
    }
}

/// Mattila's quadratic integrand `Σ_i ⟨A M_i, M_i⟩` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticIntegrand {
    m: usize,
    n: usize,
    a: DMatrix<f64>,
}

impl QuadraticIntegrand {
    /// Symmetrizes `a`, which must be `nm × nm`.
    pub fn new(m: usize, n: usize, a: DMatrix<f64>) -> Result<Self> {
        if m == 0 || n == 0 || a.shape() != (n * m, n * m) {
            return Err(invalid!("quadratic form must be {0}×{0}, got {1:?}", n * m, a.shape()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("quadratic form has non-finite entries"));
        }
        let sym = (&a + a.transpose()) * 0.5;
        Ok(Self { m, n, a: sym })
    }

    pub fn from_rows(m: usize, n: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let k = n * m;
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(invalid!("quadratic form must be given as {k} rows of length {k}"));
        }
        Self::new(m, n, DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Self::new(m, n, DMatrix::identity(n * m, n * m)).expect("valid shape")
    }

    /// The form with `⟨A M, M⟩ = 2 det M` for `2 × 2` matrices.
    pub fn determinant_form() -> Self {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 3)] = 1.0;
        a[(3, 0)] = 1.0;
        a[(1, 2)] = -1.0;
        a[(2, 1)] = -1.0;
        Self::new(2, 2, a).expect("valid shape")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.a.nrows()).map(|i| self.a.row(i).iter().copied().collect()).collect()
    }

    /// `⟨A M, M⟩`.
    pub fn form(&self, mat: &DMatrix<f64>) -> f64 {
        let v = mat.as_slice();
        let mut s = 0.0;
        for j in 0..v.len() {
            let mut row = 0.0;
            for i in 0..v.len() {
                row += self.a[(i, j)] * v[i];
            }
            s += row * v[j];
        }
        s
    }

    /// `A M` as an `n × m` matrix.
    pub fn apply(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        let v = nalgebra::DVector::from_column_slice(mat.as_slice());
        let w = &self.a * v;
        DMatrix::from_column_slice(self.n, self.m, w.as_slice())
    }

    /// Bilinear form `⟨A M, N⟩`.
    pub fn bilinear(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        self.apply(x).dot(y)
    }
}

impl QIntegrand for QuadraticIntegrand {
    fn m(&self) -> usize {
        self.m
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, _: &[f64], _: &[Vec<f64>], grads: &[DMatrix<f64>]) -> f64 {
        grads.iter().map(|d| self.form(d)).sum()
    }
    fn grad_matrices(&self, _: &[f64], _: &[Vec<f64>], grads: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        Some(grads.iter().map(|d| self.apply(d) * 2.0).collect())
    }
    fn gradient_only(&self) -> bool {
        true
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DMatrix<f64>) -> f64 + Send + Sync>;
type MatrixGrad = Arc<dyn Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync>;
type PairFn = Arc<dyn Fn(&[f64], &DMatrix<f64>) -> f64 + Send + Sync>;
type PairGrad = Arc<dyn Fn(&[f64], &DMatrix<f64>) -> DMatrix<f64> + Send + Sync>;

/// Convex increasing `g: [0, ∞) → R` with derivative oracle.
#[derive(Clone)]
pub struct ScalarProfile {
    pub value: ScalarFn,
    pub derivative: Option<ScalarFn>,
}

/// Convex `g: R^{n×m} → R` with subgradient oracle.
#[derive(Clone)]
pub struct MatrixProfile {
    pub value: MatrixFn,
    pub subgradient: Option<MatrixGrad>,
}

/// Polyconvex `g(a, L)` with a subgradient oracle in `L`.
#[derive(Clone)]
pub struct PairProfile {
    pub value: PairFn,
    pub subgradient: Option<PairGrad>,
}

#[derive(Clone)]
pub enum FamilyProfile {
    /// `g(G(L, Q⟦0⟧))`.
    A(ScalarProfile),
    /// `Σ_{i,j} g(L_i − L_j)`.
    B(MatrixProfile),
    /// `Σ_i g(a_i, L_i)`.
    C(PairProfile),
}

/// One of the polyconvex example families.
#[derive(Clone)]
pub struct FamilyIntegrand {
    m: usize,
    n: usize,
    profile: FamilyProfile,
}

/// Builds family (a), (b) or (c); the profile must carry its subgradient oracle.
pub fn polyconvex_family(m: usize, n: usize, profile: FamilyProfile) -> Result<FamilyIntegrand> {
    let has_oracle = match &profile {
        FamilyProfile::A(g) => g.derivative.is_some(),
        FamilyProfile::B(g) => g.subgradient.is_some(),
        FamilyProfile::C(g) => g.subgradient.is_some(),
    };
    if !has_oracle {
        return Err(QvarError::Configuration("polyconvex family profile lacks a subgradient oracle".into()));
    }
    Ok(FamilyIntegrand { m, n, profile })
}

impl FamilyIntegrand {
    pub fn profile(&self) -> &FamilyProfile {
        &self.profile
    }
}

impl QIntegrand for FamilyIntegrand {
    fn m(&self) -> usize {
        self.m
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, _: &[f64], values: &[Vec<f64>], grads: &[DMatrix<f64>]) -> f64 {
        match &self.profile {
            FamilyProfile::A(g) => (g.value)(grads.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt()),
            FamilyProfile::B(g) => {
                let mut s = 0.0;
                for li in grads {
                    for lj in grads {
                        s += (g.value)(&(li - lj));
                    }
                }
                s
            }
            FamilyProfile::C(g) => values.iter().zip(grads).map(|(a, l)| (g.value)(a, l)).sum(),
        }
    }
    fn grad_matrices(&self, _: &[f64], values: &[Vec<f64>], grads: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        match &self.profile {
            FamilyProfile::A(g) => {
                let t = grads.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
                let dg = (g.derivative.as_ref()?)(t);
                Some(grads.iter().map(|d| if t > 0.0 { d * (dg / t) } else { d * 0.0 }).collect())
            }
            FamilyProfile::B(g) => {
                let sub = g.subgradient.as_ref()?;
                Some(
                    (0..grads.len())
                        .map(|k| {
                            let mut d = DMatrix::zeros(self.n, self.m);
                            for j in 0..grads.len() {
                                d += sub(&(&grads[k] - &grads[j]));
                                d -= sub(&(&grads[j] - &grads[k]));
                            }
                            d
                        })
                        .collect(),
                )
            }
            FamilyProfile::C(g) => {
                let sub = g.subgradient.as_ref()?;
                Some(values.iter().zip(grads).map(|(a, l)| sub(a, l)).collect())
            }
        }
    }
    fn gradient_only(&self) -> bool {
        !matches!(self.profile, FamilyProfile::C(_))
    }
}

/// Integrand given by a closure.
pub struct FnIntegrand<F> {
    pub m: usize,
    pub n: usize,
    pub q: Option<usize>,
    pub f: F,
}

impl<F> QIntegrand for FnIntegrand<F>
where
    F: Fn(&[f64], &[Vec<f64>], &[DMatrix<f64>]) -> f64 + Send + Sync,
{
    fn m(&self) -> usize {
        self.m
    }
    fn n(&self) -> usize {
        self.n
    }
    fn q(&self) -> Option<usize> {
        self.q
    }
    fn eval(&self, x: &[f64], values: &[Vec<f64>], grads: &[DMatrix<f64>]) -> f64 {
        (self.f)(x, values, grads)
    }
}

/// `A ↦ f(x0, a, A)` with the point and value arguments pinned.
pub struct FrozenValues<'a> {
    pub inner: &'a dyn QIntegrand,
    pub x: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl QIntegrand for FrozenValues<'_> {
    fn m(&self) -> usize {
        self.inner.m()
    }
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn q(&self) -> Option<usize> {
        Some(self.values.len())
    }
    fn eval(&self, _: &[f64], _: &[Vec<f64>], grads: &[DMatrix<f64>]) -> f64 {
        self.inner.eval(&self.x, &self.values, grads)
    }
    fn grad_matrices(&self, _: &[f64], _: &[Vec<f64>], grads: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        self.inner.grad_matrices(&self.x, &self.values, grads)
    }
    fn gradient_only(&self) -> bool {
        true
    }
}

/// `0 ≤ f(x, a, A) ≤ C (1 + |a|^q + |A|^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthBound {
    pub c: f64,
    pub p: f64,
    pub q: f64,
}

impl GrowthBound {
    /// Applies the exponent rule: `q = 0` if `p > m`, `q = mp/(m−p)` if
    /// `p < m`, and a caller-chosen `q ≥ 1` if `p = m`.
    pub fn new(c: f64, p: f64, m: usize, q_at_critical: Option<f64>) -> Result<Self> {
        if !(c >= 0.0) || !(p >= 1.0) || !p.is_finite() {
            return Err(QvarError::InvalidExponent(format!("need C ≥ 0 and finite p ≥ 1, got C={c}, p={p}")));
        }
        let mf = m as f64;
        let q = if p > mf {
            0.0
        } else if p < mf {
            mf * p / (mf - p)
        } else {
            match q_at_critical {
                Some(q) if q >= 1.0 && q.is_finite() => q,
                _ => {
                    return Err(QvarError::InvalidExponent(format!(
                        "p = m = {m} leaves q free; choose a finite q ≥ 1"
                    )))
                }
            }
        };
        Ok(Self { c, p, q })
    }

    pub fn bound(&self, value_norm: f64, grad_norm: f64) -> f64 {
        let vq = if self.q == 0.0 { 1.0 } else { value_norm.powf(self.q) };
        self.c * (1.0 + vq + grad_norm.powf(self.p))
    }
}

fn random_input(
    rng: &mut impl Rng,
    m: usize,
    n: usize,
    q: usize,
    value_norm: f64,
    grad_norm: f64,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<DMatrix<f64>>) {
    let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut values: Vec<Vec<f64>> = (0..q).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let mut grads: Vec<DMatrix<f64>> = (0..q).map(|_| DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))).collect();
    let vn = values.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let gn = grads.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    values.iter_mut().flatten().for_each(|v| *v *= value_norm / vn);
    grads.iter_mut().for_each(|d| *d *= grad_norm / gn);
    (x, values, grads)
}

/// Samples inputs and permutations; true iff `f` never moves by more than
/// `1e-12·(1 + |f|)` under a simultaneous permutation of `(a_i, A_i)`.
pub fn check_perm_invariance(f: &dyn QIntegrand, q: usize, samples: usize, seed: u64) -> bool {
    let mut rng = stream_rng(seed, 0);
    let mut order: Vec<usize> = (0..q).collect();
    for _ in 0..samples.max(1) {
        let (vn, gn) = (rng_norm(&mut rng), rng_norm(&mut rng));
        let (x, values, grads) = random_input(&mut rng, f.m(), f.n(), q, vn, gn);
        let base = f.eval(&x, &values, &grads);
        for _ in 0..3 {
            order.shuffle(&mut rng);
            let pv: Vec<Vec<f64>> = order.iter().map(|&i| values[i].clone()).collect();
            let pg: Vec<DMatrix<f64>> = order.iter().map(|&i| grads[i].clone()).collect();
            let moved = f.eval(&x, &pv, &pg);
            if !((moved - base).abs() <= 1e-12 * (1.0 + base.abs())) {
                return false;
            }
        }
    }
    true
}

fn rng_norm(rng: &mut impl Rng) -> f64 {
    10f64.powf(rng.random_range(-1.0..1.0))
}

/// True iff `0 ≤ f ≤ C(1 + |a|^q + |A|^p)` on all sampled inputs, with
/// `|a|, |A|` log-uniform in `[1e-3, 1e3]`.
pub fn check_growth(f: &dyn QIntegrand, b: &GrowthBound, q: usize, samples: usize, seed: u64) -> bool {
    let mut rng = stream_rng(seed, 1);
    for _ in 0..samples.max(1) {
        let vn = 10f64.powf(rng.random_range(-3.0..3.0));
        let gn = 10f64.powf(rng.random_range(-3.0..3.0));
        let (x, values, grads) = random_input(&mut rng, f.m(), f.n(), q, vn, gn);
        let v = f.eval(&x, &values, &grads);
        let slack = 1e-12 * (1.0 + v.abs());
        if !(v >= -slack && v <= b.bound(vn, gn) + slack) {
            return false;
        }
    }
    true
}

/// JSON description of an integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    Dirichlet,
    /// Rows of the `nm × nm` matrix acting on column-major `vec(M)`.
    Quadratic { matrix: Vec<Vec<f64>> },
    FamilyA { g: ScalarProfileSpec },
    FamilyB { g: MatrixProfileSpec },
    FamilyC { g: PairProfileSpec },
}

/// `coefficient · t^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarProfileSpec {
    Power { exponent: f64, coefficient: f64 },
}

/// `coefficient · |M|^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixProfileSpec {
    FrobeniusPower { exponent: f64, coefficient: f64 },
}

/// `value_weight · |a|² + coefficient · |L|^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairProfileSpec {
    ValueGradient { value_weight: f64, exponent: f64, coefficient: f64 },
}

fn check_profile(exponent: f64, coefficient: f64) -> Result<()> {
    if !(exponent >= 1.0) || !exponent.is_finite() || !(coefficient >= 0.0) || !coefficient.is_finite() {
        return Err(QvarError::Configuration(format!(
            "profile needs finite exponent ≥ 1 and coefficient ≥ 0, got {exponent}, {coefficient}"
        )));
    }
    Ok(())
}

fn frobenius_power(exponent: f64, coefficient: f64) -> (MatrixFn, MatrixGrad) {
    (
        Arc::new(move |mat: &DMatrix<f64>| coefficient * mat.norm().powf(exponent)),
        Arc::new(move |mat: &DMatrix<f64>| {
            let r = mat.norm();
            if r == 0.0 { mat * 0.0 } else { mat * (coefficient * exponent * r.powf(exponent - 2.0)) }
        }),
    )
}

impl IntegrandSpec {
    pub fn build(&self, m: usize, n: usize) -> Result<Box<dyn QIntegrand>> {
        Ok(match self {
            IntegrandSpec::Dirichlet => Box::new(Dirichlet { m, n }),
            IntegrandSpec::Quadratic { matrix } => {
                Box::new(QuadraticIntegrand::from_rows(m, n, matrix).map_err(|e| QvarError::Configuration(e.to_string()))?)
            }
            IntegrandSpec::FamilyA { g: ScalarProfileSpec::Power { exponent, coefficient } } => {
                let (p, c) = (*exponent, *coefficient);
                check_profile(p, c)?;
                Box::new(polyconvex_family(
                    m,
                    n,
                    FamilyProfile::A(ScalarProfile {
                        value: Arc::new(move |t| c * t.powf(p)),
                        derivative: Some(Arc::new(move |t| if t == 0.0 && p == 1.0 { c } else { c * p * t.powf(p - 1.0) })),
                    }),
                )?)
            }
            IntegrandSpec::FamilyB { g: MatrixProfileSpec::FrobeniusPower { exponent, coefficient } } => {
                check_profile(*exponent, *coefficient)?;
                let (value, sub) = frobenius_power(*exponent, *coefficient);
                Box::new(polyconvex_family(m, n, FamilyProfile::B(MatrixProfile { value, subgradient: Some(sub) }))?)
            }
            IntegrandSpec::FamilyC { g: PairProfileSpec::ValueGradient { value_weight, exponent, coefficient } } => {
                check_profile(*exponent, *coefficient)?;
                if !(*value_weight >= 0.0) {
                    return Err(QvarError::Configuration("value_weight must be ≥ 0".into()));
                }
                let w = *value_weight;
                let (gv, gs) = frobenius_power(*exponent, *coefficient);
                Box::new(polyconvex_family(
                    m,
                    n,
                    FamilyProfile::C(PairProfile {
                        value: Arc::new(move |a, l| w * a.iter().map(|t| t * t).sum::<f64>() + gv(l)),
                        subgradient: Some(Arc::new(move |_, l| gs(l))),
                    }),
                )?)
            }
        })
    }
}

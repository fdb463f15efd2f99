//! Polynomial differential forms on `R^{m+n} = R^m_x × R^n_y` and graph
//! currents of piecewise-affine Q-fields.
//!
//! Variables are ordered `x_0..x_{m−1}, y_0..y_{n−1}`. A term `p dx_I ∧ dy_J`
//! has increasing `I ⊂ {0..m}` and `J ⊂ {0..n}`, with the x-part first. The
//! graph pairing is the honest pullback along `x ↦ (x, u_i(x))`: the term with
//! `I = ᾱ`, `J = β` contributes `sign(ᾱ, α) · M_{αβ}(Du_i)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QvarError, Result};
use crate::minors::{complement, det, enumerate_pairs, PolyaffineFn};
use crate::par;
use crate::qfield::QSheetField;
use crate::qspace::metric_g;
use crate::quadrature::simplex_rule;

/// Default bound on coefficient degrees.
pub const DEFAULT_MAX_DEGREE: u32 = 3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(vec![0; nvars], c)
    }

    pub fn monomial(exponents: Vec<u32>, c: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, c);
        p
    }

    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, exponents: Vec<u32>, c: f64) {
        assert_eq!(exponents.len(), self.nvars, "exponent vector has the wrong length");
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exponents).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(z).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e[var] > 0 {
                let mut f = e.clone();
                f[var] -= 1;
                out.add_term(f, c * e[var] as f64);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Polynomial) {
        for (e, &c) in &other.terms {
            self.add_term(e.clone(), c);
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        let mut out = Self::zero(self.nvars);
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                out.add_term(a.iter().zip(b).map(|(x, y)| x + y).collect(), ca * cb);
            }
        }
        out
    }
}

type TermKey = (Vec<usize>, Vec<usize>);

/// `Σ p_{IJ} dx_I ∧ dy_J` of a fixed degree.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialForm {
    m: usize,
    n: usize,
    degree: usize,
    terms: BTreeMap<TermKey, Polynomial>,
}

fn increasing(s: &[usize], k: usize) -> bool {
    s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&i| i < k)
}

/// Sign of the shuffle that sorts `first ++ second` (disjoint sets).
fn concat_sign(first: &[usize], second: &[usize]) -> f64 {
    let inv: usize = first.iter().map(|&a| second.iter().filter(|&&b| a > b).count()).sum();
    if inv % 2 == 0 { 1.0 } else { -1.0 }
}

fn insert_sorted(s: &[usize], v: usize) -> Vec<usize> {
    let mut out = s.to_vec();
    let pos = out.partition_point(|&x| x < v);
    out.insert(pos, v);
    out
}

impl DifferentialForm {
    pub fn zero(m: usize, n: usize, degree: usize) -> Self {
        Self { m, n, degree, terms: BTreeMap::new() }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &Polynomial)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest coefficient degree.
    pub fn max_coefficient_degree(&self) -> u32 {
        self.terms.values().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// Adds `p dx_I ∧ dy_J`.
    pub fn add_term(&mut self, x_idx: Vec<usize>, y_idx: Vec<usize>, p: Polynomial) -> Result<()> {
        if !increasing(&x_idx, self.m) || !increasing(&y_idx, self.n) {
            return Err(QvarError::InvalidForm(format!("indices {x_idx:?}, {y_idx:?} must be increasing and in range")));
        }
        if x_idx.len() + y_idx.len() != self.degree {
            return Err(QvarError::InvalidForm(format!(
                "term dx{x_idx:?}∧dy{y_idx:?} does not have degree {}",
                self.degree
            )));
        }
        if p.nvars() != self.m + self.n {
            return Err(QvarError::InvalidForm("coefficient has the wrong number of variables".into()));
        }
        let key = (x_idx, y_idx);
        let entry = self.terms.entry(key.clone()).or_insert_with(|| Polynomial::zero(p.nvars()));
        entry.add_assign(&p);
        if entry.is_zero() {
            self.terms.remove(&key);
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = Self::zero(self.m, self.n, self.degree);
        for ((i, j), p) in &self.terms {
            out.add_term(i.clone(), j.clone(), p.scaled(s)).expect("same shape");
        }
        out
    }

    pub fn plus(&self, other: &DifferentialForm) -> Result<Self> {
        if (self.m, self.n, self.degree) != (other.m, other.n, other.degree) {
            return Err(QvarError::InvalidForm("forms of different shape cannot be added".into()));
        }
        let mut out = self.clone();
        for ((i, j), p) in &other.terms {
            out.add_term(i.clone(), j.clone(), p.clone())?;
        }
        Ok(out)
    }

    /// Exterior derivative on polynomial coefficients.
    pub fn exterior_derivative(&self) -> Self {
        let mut out = Self::zero(self.m, self.n, self.degree + 1);
        for ((xi, yj), p) in &self.terms {
            for s in 0..self.m {
                if xi.contains(&s) {
                    continue;
                }
                let dp = p.derivative(s);
                if dp.is_zero() {
                    continue;
                }
                let sign = if xi.iter().filter(|&&i| i < s).count() % 2 == 0 { 1.0 } else { -1.0 };
                out.add_term(insert_sorted(xi, s), yj.clone(), dp.scaled(sign)).expect("valid term");
            }
            for t in 0..self.n {
                if yj.contains(&t) {
                    continue;
                }
                let dp = p.derivative(self.m + t);
                if dp.is_zero() {
                    continue;
                }
                let before = xi.len() + yj.iter().filter(|&&j| j < t).count();
                let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
                out.add_term(xi.clone(), insert_sorted(yj, t), dp.scaled(sign)).expect("valid term");
            }
        }
        out
    }

    /// `ι_E ω / k` for a constant-coefficient closed `k`-form, `E` the Euler
    /// field; then `d` of the result is `ω`.
    pub fn constant_primitive(&self) -> Result<Self> {
        if self.degree == 0 || self.terms.values().any(|p| p.degree() > 0) {
            return Err(QvarError::InvalidForm("primitive needs a constant-coefficient form of degree ≥ 1".into()));
        }
        let nv = self.m + self.n;
        let k = self.degree as f64;
        let mut out = Self::zero(self.m, self.n, self.degree - 1);
        for ((xi, yj), p) in &self.terms {
            let c = p.eval(&vec![0.0; nv]);
            let vars: Vec<usize> = xi.iter().copied().chain(yj.iter().map(|&j| self.m + j)).collect();
            for (r, &v) in vars.iter().enumerate() {
                let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
                let coef = Polynomial::variable(nv, v).scaled(sign * c / k);
                let nx: Vec<usize> = xi.iter().copied().filter(|&i| i != v).collect();
                let ny: Vec<usize> = yj.iter().copied().filter(|&j| self.m + j != v).collect();
                out.add_term(nx, ny, coef)?;
            }
        }
        Ok(out)
    }

    /// Random form with coefficients of degree `≤ max_degree`.
    pub fn random(m: usize, n: usize, degree: usize, max_degree: u32, rng: &mut impl Rng) -> Self {
        let nv = m + n;
        let mut out = Self::zero(m, n, degree);
        for lx in 0..=degree.min(m) {
            let ly = degree - lx;
            if ly > n {
                continue;
            }
            for xi in crate::minors::subsets(m, lx) {
                for yj in crate::minors::subsets(n, ly) {
                    let mut p = Polynomial::zero(nv);
                    for _ in 0..3 {
                        let mut e = vec![0u32; nv];
                        let deg = rng.random_range(0..=max_degree);
                        for _ in 0..deg {
                            e[rng.random_range(0..nv)] += 1;
                        }
                        p.add_term(e, rng.random_range(-1.0..1.0));
                    }
                    out.add_term(xi.clone(), yj, p).expect("valid term");
                }
            }
        }
        out
    }
}

/// The constant `m`-form `η` with `⟨T_u, η⟩ = ∫ Σ_i P(Du_i)`.
pub fn polyaffine_form(p: &PolyaffineFn) -> DifferentialForm {
    let (m, n) = (p.m, p.n);
    let nv = m + n;
    let mut out = DifferentialForm::zero(m, n, m);
    out.add_term((0..m).collect(), vec![], Polynomial::constant(nv, p.c0)).expect("valid term");
    for (pair, &z) in enumerate_pairs(m, n).iter().zip(&p.zeta) {
        let bar = complement(&pair.alpha, m);
        let sign = concat_sign(&bar, &pair.alpha);
        out.add_term(bar, pair.beta.clone(), Polynomial::constant(nv, sign * z)).expect("valid term");
    }
    out
}

fn quad_order(form: &DifferentialForm, dim: usize) -> usize {
    (form.max_coefficient_degree() as usize + dim) / 2 + 1
}

/// Pulls `form` back along one affine sheet with gradient `du` on coordinates
/// `coords` (increasing subset of `{0..m}`) and returns `(coefficient, factor)`
/// pairs whose sum against the coefficient values gives the density.
fn pullback_factors<'a>(
    form: &'a DifferentialForm,
    coords: &[usize],
    du: &DMatrix<f64>,
) -> Vec<(&'a Polynomial, f64)> {
    let mut out = Vec::new();
    for ((xi, yj), p) in form.terms() {
        if !xi.iter().all(|i| coords.contains(i)) {
            continue;
        }
        let rest: Vec<usize> = coords.iter().copied().filter(|c| !xi.contains(c)).collect();
        if rest.len() != yj.len() {
            continue;
        }
        let l = rest.len();
        let minor = det(&DMatrix::from_fn(l, l, |r, c| du[(yj[r], rest[c])]));
        let factor = concat_sign(xi, &rest) * minor;
        if factor != 0.0 {
            out.push((p, factor));
        }
    }
    out
}

fn check_shape(u: &QSheetField, form: &DifferentialForm, degree: usize) -> Result<()> {
    if form.m() != u.m() || form.n() != u.n() {
        return Err(QvarError::InvalidForm(format!(
            "form lives on R^{}×R^{}, field maps R^{} to R^{}",
            form.m(),
            form.n(),
            u.m(),
            u.n()
        )));
    }
    if form.degree() != degree {
        return Err(QvarError::InvalidForm(format!("expected a {degree}-form, got degree {}", form.degree())));
    }
    Ok(())
}

/// `⟨T_u, ω⟩` for an `m`-form, exact for polynomial coefficients.
pub fn pair_graph(u: &QSheetField, form: &DifferentialForm) -> Result<f64> {
    check_shape(u, form, u.m())?;
    let mesh = u.mesh();
    let m = u.m();
    let coords: Vec<usize> = (0..m).collect();
    let rule = simplex_rule(m, quad_order(form, m));
    let scale = mesh.h().powi(m as i32);
    let parts = par::map_range(mesh.num_simplices(), |s| {
        let grads = u.sheet_gradients(s);
        let factors: Vec<_> = grads.iter().map(|d| pullback_factors(form, &coords, d)).collect();
        let mut acc = 0.0;
        for (bary, w) in &rule {
            let x = mesh.point_in_simplex(s, bary);
            for (sheet, vals) in u.eval_in_simplex(s, bary).into_iter().enumerate() {
                let z: Vec<f64> = x.iter().copied().chain(vals).collect();
                acc += w * factors[sheet].iter().map(|(p, f)| f * p.eval(&z)).sum::<f64>();
            }
        }
        acc * scale
    });
    Ok(parts.iter().sum())
}

/// `⟨T_{u,∂C}, ω⟩` for an `(m−1)`-form: the sum over boundary faces, ordered
/// `(−x_0, +x_0, …)` and oriented by the outward normal, of the graph pairing
/// of the restricted field.
pub fn pair_boundary(u: &QSheetField, form: &DifferentialForm) -> Result<f64> {
    check_shape(u, form, u.m().checked_sub(1).ok_or_else(|| invalid!("field has m = 0"))?)?;
    let mesh = u.mesh();
    let m = u.m();
    let rule = simplex_rule(m - 1, quad_order(form, m - 1));
    let scale = mesh.h().powi(m as i32 - 1);
    let mut faces = vec![0.0; 2 * m];
    for s in 0..mesh.num_simplices() {
        let facets = mesh.boundary_facets(s);
        if facets.is_empty() {
            continue;
        }
        let grads = u.sheet_gradients(s);
        for (axis, upper, drop) in facets {
            let coords: Vec<usize> = (0..m).filter(|&c| c != axis).collect();
            let parity = if axis % 2 == 0 { 1.0 } else { -1.0 };
            let orient = if upper { parity } else { -parity };
            let factors: Vec<_> = grads.iter().map(|d| pullback_factors(form, &coords, d)).collect();
            let mut acc = 0.0;
            for (fb, w) in &rule {
                let mut bary = Vec::with_capacity(m + 1);
                let mut it = fb.iter();
                for local in 0..=m {
                    bary.push(if local == drop { 0.0 } else { *it.next().expect("facet coordinate") });
                }
                let x = mesh.point_in_simplex(s, &bary);
                for (sheet, vals) in u.eval_in_simplex(s, &bary).into_iter().enumerate() {
                    let z: Vec<f64> = x.iter().copied().chain(vals).collect();
                    acc += w * factors[sheet].iter().map(|(p, f)| f * p.eval(&z)).sum::<f64>();
                }
            }
            faces[2 * axis + upper as usize] += orient * acc * scale;
        }
    }
    Ok(faces.iter().sum())
}

/// `⟨T_u, dω⟩ − ⟨T_{u,∂C}, ω⟩`.
pub fn stokes_residual(u: &QSheetField, form: &DifferentialForm) -> Result<f64> {
    let d = form.exterior_derivative();
    let inner = pair_graph(u, &d)?;
    Ok(inner - pair_boundary(u, form)?)
}

/// `∫ Σ_i P(Dw1_i) − ∫ Σ_i P(Dw2_i)` for fields with the same boundary trace.
pub fn null_lagrangian_gap(p: &PolyaffineFn, w1: &QSheetField, w2: &QSheetField) -> Result<f64> {
    if w1.domain() != w2.domain() || w1.q() != w2.q() || w1.n() != w2.n() || (p.m, p.n) != (w1.m(), w1.n()) {
        return Err(invalid!("fields and polyaffine map must share domain, Q, m and n"));
    }
    let mut defect: f64 = 0.0;
    for (a, b) in [(w1, w2), (w2, w1)] {
        for v in a.boundary_vertices() {
            let x = a.mesh().vertex_position(v);
            defect = defect.max(metric_g(&a.vertex_values()[v], &b.evaluate(&x)?)?);
        }
    }
    if defect > crate::qfield::BOUNDARY_TOLERANCE {
        return Err(QvarError::InvalidCompetitor(format!("boundary traces differ by {defect:e}")));
    }
    let integral = |w: &QSheetField| -> f64 {
        let vol = w.mesh().simplex_volume();
        (0..w.mesh().num_simplices())
            .map(|s| vol * w.sheet_gradients(s).iter().map(|d| p.eval(d)).sum::<f64>())
            .sum()
    };
    Ok(integral(w1) - integral(w2))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonomialRepr {
    exponents: Vec<u32>,
    coefficient: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyRepr {
    monomials: Vec<MonomialRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    x_idx: Vec<usize>,
    y_idx: Vec<usize>,
    poly: PolyRepr,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormRepr {
    m: usize,
    n: usize,
    degree: usize,
    #[serde(rename = "D")]
    max_degree: u32,
    terms: Vec<TermRepr>,
}

impl Serialize for DifferentialForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FormRepr {
            m: self.m,
            n: self.n,
            degree: self.degree,
            max_degree: self.max_coefficient_degree(),
            terms: self
                .terms
                .iter()
                .map(|((xi, yj), p)| TermRepr {
                    x_idx: xi.clone(),
                    y_idx: yj.clone(),
                    poly: PolyRepr {
                        monomials: p
                            .terms()
                            .map(|(e, &c)| MonomialRepr { exponents: e.clone(), coefficient: c })
                            .collect(),
                    },
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DifferentialForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = FormRepr::deserialize(d)?;
        let nv = r.m + r.n;
        let mut form = DifferentialForm::zero(r.m, r.n, r.degree);
        for t in r.terms {
            let mut p = Polynomial::zero(nv);
            for mono in t.poly.monomials {
                if mono.exponents.len() != nv {
                    return Err(D::Error::custom(format!("exponent vectors must have length m+n = {nv}")));
                }
                if mono.exponents.iter().sum::<u32>() > r.max_degree {
                    return Err(D::Error::custom(format!("monomial exceeds the declared degree D = {}", r.max_degree)));
                }
                p.add_term(mono.exponents, mono.coefficient);
            }
            form.add_term(t.x_idx, t.y_idx, p).map_err(D::Error::custom)?;
        }
        Ok(form)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Cube, Mesh};
    use crate::qspace::QPoint;
    use crate::rng::stream_rng;

    fn unit(m: usize, k: usize) -> Mesh {
        Mesh::new(Cube::centered(m, 1.0), k).unwrap()
    }

    #[test]
    fn volume_form_counts_sheets() {
        let u = QSheetField::from_sheets(unit(2, 2), 3, 1, |x| vec![vec![x[0]], vec![x[1] * 2.0], vec![0.5]]).unwrap();
        let mut w = DifferentialForm::zero(2, 1, 2);
        w.add_term(vec![0, 1], vec![], Polynomial::constant(3, 1.0)).unwrap();
        assert!((pair_graph(&u, &w).unwrap() - 3.0).abs() < 1e-14);
        let mut dy = DifferentialForm::zero(2, 1, 2);
        dy.add_term(vec![0], vec![0], Polynomial::constant(3, 1.0)).unwrap();
        let c = QSheetField::from_sheets(unit(2, 2), 1, 1, |_| vec![vec![0.7]]).unwrap();
        assert_eq!(pair_graph(&c, &dy).unwrap(), 0.0);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let u = QSheetField::from_sheets(unit(1, 4), 1, 1, |x| vec![vec![x[0]]]).unwrap();
        let mut w = DifferentialForm::zero(1, 1, 1);
        w.add_term(vec![0], vec![], Polynomial::variable(2, 1)).unwrap();
        assert!(pair_graph(&u, &w).unwrap().abs() < 1e-16);
        assert!(matches!(pair_graph(&u, &DifferentialForm::zero(1, 1, 0)), Err(QvarError::InvalidForm(_))));
    }

    #[test]
    fn green_area() {
        let u = QSheetField::from_sheets(unit(2, 3), 1, 1, |_| vec![vec![0.0]]).unwrap();
        let mut w = DifferentialForm::zero(2, 1, 1);
        w.add_term(vec![1], vec![], Polynomial::variable(3, 0)).unwrap();
        assert!((pair_boundary(&u, &w).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_evaluation_in_1d() {
        let u = QSheetField::from_sheets(unit(1, 3), 2, 1, |x| vec![vec![x[0] * x[0]], vec![1.0 - x[0]]]).unwrap();
        let mut w = DifferentialForm::zero(1, 1, 0);
        w.add_term(vec![], vec![], Polynomial::monomial(vec![1, 2], 1.0)).unwrap();
        let f = |x: f64, y: f64| x * y * y;
        let expected = f(0.5, 0.25) + f(0.5, 0.5) - f(-0.5, 0.25) - f(-0.5, 1.5);
        assert!((pair_boundary(&u, &w).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn d_squared_is_zero() {
        let mut rng = stream_rng(4, 0);
        for (m, n, k) in [(2, 2, 1), (3, 2, 1), (3, 3, 2), (2, 1, 0)] {
            let w = DifferentialForm::random(m, n, k, 3, &mut rng);
            assert!(w.exterior_derivative().exterior_derivative().is_zero());
        }
        let mut w = DifferentialForm::zero(3, 1, 2);
        w.add_term(vec![1, 2], vec![], Polynomial::variable(4, 3)).unwrap();
        let dw = w.exterior_derivative();
        let (key, p) = dw.terms().next().unwrap();
        assert_eq!(key, &(vec![1, 2], vec![0]));
        assert_eq!(p, &Polynomial::constant(4, 1.0));
    }

    #[test]
    fn stokes_on_branching_field() {
        let mut rng = stream_rng(5, 0);
        let verts: Vec<QPoint> = {
            let mesh = unit(2, 2);
            (0..mesh.num_vertices())
                .map(|v| {
                    let x = mesh.vertex_position(v);
                    QPoint::new(1, &[vec![x[0]], vec![-x[0]]]).unwrap()
                })
                .collect()
        };
        let u = QSheetField::from_vertex_values(unit(2, 2), verts).unwrap();
        for _ in 0..5 {
            let w = DifferentialForm::random(2, 1, 1, 2, &mut rng);
            assert!(stokes_residual(&u, &w).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn primitive_and_polyaffine_pairing() {
        let p = PolyaffineFn::new(2, 2, 0.5, vec![1.0, -2.0, 0.25, 3.0, 1.5]).unwrap();
        let eta = polyaffine_form(&p);
        assert_eq!(eta.constant_primitive().unwrap().exterior_derivative(), eta);
        let u = QSheetField::from_sheets(unit(2, 2), 2, 2, |x| {
            vec![vec![x[0] * x[1], x[0] - x[1]], vec![x[1] * x[1], 2.0 * x[0]]]
        })
        .unwrap();
        let direct: f64 = (0..u.mesh().num_simplices())
            .map(|s| u.mesh().simplex_volume() * u.sheet_gradients(s).iter().map(|d| p.eval(d)).sum::<f64>())
            .sum();
        assert!((pair_graph(&u, &eta).unwrap() - direct).abs() < 1e-13);
    }

    #[test]
    fn determinant_is_null_lagrangian() {
        let mesh = unit(2, 4);
        let p = PolyaffineFn::new(2, 2, 0.0, vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let id = QSheetField::from_sheets(mesh.clone(), 1, 2, |x| vec![x.to_vec()]).unwrap();
        let bump = QSheetField::from_sheets(mesh, 1, 2, |x| {
            let b = (0.25 - x[0] * x[0]) * (0.25 - x[1] * x[1]);
            vec![vec![x[0] + 3.0 * b, x[1] - 5.0 * b * x[0]]]
        })
        .unwrap();
        assert!(null_lagrangian_gap(&p, &id, &bump).unwrap().abs() < 1e-14);
        let only_c0 = PolyaffineFn::new(2, 2, 2.0, vec![0.0; 5]).unwrap();
        assert!(null_lagrangian_gap(&only_c0, &id, &bump).unwrap().abs() < 1e-14);
        let moved = id.map_entries(|_, e| vec![e[0] + 0.1, e[1]]).unwrap();
        assert!(matches!(null_lagrangian_gap(&p, &id, &moved), Err(QvarError::InvalidCompetitor(_))));
    }

    #[test]
    fn json_round_trip() {
        let w = DifferentialForm::random(2, 1, 1, 3, &mut stream_rng(6, 0));
        let s = serde_json::to_string(&w).unwrap();
        let back: DifferentialForm = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }
}
